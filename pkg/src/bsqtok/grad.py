"""Straight-through gradients, dense layers, and finite-difference checking.

Only the fixed computation graph of the toy autoencoder is differentiated;
each forward function has a hand-written backward counterpart here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFinite, ShapeMismatch, ZeroNorm
from .quantizer import ZERO_NORM_EPS

__all__ = [
    "GradCheckReport",
    "DenseLayer",
    "normalize_backward",
    "bsq_ste_backward",
    "lfq_ste_backward",
    "finite_diff_grad",
    "grad_check",
    "relative_error",
]


def normalize_backward(v, upstream):
    """Vector-Jacobian product of ``v -> v / |v|`` along the last axis.

    The Jacobian ``(I - u u^T) / |v|`` is symmetric, so this is also the JVP.
    """
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm <= ZERO_NORM_EPS):
        raise ZeroNorm("normalization gradient undefined at the origin")
    u = v / norm
    radial = np.sum(u * g, axis=-1, keepdims=True)
    return (g - u * radial) / norm


def bsq_ste_backward(v, upstream):
    """Gradient through the BSQ straight-through surrogate ``v / (sqrt(L) |v|)``.

    The sign is replaced by the identity, so only the normalization and the
    ``1/sqrt(L)`` scale contribute.
    """
    v = np.asarray(v, dtype=np.float64)
    L = v.shape[-1]
    return normalize_backward(v, upstream) / np.sqrt(L)


def lfq_ste_backward(v, upstream):
    """LFQ's straight-through gradient is the identity."""
    return np.array(upstream, dtype=np.float64, copy=True)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5):
    """Central-difference gradient of a scalar function ``f`` at ``x``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(f(x))
        flat[i] = old - h
        fm = float(f(x))
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFinite(f"f is not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@dataclass(frozen=True)
class GradCheckReport:
    max_abs_err: float
    max_rel_err: float
    passed: bool
    tolerance: float


def grad_check(f, analytic, x, h=1e-5, rtol=1e-4, floor=1e-6) -> GradCheckReport:
    """Compare an analytic gradient against central differences of ``f`` at ``x``."""
    numeric = finite_diff_grad(f, x, h)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise ShapeMismatch(f"analytic gradient shape {analytic.shape} != {numeric.shape}")
    abs_err = float(np.max(np.abs(analytic - numeric), initial=0.0))
    rel_err = float(np.max(relative_error(analytic, numeric, floor), initial=0.0))
    return GradCheckReport(abs_err, rel_err, rel_err <= rtol, rtol)


_ACTIVATIONS = ("tanh", "identity")


@dataclass
class DenseLayer:
    """Affine map followed by ``tanh`` or the identity.

    ``weights`` has shape ``(out, in)``; inputs are batched as ``(N, in)``.
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch("bias length must equal the number of weight rows")

    @classmethod
    def init(cls, n_in, n_out, activation="identity", rng=None, scale=None):
        rng = np.random.default_rng() if rng is None else rng
        scale = 1.0 / np.sqrt(n_in) if scale is None else scale
        return cls(rng.normal(0.0, scale, (n_out, n_in)), np.zeros(n_out), activation)

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ShapeMismatch(f"layer expects {self.n_in} inputs, got {x.shape[-1]}")
        pre = x @ self.weights.T + self.bias
        out = np.tanh(pre) if self.activation == "tanh" else pre
        self._cache = (x, out)
        return out

    def backward(self, upstream):
        """Return ``(grad_input, {"weights": ..., "bias": ...})`` for the last forward."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        x, out = self._cache
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != out.shape:
            raise ShapeMismatch(f"upstream shape {g.shape} != output shape {out.shape}")
        if self.activation == "tanh":
            g = g * (1.0 - out * out)
        x2 = x.reshape(-1, self.n_in)
        g2 = g.reshape(-1, self.n_out)
        grads = {"weights": g2.T @ x2, "bias": g2.sum(axis=0)}
        return g @ self.weights, grads


def dense_forward(layer: DenseLayer, x):
    return layer.forward(x)


def dense_backward(layer: DenseLayer, x, upstream):
    """Stateless backward: re-runs the forward on ``x`` then back-propagates ``upstream``."""
    layer.forward(x)
    return layer.backward(upstream)


__all__ += ["dense_forward", "dense_backward"]
