"""Quantization-error bounds for BSQ and their Monte Carlo check.

``bound_loose`` is the worst case over the sphere: the distance to the
quantized corner is largest when ``u`` lies on a coordinate axis.
``bound_tight`` evaluates the one-dimensional integral obtained by keeping
only the first hyperspherical angle.  Note that this integral is *not*
smaller than the loose bound; both are upper bounds on the expected error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Unsupported
from .quantizer import bsq_quantize

__all__ = [
    "McReport",
    "adaptive_simpson",
    "bound_loose",
    "bound_tight",
    "mc_quant_error",
    "MC_CHUNK",
]

# samples drawn per RNG call; part of the reproducibility contract
MC_CHUNK = 1 << 15


@dataclass(frozen=True)
class McReport:
    mean: float
    stderr: float
    n_samples: int
    seed: int


def bound_loose(L: int) -> float:
    """``sqrt(2 - 2/sqrt(L))``."""
    if L < 1:
        raise Unsupported("L must be >= 1")
    return math.sqrt(max(0.0, 2.0 - 2.0 / math.sqrt(L)))


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=60):
    """Integrate ``f`` over ``[a, b]`` with recursive Simpson refinement."""
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = _simpson(fa, fm, fb, a, b)
    # explicit stack instead of recursion
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa, flm, fm, a, m)
        right = _simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, eps / 2.0, depth + 1))
            stack.append((m, b, fm, frm, fb, right, eps / 2.0, depth + 1))
    return total


def bound_tight(L: int, tol: float = 1e-10) -> float:
    """Integral bound ``c_L * int_0^{pi/2} sqrt(2 - 2 cos(phi)/sqrt(L)) sin(phi)^(L-2) dphi``.

    ``c_L = 2 Gamma(L/2) / (sqrt(pi) Gamma((L-1)/2))`` normalizes the marginal
    density of the first polar angle over the positive orthant.
    """
    if L < 2:
        raise Unsupported("the integral bound needs L >= 2 (Gamma((L-1)/2) diverges at L=1)")
    log_c = math.log(2.0) + math.lgamma(L / 2.0) - 0.5 * math.log(math.pi) - math.lgamma((L - 1) / 2.0)
    c = math.exp(log_c)
    k = 2.0 / math.sqrt(L)
    p = L - 2

    def integrand(phi):
        return math.sqrt(2.0 - k * math.cos(phi)) * math.sin(phi) ** p

    # the integrand concentrates near pi/2 for large L; splitting there keeps refinement local
    a, b = 0.0, 0.5 * math.pi
    knots = [a] + [b - w for w in (8.0 / math.sqrt(L), 2.0 / math.sqrt(L)) if b - w > a] + [b]
    knots = sorted(set(knots))
    return c * sum(adaptive_simpson(integrand, lo, hi, tol) for lo, hi in zip(knots, knots[1:]))


def mc_quant_error(L: int, n_samples: int, seed: int) -> McReport:
    """Monte Carlo estimate of ``E |u - bsq_quantize(u)|`` for ``u`` uniform on the sphere.

    Samples come from ``numpy.random.default_rng(seed)`` (PCG64) as isotropic
    Gaussians drawn in chunks of :data:`MC_CHUNK` rows and normalized, so a
    given ``(L, n_samples, seed)`` always produces the same report.
    """
    if L < 1:
        raise Unsupported("L must be >= 1")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(MC_CHUNK, n_samples - done)
        g = rng.standard_normal((m, L))
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        # exact zero draws have probability zero; guard the division only
        norm[norm == 0] = 1.0
        u = g / norm
        d = np.linalg.norm(u - bsq_quantize(u), axis=1)
        total += float(d.sum())
        total_sq += float(np.dot(d, d))
        done += m
    mean = total / n_samples
    var = max(0.0, (total_sq - n_samples * mean * mean) / (n_samples - 1))
    return McReport(mean=mean, stderr=math.sqrt(var / n_samples), n_samples=n_samples, seed=seed)
