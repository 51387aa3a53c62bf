"""A desk-scale autoencoder with a swappable quantization bottleneck.

Patches are 8x8 grayscale, flattened to 64 values in ``[0, 1]``.  The
network is::

    x -> tanh(Dense 64->h) -> Dense h->d -> Dense d->L  (v)
      -> bottleneck -> Dense L->d -> tanh(Dense d->h) -> Dense h->64

where the bottleneck is BSQ (normalize then sign / sqrt(L)), LFQ (sign), VQ
(nearest row of a fixed random codebook in the L-dim space) or nothing.
Gradients are written out by hand and the optimizer is plain SGD.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import entropy as ent
from .errors import Diverged, ShapeMismatch, UnknownKind
from .grad import DenseLayer, bsq_ste_backward, normalize_backward
from .quantizer import (
    bsq_quantize,
    decode_tokens,
    encode_tokens,
    lfq_quantize,
    pack_signs,
    project_to_sphere,
    vq_quantize,
)

__all__ = [
    "PATCH",
    "PATCH_DIM",
    "QUANTIZERS",
    "DATASET_KINDS",
    "TrainConfig",
    "TrainReport",
    "ToyModel",
    "Forward",
    "LossTerms",
    "init_model",
    "forward",
    "total_loss",
    "backward",
    "loss_and_grads",
    "encode",
    "decode",
    "train",
    "code_usage",
    "make_synthetic_dataset",
]

PATCH = 8
PATCH_DIM = PATCH * PATCH
QUANTIZERS = ("bsq", "lfq", "vq", "none")
DATASET_KINDS = ("low-rank", "gabor", "checker")
LAYER_NAMES = ("enc1", "enc2", "down", "up", "dec1", "dec2")


@dataclass
class TrainConfig:
    quantizer: str = "bsq"
    L: int = 8
    d: int = 16
    hidden: int = 32
    K: int = 256
    tau: float = 2.0
    gamma: float = 1.0
    weight_entropy: float = 0.1
    weight_commit: float = 0.0
    learning_rate: float = 0.1
    batch_size: int = 32
    steps: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.quantizer not in QUANTIZERS:
            raise UnknownKind(f"quantizer must be one of {QUANTIZERS}, got {self.quantizer!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.weight_entropy < 0 or self.weight_commit < 0 or self.gamma < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.d < self.L:
            raise ValueError("latent dimension d must be >= L")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass
class ToyModel:
    quantizer: str
    L: int
    d: int
    hidden: int
    tau: float
    layers: dict[str, DenseLayer]
    codebook: np.ndarray | None = None

    def parameters(self):
        """Yield ``(layer_name, param_name, array)`` in a fixed order."""
        for name in LAYER_NAMES:
            layer = self.layers[name]
            yield name, "weights", layer.weights
            yield name, "bias", layer.bias


@dataclass
class Forward:
    x: np.ndarray
    recon: np.ndarray
    v: np.ndarray
    q: np.ndarray  # bottleneck value fed to the decoder
    u: np.ndarray | None = None  # BSQ only
    hard: np.ndarray | None = None  # quantized value, for the commitment term
    soft: np.ndarray | None = None  # per-dim soft assignment (BSQ, LFQ)
    tokens: np.ndarray | None = None


@dataclass
class LossTerms:
    total: float
    mse: float
    entropy: float
    commit: float


@dataclass
class TrainReport:
    config: dict
    loss_curve: list[dict] = field(default_factory=list)
    initial_mse: float = float("nan")
    final_mse: float = float("nan")
    code_usage: float = float("nan")


def init_model(config: TrainConfig, rng=None) -> ToyModel:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    h, d, L = config.hidden, config.d, config.L
    layers = {
        "enc1": DenseLayer.init(PATCH_DIM, h, "tanh", rng),
        "enc2": DenseLayer.init(h, d, "identity", rng),
        "down": DenseLayer.init(d, L, "identity", rng),
        "up": DenseLayer.init(L, d, "identity", rng),
        "dec1": DenseLayer.init(d, h, "tanh", rng),
        "dec2": DenseLayer.init(h, PATCH_DIM, "identity", rng),
    }
    codebook = None
    if config.quantizer == "vq":
        codebook = rng.normal(0.0, 1.0, (config.K, L))
    return ToyModel(config.quantizer, L, d, h, config.tau, layers, codebook)


def _bottleneck(model: ToyModel, v, surrogate: bool):
    """Return ``(q, u, hard, soft, tokens)`` for the configured quantizer."""
    kind = model.quantizer
    if kind == "none":
        return v, None, None, None, None
    if kind == "bsq":
        u = project_to_sphere(v)
        hard = bsq_quantize(u)
        q = u / np.sqrt(model.L) if surrogate else hard
        return q, u, hard, ent.soft_assign(u, model.tau), encode_tokens(v)
    if kind == "lfq":
        hard = lfq_quantize(v)
        q = v if surrogate else hard
        return q, None, hard, ent.lfq_soft_assign_factorized(v, model.tau), pack_signs(v)
    index, hard = vq_quantize(v, model.codebook)
    q = v if surrogate else hard
    return q, None, hard, None, np.asarray(index)


def forward(model: ToyModel, x, surrogate: bool = False) -> Forward:
    """Run the autoencoder on a batch of flattened patches.

    With ``surrogate=True`` the decoder sees the straight-through surrogate
    instead of the quantized value; its gradient is what :func:`backward`
    computes, which makes it the function to finite-difference.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != PATCH_DIM:
        raise ShapeMismatch(f"expected batch of shape (N, {PATCH_DIM}), got {x.shape}")
    ly = model.layers
    z = ly["enc2"].forward(ly["enc1"].forward(x))
    v = ly["down"].forward(z)
    q, u, hard, soft, tokens = _bottleneck(model, v, surrogate)
    recon = ly["dec2"].forward(ly["dec1"].forward(ly["up"].forward(q)))
    return Forward(x, recon, v, q, u, hard, soft, tokens)


def _commit_parts(model: ToyModel, fw: Forward):
    """Unquantized bottleneck paired with its (gradient-blocked) quantized value."""
    if model.quantizer == "none":
        return None, None
    side = fw.u if model.quantizer == "bsq" else fw.v
    return side, fw.hard


def total_loss(fw: Forward, model: ToyModel, config: TrainConfig) -> LossTerms:
    mse = float(np.mean((fw.recon - fw.x) ** 2))
    entropy = 0.0
    if fw.soft is not None:
        entropy = ent.entropy_loss(fw.soft, config.gamma)
    commit = 0.0
    side, hard = _commit_parts(model, fw)
    if side is not None:
        commit = float(np.mean(np.linalg.norm(hard - side, axis=-1)))
    total = mse + config.weight_entropy * entropy + config.weight_commit * commit
    return LossTerms(total, mse, entropy, commit)


def backward(fw: Forward, model: ToyModel, config: TrainConfig):
    """Gradients of :func:`total_loss` for every parameter, keyed by ``(layer, param)``.

    Must follow the :func:`forward` call that produced ``fw``.
    """
    ly = model.layers
    grads = {}
    n = fw.x.shape[0]
    g = 2.0 * (fw.recon - fw.x) / fw.recon.size
    for name in ("dec2", "dec1", "up"):
        g, pg = ly[name].backward(g)
        grads[name] = pg
    g_q = g

    # gradient on the side of the bottleneck that the soft and commit terms see
    side_grad = 0.0
    if fw.soft is not None and config.weight_entropy > 0:
        p = fw.soft
        dlogit = ent.entropy_loss_grad(p, config.gamma) * p * (1.0 - p)
        scale = 2.0 * model.tau / np.sqrt(model.L) if model.quantizer == "bsq" else 4.0 * model.tau
        side_grad = side_grad + config.weight_entropy * scale * dlogit
    side, hard = _commit_parts(model, fw)
    if side is not None and config.weight_commit > 0:
        diff = side - hard
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        unit = np.divide(diff, dist, out=np.zeros_like(diff), where=dist > 0)
        side_grad = side_grad + config.weight_commit * unit / n

    if model.quantizer == "bsq":
        g_v = bsq_ste_backward(fw.v, g_q)
        if not np.isscalar(side_grad):
            g_v = g_v + normalize_backward(fw.v, side_grad)
    else:
        g_v = g_q + side_grad

    g = g_v
    for name in ("down", "enc2", "enc1"):
        g, pg = ly[name].backward(g)
        grads[name] = pg
    return grads


def loss_and_grads(model: ToyModel, x, config: TrainConfig, surrogate: bool = False):
    fw = forward(model, x, surrogate)
    terms = total_loss(fw, model, config)
    return terms, backward(fw, model, config), fw


def encode(model: ToyModel, x):
    """Token codes for each patch (BSQ/LFQ sign patterns, or VQ indices)."""
    if model.quantizer == "none":
        raise UnknownKind("a model without a quantizer has no tokens")
    return forward(model, x).tokens


def decode(model: ToyModel, tokens):
    """Reconstruct patches from stored token codes."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if model.quantizer == "bsq":
        q = decode_tokens(tokens, model.L)
    elif model.quantizer == "lfq":
        q = 2.0 * ((tokens[..., None] >> np.arange(model.L)) & 1) - 1.0
    elif model.quantizer == "vq":
        q = model.codebook[tokens]
    else:
        raise UnknownKind("a model without a quantizer has no tokens")
    ly = model.layers
    return ly["dec2"].forward(ly["dec1"].forward(ly["up"].forward(q)))


def code_usage(tokens, L: int | None = None, vocab_size: int | None = None) -> float:
    """Distinct codes seen divided by ``min(vocab, len(tokens))``, vocab defaulting to ``2^L``."""
    tokens = np.asarray(tokens).reshape(-1)
    if tokens.size == 0:
        raise ValueError("code usage of an empty token sequence is undefined")
    vocab = vocab_size if vocab_size is not None else (1 << L)
    return len(np.unique(tokens)) / min(vocab, tokens.size)


def _vocab(config: TrainConfig):
    return config.K if config.quantizer == "vq" else 1 << config.L


def train(config: TrainConfig, dataset, model: ToyModel | None = None):
    """Fit the toy model with minibatch SGD.

    Minibatches are drawn with replacement from ``numpy.random.default_rng(config.seed)``
    after the model is initialized from the same generator, so the whole run is
    a deterministic function of ``config`` and ``dataset``.

    Returns
    -------
    (ToyModel, TrainReport)
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (N, 64) array")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = init_model(config, rng)
    report = TrainReport(config=asdict(config))
    report.initial_mse = float(np.mean((forward(model, data).recon - data) ** 2))
    lr = config.learning_rate
    for step in range(config.steps):
        idx = rng.integers(0, data.shape[0], config.batch_size)
        terms, grads, _ = loss_and_grads(model, data[idx], config)
        if not np.isfinite(terms.total):
            raise Diverged(f"loss became non-finite at step {step}; lower the learning rate")
        report.loss_curve.append(asdict(terms))
        if lr != 0:
            for name, pg in grads.items():
                layer = model.layers[name]
                layer.weights -= lr * pg["weights"]
                layer.bias -= lr * pg["bias"]
    fw = forward(model, data)
    report.final_mse = float(np.mean((fw.recon - data) ** 2))
    if fw.tokens is not None:
        report.code_usage = code_usage(fw.tokens, vocab_size=_vocab(config))
    return model, report


def make_synthetic_dataset(kind: str, n: int, seed: int, rank: int = 4):
    """Deterministic 8x8 grayscale patches in ``[0, 1]``, shape ``(n, 64)``.

    ``low-rank``: nonnegative products of ``(n, rank)`` and ``(rank, 64)`` factors,
    so the patch matrix has rank at most ``rank``.
    ``gabor``: Gaussian-windowed gratings with random orientation, frequency and phase.
    ``checker``: a 2-pixel checkerboard or its inverse, nothing else.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "low-rank":
        a = rng.uniform(0.0, 1.0, (n, rank))
        b = rng.uniform(0.0, 1.0, (rank, PATCH_DIM))
        return a @ b / rank
    if kind == "gabor":
        yy, xx = np.mgrid[0:PATCH, 0:PATCH].astype(np.float64) - (PATCH - 1) / 2.0
        theta = rng.uniform(0.0, np.pi, (n, 1, 1))
        freq = rng.uniform(0.1, 0.4, (n, 1, 1))
        phase = rng.uniform(0.0, 2.0 * np.pi, (n, 1, 1))
        sigma = rng.uniform(2.0, 4.0, (n, 1, 1))
        carrier = np.cos(2.0 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        window = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
        return (0.5 + 0.5 * carrier * window).reshape(n, PATCH_DIM)
    if kind == "checker":
        yy, xx = np.mgrid[0:PATCH, 0:PATCH]
        base = (((yy // 2) + (xx // 2)) % 2).astype(np.float64).reshape(PATCH_DIM)
        flip = rng.integers(0, 2, n)[:, None]
        return np.where(flip == 1, 1.0 - base, base)
    raise UnknownKind(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
