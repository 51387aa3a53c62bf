"""Next-symbol probability models for arithmetic coding.

Every model turns its history into an integer :class:`FreqTable` over a
power-of-two ``scale``.  Encoder and decoder each own an identically
initialized instance and call ``predict`` then ``update`` once per symbol,
so both sides see the same table at every step.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange, Unsupported

__all__ = [
    "DEFAULT_SCALE",
    "MAX_SCALE",
    "MODEL_UNIFORM",
    "MODEL_ADAPTIVE_BIT",
    "MODEL_CONTEXT",
    "MODEL_NAMES",
    "FreqTable",
    "scale_for",
    "counts_to_table",
    "uniform_table",
    "UniformModel",
    "AdaptiveBitModel",
    "ContextModel",
    "make_model",
    "stream_bits_lower_bound",
]

DEFAULT_SCALE = 1 << 14
MAX_SCALE = 1 << 16

MODEL_UNIFORM = 0
MODEL_ADAPTIVE_BIT = 1
MODEL_CONTEXT = 2
MODEL_NAMES = {"uniform": MODEL_UNIFORM, "adaptive-bit": MODEL_ADAPTIVE_BIT, "context": MODEL_CONTEXT}


@dataclass(frozen=True)
class FreqTable:
    """Cumulative integer frequencies; symbol ``s`` owns ``[cumulative[s], cumulative[s+1])``."""

    cumulative: np.ndarray
    scale: int

    def check(self):
        """Raise ``ValueError`` unless the table is a valid coding distribution."""
        c = np.asarray(self.cumulative)
        if c[0] != 0 or c[-1] != self.scale or np.any(np.diff(c) < 1):
            raise ValueError("cumulative frequencies must start at 0, end at scale and increase strictly")
        return self

    @property
    def K(self) -> int:
        return len(self.cumulative) - 1

    def low(self, s: int) -> int:
        return int(self.cumulative[s])

    def high(self, s: int) -> int:
        return int(self.cumulative[s + 1])

    def freq(self, s: int) -> int:
        return self.high(s) - self.low(s)

    def prob(self, s: int) -> float:
        return self.freq(s) / self.scale

    def find(self, target: int) -> int:
        """Symbol whose interval contains ``target``."""
        return int(np.searchsorted(self.cumulative, target, side="right")) - 1


def scale_for(K: int) -> int:
    """Smallest power of two >= K and >= the default scale, capped at 2^16."""
    if K < 1:
        raise ValueError("alphabet must have at least one symbol")
    if K > MAX_SCALE:
        raise Unsupported(f"alphabet of {K} symbols exceeds the maximum scale {MAX_SCALE}")
    return max(DEFAULT_SCALE, 1 << max(0, math.ceil(math.log2(K))))


def counts_to_table(counts, scale: int) -> FreqTable:
    """Quantize positive counts to frequencies summing exactly to ``scale``.

    Every symbol gets ``1 + floor(count * (scale - K) / total)``; the few
    leftover units go to the most frequent symbol (lowest index on ties).
    """
    if len(counts) == 2:
        # binary fast path, same arithmetic as the general case
        c0, c1 = int(counts[0]), int(counts[1])
        total = c0 + c1
        f0 = 1 + c0 * (scale - 2) // total
        f1 = 1 + c1 * (scale - 2) // total
        if c1 > c0:
            f1 = scale - f0
        else:
            f0 = scale - f1
        return FreqTable(np.array([0, f0, scale], dtype=np.int64), scale)
    counts = np.asarray(counts, dtype=np.int64)
    K = counts.size
    if K > scale:
        raise Unsupported(f"{K} symbols do not fit in scale {scale}")
    total = int(counts.sum())
    freqs = 1 + (counts * (scale - K)) // total
    freqs[int(np.argmax(counts))] += scale - int(freqs.sum())
    cumulative = np.zeros(K + 1, dtype=np.int64)
    np.cumsum(freqs, out=cumulative[1:])
    return FreqTable(cumulative, scale)


def uniform_table(K: int, scale: int | None = None) -> FreqTable:
    scale = scale_for(K) if scale is None else scale
    freqs = np.full(K, scale // K, dtype=np.int64)
    freqs[: scale % K] += 1
    cumulative = np.zeros(K + 1, dtype=np.int64)
    np.cumsum(freqs, out=cumulative[1:])
    return FreqTable(cumulative, scale)


class _Model:
    kind = ""
    model_id = -1
    K = 0

    def _check(self, symbol):
        if not 0 <= symbol < self.K:
            raise OutOfRange(f"symbol {symbol} outside [0, {self.K})")

    def clone(self):
        return copy.deepcopy(self)


class UniformModel(_Model):
    kind = "uniform"
    model_id = MODEL_UNIFORM

    def __init__(self, K: int, scale: int | None = None):
        self.K = K
        self.scale = scale_for(K) if scale is None else scale
        self._table = uniform_table(K, self.scale)

    def context(self):
        return None

    def predict(self, context=None) -> FreqTable:
        return self._table

    def update(self, symbol: int, context=None):
        self._check(symbol)

    def state(self):
        return (self.kind, self.K, self.scale)


class AdaptiveBitModel(_Model):
    """Independent Laplace-smoothed Bernoulli per bit position.

    Tokens are coded as their ``L`` bits, least significant first; bit
    position ``i`` of every token shares one count pair.
    """

    kind = "adaptive-bit"
    model_id = MODEL_ADAPTIVE_BIT

    def __init__(self, L: int, scale: int = DEFAULT_SCALE):
        if L < 1:
            raise ValueError("need at least one bit position")
        self.K = 2
        self.L = L
        self.scale = scale
        self.counts = np.ones((L, 2), dtype=np.int64)
        self.position = 0

    def context(self):
        return self.position % self.L

    def predict(self, context=None) -> FreqTable:
        ctx = self.context() if context is None else context
        return counts_to_table(self.counts[ctx], self.scale)

    def update(self, symbol: int, context=None):
        self._check(symbol)
        ctx = self.context() if context is None else context
        self.counts[ctx, symbol] += 1
        self.position += 1

    def state(self):
        return (self.kind, self.L, self.scale, self.position, self.counts.tobytes())


class ContextModel(_Model):
    """Order-``k`` adaptive model: Laplace counts keyed by the previous ``k`` symbols."""

    kind = "context"
    model_id = MODEL_CONTEXT

    def __init__(self, K: int, order: int = 1, scale: int | None = None):
        if order < 0:
            raise ValueError("context order must be >= 0")
        self.K = K
        self.order = order
        self.scale = scale_for(K) if scale is None else scale
        self.counts: dict[tuple, np.ndarray] = {}
        self.history: deque = deque(maxlen=order) if order else deque(maxlen=0)
        self._uniform = uniform_table(K, self.scale)

    def context(self):
        return tuple(self.history)

    def predict(self, context=None) -> FreqTable:
        ctx = self.context() if context is None else tuple(context)
        counts = self.counts.get(ctx)
        if counts is None:
            return self._uniform
        return counts_to_table(counts, self.scale)

    def update(self, symbol: int, context=None):
        self._check(symbol)
        ctx = self.context() if context is None else tuple(context)
        counts = self.counts.get(ctx)
        if counts is None:
            counts = self.counts[ctx] = np.ones(self.K, dtype=np.int64)
        counts[symbol] += 1
        if self.order:
            self.history.append(symbol)

    def state(self):
        return (
            self.kind,
            self.K,
            self.order,
            self.scale,
            tuple(self.history),
            tuple((k, v.tobytes()) for k, v in sorted(self.counts.items())),
        )


def make_model(model_id: int, L: int, order: int = 1):
    """Fresh model for a token stream of ``L``-bit codes.

    Uniform and adaptive-bit models code tokens bit by bit (``K = 2``); the
    context model codes whole tokens (``K = 2^L``, so ``L <= 16``).
    """
    if model_id == MODEL_UNIFORM:
        return UniformModel(2)
    if model_id == MODEL_ADAPTIVE_BIT:
        return AdaptiveBitModel(L)
    if model_id == MODEL_CONTEXT:
        if L > 16:
            raise Unsupported("token-level context model needs L <= 16; use the adaptive-bit model")
        return ContextModel(1 << L, order)
    raise Unsupported(f"unknown model id {model_id}")


def stream_bits_lower_bound(model, symbols) -> float:
    """Ideal code length ``sum(-log2 p)`` under the model's own integer tables.

    ``model`` is treated as an initial state and is not modified.
    """
    m = model.clone()
    bits = 0.0
    for s in symbols:
        s = int(s)
        table = m.predict()
        bits -= math.log2(table.freq(s) / table.scale)
        m.update(s)
    return bits
