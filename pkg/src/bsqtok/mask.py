"""Blockwise causal attention masks for frame-major token sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange

__all__ = ["BlockMask", "blockwise_causal_mask", "prefix_restriction", "frame_of"]


def frame_of(i, tokens_per_frame):
    return np.asarray(i) // tokens_per_frame


@dataclass(frozen=True)
class BlockMask:
    """``allow[i, j]`` is true iff token ``i`` may attend to token ``j``."""

    allow: np.ndarray
    T: int
    tokens_per_frame: int

    @property
    def n(self) -> int:
        return self.T * self.tokens_per_frame

    def allows(self, i: int, j: int) -> bool:
        """O(1) predicate equivalent to ``allow[i, j]``."""
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise OutOfRange(f"token index outside [0, {self.n})")
        return j // self.tokens_per_frame <= i // self.tokens_per_frame

    def to_pbm(self) -> bytes:
        """Binary PBM (P4) image: black pixels are allowed positions."""
        rows = np.packbits(self.allow.astype(np.uint8), axis=1)
        return f"P4\n{self.n} {self.n}\n".encode("ascii") + rows.tobytes()


def blockwise_causal_mask(T: int, tokens_per_frame: int) -> BlockMask:
    if T < 1 or tokens_per_frame < 1:
        raise OutOfRange("T and tokens_per_frame must be >= 1")
    frames = np.arange(T * tokens_per_frame) // tokens_per_frame
    allow = frames[None, :] <= frames[:, None]
    allow.setflags(write=False)
    return BlockMask(allow, T, tokens_per_frame)


def prefix_restriction(mask: BlockMask, t: int) -> BlockMask:
    """Mask for the first ``t`` frames only (variable-length input)."""
    if not 1 <= t <= mask.T:
        raise OutOfRange(f"t={t} outside [1, {mask.T}]")
    n = t * mask.tokens_per_frame
    allow = mask.allow[:n, :n].copy()
    allow.setflags(write=False)
    return BlockMask(allow, t, mask.tokens_per_frame)
