"""Hard quantizers: binary spherical (BSQ), lookup-free (LFQ) and nearest-neighbour VQ.

All functions accept a single vector of shape ``(L,)`` or a batch of shape
``(..., L)`` and work along the last axis.  Bit ``i`` of a token code
corresponds to dimension ``i`` of the projected vector (dimension 0 is the
least significant bit), and a coordinate that is exactly zero maps to bit 1,
the same convention the quantizer uses for ``sign(0)``.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyCodebook, OutOfRange, ShapeMismatch, Unsupported, ZeroNorm

__all__ = [
    "MAX_BITS",
    "ZERO_NORM_EPS",
    "project_to_sphere",
    "sign_pos",
    "bsq_quantize",
    "encode_token",
    "encode_tokens",
    "pack_signs",
    "decode_token",
    "decode_tokens",
    "code_bits",
    "lfq_quantize",
    "vq_quantize",
]

MAX_BITS = 63
ZERO_NORM_EPS = 1e-12


def sign_pos(x):
    """Elementwise sign with ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def project_to_sphere(v):
    """Scale ``v`` to unit Euclidean norm along the last axis.

    Raises
    ------
    ZeroNorm
        If any vector has norm ``<= 1e-12``.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm <= ZERO_NORM_EPS):
        raise ZeroNorm("cannot project a (near) zero vector onto the sphere")
    return v / norm


def bsq_quantize(u):
    """Map a unit vector to the nearest corner of the hypercube inscribed in the sphere."""
    u = np.asarray(u, dtype=np.float64)
    L = u.shape[-1]
    return sign_pos(u) / np.sqrt(L)


def _check_bits(L):
    if L < 1:
        raise Unsupported(f"need at least one bit, got L={L}")
    if L > MAX_BITS:
        raise Unsupported(f"L={L} exceeds the {MAX_BITS}-bit token limit")


def pack_signs(x):
    """Pack ``x_i >= 0`` of each row into an integer, dimension 0 least significant."""
    x = np.asarray(x, dtype=np.float64)
    L = x.shape[-1]
    _check_bits(L)
    bits = (x >= 0).astype(np.int64)
    weights = np.left_shift(np.int64(1), np.arange(L, dtype=np.int64))
    return (bits * weights).sum(axis=-1)


def encode_tokens(v):
    """Pack the BSQ sign pattern of each row of ``v`` into an integer code.

    Signs are read from ``v / |v|``, the same vector :func:`bsq_quantize`
    sees, so an entry that underflows to zero during normalization packs as
    bit 1 exactly like its quantized value.  Zero rows pack to all ones.
    Returns an ``int64`` array with the leading shape of ``v``.
    """
    v = np.asarray(v, dtype=np.float64)
    _check_bits(v.shape[-1])
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    u = np.divide(v, norm, out=v.copy(), where=norm > 0)
    return pack_signs(u)


def encode_token(v) -> int:
    """Pack a single vector into its token code (see :func:`encode_tokens`)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeMismatch(f"expected a 1-D vector, got shape {v.shape}")
    return int(encode_tokens(v))


def code_bits(k, L):
    """Unpack integer codes into a ``(..., L)`` array of 0/1 bits."""
    _check_bits(L)
    k = np.asarray(k, dtype=np.int64)
    shifts = np.arange(L, dtype=np.int64)
    return (k[..., None] >> shifts) & 1


def decode_tokens(k, L):
    """Map integer codes to quantized unit vectors, shape ``(..., L)``."""
    _check_bits(L)
    k = np.asarray(k, dtype=np.int64)
    if np.any(k < 0) or np.any(k >= (1 << L)):
        raise OutOfRange(f"token code outside [0, 2^{L})")
    return (2.0 * code_bits(k, L) - 1.0) / np.sqrt(L)


def decode_token(k: int, L: int):
    """Inverse of :func:`encode_token` on the quantized sphere."""
    _check_bits(L)
    k = int(k)
    if not 0 <= k < (1 << L):
        raise OutOfRange(f"token {k} outside [0, 2^{L})")
    return decode_tokens(np.int64(k), L)


def lfq_quantize(v):
    """Lookup-free quantization: per-dimension sign into ``{-1, +1}``."""
    return sign_pos(np.asarray(v, dtype=np.float64))


def vq_quantize(z, codebook):
    """Nearest codebook row to ``z`` in Euclidean distance.

    Ties go to the lowest index.  Accepts a single vector or a batch; for a
    batch the returned index is an array.

    Returns
    -------
    (index, codevector)
    """
    codebook = np.asarray(codebook, dtype=np.float64)
    if codebook.ndim != 2 or codebook.shape[0] == 0:
        raise EmptyCodebook("codebook must be a non-empty K x d matrix")
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != codebook.shape[1]:
        raise ShapeMismatch(
            f"latent dim {z.shape[-1]} does not match codebook dim {codebook.shape[1]}"
        )
    # squared distances computed exactly (no |a|^2 - 2ab + |b|^2 expansion) so ties are real ties
    diff = z[..., None, :] - codebook
    dist = np.einsum("...kd,...kd->...k", diff, diff)
    index = np.argmin(dist, axis=-1)  # argmin returns the first minimum
    if index.ndim == 0:
        index = int(index)
    return index, codebook[index]
