"""On-disk formats: token files, compressed containers, model checkpoints, PGM/PPM.

All integers are little-endian.

Token file (``.bsqt``)::

    offset  size  field
    0       4     magic b"BSQT"
    4       2     version (u16) = 1
    6       1     L, bits per token (u8, 1..63)
    7       1     reserved, 0
    8       4     T, frames (u32)
    12      4     H, token rows per frame (u32)
    16      4     W, token columns per frame (u32)
    20      2     p, patch size in pixels (u16)
    22      2     reserved, 0
    24      8     N = T * H * W (u64)
    32      N*B   codes, B = ceil(L / 8) bytes each, little-endian

Compressed file (``.bsqc``)::

    0       4     magic b"BSQC"
    4       2     version (u16) = 1
    6       1     model id (0 uniform, 1 adaptive-bit, 2 context)
    7       1     context order k (u8; 0 unless model id is 2)
    8       1     L (u8)
    9       1     reserved, 0
    10      2     p (u16)
    12      4     T (u32)
    16      4     H (u32)
    20      4     W (u32)
    24      8     N (u64)
    32      ...   arithmetic-coded bit stream (LEB128 bit count + packed bits)

Checkpoint (``.bsqm``)::

    0       4     magic b"BSQM"
    4       2     version (u16) = 1
    6       1     quantizer (0 bsq, 1 lfq, 2 vq, 3 none)
    7       1     reserved, 0
    8       2     L (u16)
    10      2     d (u16)
    12      2     hidden (u16)
    14      2     reserved, 0
    16      4     K, VQ codebook size (u32)
    20      8     tau (f64)
    28      4     tensor count (u32)
    32      ...   tensors, each: name length (u16), UTF-8 name, ndim (u8),
                  dims (u32 each), float64 data in C order
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadCheckpoint, BadDimensions, BadMagic, CorruptStream, GeometryMismatch, VersionMismatch

__all__ = [
    "VERSION",
    "TokenFile",
    "CompressedFile",
    "atomic_write",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_bytes",
    "read_pnm",
    "write_pgm",
    "image_to_patches",
    "patches_to_image",
]

VERSION = 1
TOKEN_MAGIC = b"BSQT"
COMPRESSED_MAGIC = b"BSQC"
CHECKPOINT_MAGIC = b"BSQM"

_TOKEN_HEADER = struct.Struct("<4sHBBIIIHHQ")
_COMPRESSED_HEADER = struct.Struct("<4sHBBBBHIIIQ")
_CHECKPOINT_HEADER = struct.Struct("<4sHBBHHHHIdI")
assert _TOKEN_HEADER.size == 32 and _COMPRESSED_HEADER.size == 32 and _CHECKPOINT_HEADER.size == 32

_QUANTIZER_IDS = {"bsq": 0, "lfq": 1, "vq": 2, "none": 3}


def atomic_write(path, data: bytes):
    """Write ``data`` to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_magic_version(magic, version, expected):
    if magic != expected:
        raise BadMagic(f"expected magic {expected!r}, found {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"unsupported format version {version} (expected {VERSION})")


def _check_prefix(buf, expected, header_size):
    """Validate magic and version, then require a complete header."""
    if len(buf) < 6:
        raise BadMagic(f"file too short to carry the {expected!r} magic and version")
    magic, version = struct.unpack_from("<4sH", buf)
    _check_magic_version(magic, version, expected)
    if len(buf) < header_size:
        raise CorruptStream("file shorter than its header")


@dataclass(frozen=True)
class TokenFile:
    L: int
    T: int
    H: int
    W: int
    p: int
    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "codes", codes)
        if not 1 <= self.L <= 63:
            raise BadDimensions(f"L={self.L} outside [1, 63]")
        if codes.size != self.T * self.H * self.W:
            raise GeometryMismatch(f"{codes.size} codes for a {self.T}x{self.H}x{self.W} grid")
        if codes.size and (codes.min() < 0 or codes.max() >= (1 << self.L)):
            raise BadDimensions(f"token code outside [0, 2^{self.L})")

    @property
    def N(self) -> int:
        return int(self.codes.size)

    @property
    def geometry(self):
        return (self.L, self.T, self.H, self.W, self.p)

    @property
    def code_bytes(self) -> int:
        return (self.L + 7) // 8

    def to_bytes(self) -> bytes:
        header = _TOKEN_HEADER.pack(TOKEN_MAGIC, VERSION, self.L, 0, self.T, self.H, self.W, self.p, 0, self.N)
        width = self.code_bytes
        raw = self.codes.astype("<u8").view(np.uint8).reshape(-1, 8)[:, :width]
        return header + raw.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "TokenFile":
        _check_prefix(buf, TOKEN_MAGIC, _TOKEN_HEADER.size)
        _, _, L, _, T, H, W, p, _, N = _TOKEN_HEADER.unpack_from(buf)
        if N != T * H * W:
            raise GeometryMismatch(f"header count {N} != {T}*{H}*{W}")
        width = (L + 7) // 8
        body = buf[_TOKEN_HEADER.size :]
        if len(body) != N * width:
            raise CorruptStream(f"expected {N * width} code bytes, found {len(body)}")
        padded = np.zeros((N, 8), dtype=np.uint8)
        padded[:, :width] = np.frombuffer(body, dtype=np.uint8).reshape(N, width)
        codes = padded.view("<u8").reshape(-1).astype(np.int64)
        return cls(L, T, H, W, p, codes)

    def save(self, path):
        atomic_write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "TokenFile":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class CompressedFile:
    model_id: int
    order: int
    L: int
    T: int
    H: int
    W: int
    p: int
    N: int
    payload: bytes  # serialized BitStream

    @property
    def geometry(self):
        return (self.L, self.T, self.H, self.W, self.p)

    def to_bytes(self) -> bytes:
        header = _COMPRESSED_HEADER.pack(
            COMPRESSED_MAGIC, VERSION, self.model_id, self.order, self.L, 0, self.p,
            self.T, self.H, self.W, self.N,
        )
        return header + self.payload

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CompressedFile":
        _check_prefix(buf, COMPRESSED_MAGIC, _COMPRESSED_HEADER.size)
        _, _, model_id, order, L, _, p, T, H, W, N = _COMPRESSED_HEADER.unpack_from(buf)
        if N != T * H * W:
            raise GeometryMismatch(f"header count {N} != {T}*{H}*{W}")
        return cls(model_id, order, L, T, H, W, p, N, bytes(buf[_COMPRESSED_HEADER.size :]))

    def save(self, path):
        atomic_write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "CompressedFile":
        return cls.from_bytes(Path(path).read_bytes())


def checkpoint_bytes(model) -> bytes:
    tensors = [(f"{layer}.{name}", arr) for layer, name, arr in model.parameters()]
    if model.codebook is not None:
        tensors.append(("codebook", model.codebook))
    K = 0 if model.codebook is None else model.codebook.shape[0]
    out = [
        _CHECKPOINT_HEADER.pack(
            CHECKPOINT_MAGIC, VERSION, _QUANTIZER_IDS[model.quantizer], 0,
            model.L, model.d, model.hidden, 0, K, float(model.tau), len(tensors),
        )
    ]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_checkpoint(model, path):
    atomic_write(path, checkpoint_bytes(model))


def load_checkpoint(path_or_bytes):
    """Rebuild a :class:`~bsqtok.autoencoder.ToyModel` from a checkpoint."""
    from .autoencoder import TrainConfig, init_model

    buf = path_or_bytes if isinstance(path_or_bytes, (bytes, bytearray)) else Path(path_or_bytes).read_bytes()
    try:
        magic, version, qid, _, L, d, hidden, _, K, tau, count = _CHECKPOINT_HEADER.unpack_from(buf)
    except struct.error as exc:
        raise BadCheckpoint("checkpoint shorter than its header") from exc
    try:
        _check_magic_version(magic, version, CHECKPOINT_MAGIC)
    except (BadMagic, VersionMismatch) as exc:
        raise BadCheckpoint(str(exc)) from exc
    names = {v: k for k, v in _QUANTIZER_IDS.items()}
    if qid not in names:
        raise BadCheckpoint(f"unknown quantizer id {qid}")
    try:
        config = TrainConfig(quantizer=names[qid], L=L, d=d, hidden=hidden, K=max(K, 1), tau=tau)
    except ValueError as exc:
        raise BadCheckpoint(f"inconsistent checkpoint header: {exc}") from exc
    model = init_model(config, np.random.default_rng(0))
    slots = {f"{layer}.{name}": arr for layer, name, arr in model.parameters()}
    if model.codebook is not None:
        slots["codebook"] = model.codebook
    off = _CHECKPOINT_HEADER.size
    seen = set()
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = bytes(buf[off : off + n]).decode("utf-8")
            off += n
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) * 8
            if off + size > len(buf):
                raise BadCheckpoint(f"tensor {name!r} truncated")
            arr = np.frombuffer(buf, dtype="<f8", count=size // 8, offset=off).reshape(shape)
            off += size
            if name not in slots or slots[name].shape != arr.shape:
                raise BadCheckpoint(f"unexpected tensor {name!r} with shape {shape}")
            slots[name][...] = arr
            seen.add(name)
    except (struct.error, UnicodeDecodeError) as exc:
        raise BadCheckpoint("malformed tensor record") from exc
    if seen != set(slots) or off != len(buf):
        raise BadCheckpoint("checkpoint tensors do not match the model layout")
    return model


def _read_token(data: bytes, pos: int):
    """Next whitespace-delimited header token, skipping ``#`` comments."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise BadDimensions("truncated PNM header")
    return data[start:pos], pos


def read_pnm(path_or_bytes):
    """Read a binary PGM (P5) or PPM (P6) image as float grayscale in ``[0, 1]``.

    Color images are converted with ITU-R BT.601 luma weights.  Returns an
    ``(height, width)`` float64 array.
    """
    data = path_or_bytes if isinstance(path_or_bytes, (bytes, bytearray)) else Path(path_or_bytes).read_bytes()
    data = bytes(data)
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise BadMagic(f"only binary PGM/PPM (P5/P6) are supported, found {magic!r}")
    width, pos = _read_token(data, pos)
    height, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    width, height, maxval = int(width), int(height), int(maxval)
    if not 0 < maxval < 65536 or width < 1 or height < 1:
        raise BadDimensions("invalid PNM header values")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = width * height * channels
    need = count * dtype.itemsize
    if len(data) - pos < need:
        raise BadDimensions("PNM pixel data truncated")
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float64) / maxval
    if channels == 1:
        return pixels.reshape(height, width)
    rgb = pixels.reshape(height, width, 3)
    return rgb @ np.array([0.299, 0.587, 0.114])


def write_pgm(path, image, maxval: int = 255):
    """Write a float image in ``[0, 1]`` (clipped) as an 8- or 16-bit binary PGM."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    h, w = image.shape
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    pixels = np.rint(image * maxval).astype(dtype)
    atomic_write(path, f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + pixels.tobytes())


def image_to_patches(image, p: int = 8):
    """Split an ``(H, W)`` image into row-major ``p x p`` patches, shape ``(H/p * W/p, p*p)``."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if h % p or w % p:
        raise BadDimensions(f"image {h}x{w} is not divisible by patch size {p}")
    return image.reshape(h // p, p, w // p, p).transpose(0, 2, 1, 3).reshape(-1, p * p)


def patches_to_image(patches, rows: int, cols: int, p: int = 8):
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape != (rows * cols, p * p):
        raise BadDimensions(f"{patches.shape} patches do not form a {rows}x{cols} grid")
    return patches.reshape(rows, cols, p, p).transpose(0, 2, 1, 3).reshape(rows * p, cols * p)
