"""Token-stream compression, statistics, and image tokenization pipelines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import PATCH, decode, encode
from .coder import BitStream, ac_decode, ac_encode
from .errors import BadCheckpoint, BadDimensions, CorruptStream, GeometryMismatch, Unsupported
from .formats import CompressedFile, TokenFile, image_to_patches, patches_to_image
from .models import MODEL_CONTEXT, make_model

__all__ = [
    "StatsReport",
    "tokens_to_symbols",
    "symbols_to_tokens",
    "compress",
    "decompress",
    "stats",
    "tokenize_images",
    "detokenize",
]


def tokens_to_symbols(codes, L: int, model_id: int):
    """Symbols fed to the coder: whole tokens for the context model, else bits (LSB first)."""
    codes = np.asarray(codes, dtype=np.int64)
    if model_id == MODEL_CONTEXT:
        return codes
    return ((codes[:, None] >> np.arange(L)) & 1).reshape(-1)


def symbols_to_tokens(symbols, L: int, model_id: int):
    symbols = np.asarray(symbols, dtype=np.int64)
    if model_id == MODEL_CONTEXT:
        return symbols
    bits = symbols.reshape(-1, L)
    return (bits << np.arange(L)).sum(axis=1) if bits.size else np.zeros(0, dtype=np.int64)


def _n_symbols(N, L, model_id):
    return N if model_id == MODEL_CONTEXT else N * L


def compress(tokens: TokenFile, model_id: int, order: int = 1) -> CompressedFile:
    if model_id != MODEL_CONTEXT:
        order = 0
    model = make_model(model_id, tokens.L, order)
    stream = ac_encode(tokens_to_symbols(tokens.codes, tokens.L, model_id), model)
    return CompressedFile(
        model_id, order, tokens.L, tokens.T, tokens.H, tokens.W, tokens.p, tokens.N, stream.to_bytes()
    )


def decompress(comp: CompressedFile) -> TokenFile:
    try:
        model = make_model(comp.model_id, comp.L, comp.order)
    except (Unsupported, ValueError) as exc:
        raise CorruptStream(f"invalid model parameters in header: {exc}") from exc
    stream, _ = BitStream.from_bytes(comp.payload)
    symbols = ac_decode(stream, model, _n_symbols(comp.N, comp.L, comp.model_id))
    codes = symbols_to_tokens(symbols, comp.L, comp.model_id)
    return TokenFile(comp.L, comp.T, comp.H, comp.W, comp.p, codes)


@dataclass(frozen=True)
class StatsReport:
    N: int
    L: int
    pixels: int
    raw_bits: int
    raw_bpp: float
    coded_bits: int | None = None
    container_bits: int | None = None
    bpp: float | None = None
    savings: float | None = None

    def to_kv(self) -> str:
        lines = []
        for key, value in self.__dict__.items():
            if value is None:
                continue
            lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
        return "\n".join(lines)

    def to_table(self) -> str:
        rows = [(k, v) for k, v in self.__dict__.items() if v is not None]
        width = max(len(k) for k, _ in rows)
        out = [f"{'metric':<{width}}  value", f"{'-' * width}  -----"]
        for k, v in rows:
            out.append(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
        return "\n".join(out)


def stats(tokens: TokenFile, comp: CompressedFile | None = None) -> StatsReport:
    """Raw and coded sizes; bpp counts ``p x p`` pixels per token.

    ``coded_bits`` is the arithmetic-coded payload length; ``container_bits``
    is the whole compressed file including headers.
    """
    pixels = tokens.T * tokens.H * tokens.p * tokens.W * tokens.p
    raw_bits = tokens.N * tokens.L
    raw_bpp = raw_bits / pixels if pixels else 0.0
    if comp is None:
        return StatsReport(tokens.N, tokens.L, pixels, raw_bits, raw_bpp)
    if comp.geometry != tokens.geometry or comp.N != tokens.N:
        raise GeometryMismatch("compressed file geometry differs from the token file")
    stream, _ = BitStream.from_bytes(comp.payload)
    coded = stream.n_bits
    container = 8 * len(comp.to_bytes())
    bpp = coded / pixels if pixels else 0.0
    savings = 1.0 - coded / raw_bits if raw_bits else 0.0
    return StatsReport(tokens.N, tokens.L, pixels, raw_bits, raw_bpp, coded, container, bpp, savings)


def _require_tokenizer(model):
    if model.quantizer not in ("bsq", "lfq"):
        raise BadCheckpoint(f"tokenization needs a BSQ or LFQ bottleneck, checkpoint has {model.quantizer!r}")


def tokenize_images(model, images, p: int = PATCH) -> TokenFile:
    """Tokenize equally sized grayscale frames into one token file."""
    _require_tokenizer(model)
    if p != PATCH:
        raise BadDimensions(f"the toy model works on {PATCH}x{PATCH} patches")
    images = [np.asarray(im, dtype=np.float64) for im in images]
    if not images:
        raise BadDimensions("no input frames")
    h, w = images[0].shape
    if any(im.shape != (h, w) for im in images):
        raise BadDimensions("all frames must share one size")
    if h % p or w % p:
        raise BadDimensions(f"frame {h}x{w} not divisible by patch size {p}")
    codes = [encode(model, image_to_patches(im, p)) for im in images]
    return TokenFile(model.L, len(images), h // p, w // p, p, np.concatenate(codes))


def detokenize(model, tokens: TokenFile):
    """Reconstruct every frame of a token file; returns a list of ``(H*p, W*p)`` arrays."""
    _require_tokenizer(model)
    if tokens.L != model.L:
        raise BadCheckpoint(f"token file has L={tokens.L}, model expects L={model.L}")
    per_frame = tokens.H * tokens.W
    frames = []
    for t in range(tokens.T):
        patches = decode(model, tokens.codes[t * per_frame : (t + 1) * per_frame])
        frames.append(patches_to_image(patches, tokens.H, tokens.W, tokens.p))
    return frames
