"""Integer arithmetic coder with 32-bit interval registers.

The encoder keeps ``[low, high]`` inside a 32-bit window.  Whenever both ends
share their top bit that bit is emitted (E1/E2); when the interval straddles
the midpoint inside the middle half it is expanded and an underflow bit is
deferred (E3).  ``finish`` emits the pending bits plus two disambiguating
bits, and the decoder reads zeros past the end of the stream.

Because the decoder performs the same renormalization steps as the
encoder, it knows exactly which bits the encoder wrote for the symbols it
decoded; a stream that differs from them in any bit or in length is
reported as corrupt.

Bitstream serialization: an unsigned LEB128 bit count followed by
``ceil(n_bits / 8)`` bytes, bits packed most significant first, tail padded
with zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CorruptStream, UncodableSymbol

__all__ = [
    "PRECISION",
    "BitStream",
    "ArithmeticEncoder",
    "ArithmeticDecoder",
    "ac_encode",
    "ac_decode",
    "encode_varint",
    "decode_varint",
]

PRECISION = 32
FULL = 1 << PRECISION
MASK = FULL - 1
HALF = FULL >> 1
QUARTER = FULL >> 2
THREE_QUARTERS = HALF + QUARTER


def encode_varint(n: int) -> bytes:
    if n < 0:
        raise ValueError("varint must be nonnegative")
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf, offset: int = 0):
    """Return ``(value, next_offset)``."""
    value = 0
    shift = 0
    while True:
        if offset >= len(buf):
            raise CorruptStream("truncated length prefix")
        byte = buf[offset]
        offset += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, offset
        shift += 7
        if shift > 63:
            raise CorruptStream("length prefix too long")


@dataclass(frozen=True)
class BitStream:
    data: bytes
    n_bits: int

    @classmethod
    def from_bits(cls, bits) -> "BitStream":
        bits = list(bits)
        buf = bytearray((len(bits) + 7) // 8)
        for i, b in enumerate(bits):
            if b:
                buf[i >> 3] |= 0x80 >> (i & 7)
        return cls(bytes(buf), len(bits))

    def bits(self):
        return [(self.data[i >> 3] >> (7 - (i & 7))) & 1 for i in range(self.n_bits)]

    def bit(self, i: int) -> int:
        """Bit ``i``, or 0 beyond the end of the stream."""
        if i >= self.n_bits:
            return 0
        return (self.data[i >> 3] >> (7 - (i & 7))) & 1

    def to_bytes(self) -> bytes:
        return encode_varint(self.n_bits) + self.data

    @classmethod
    def from_bytes(cls, buf, offset: int = 0, exact: bool = True):
        """Parse a serialized stream; returns ``(BitStream, next_offset)``."""
        n_bits, offset = decode_varint(buf, offset)
        n_bytes = (n_bits + 7) // 8
        end = offset + n_bytes
        if end > len(buf):
            raise CorruptStream(f"stream declares {n_bits} bits but only {len(buf) - offset} bytes remain")
        if exact and end != len(buf):
            raise CorruptStream("trailing bytes after bit stream")
        data = bytes(buf[offset:end])
        if n_bits % 8 and data[-1] & (0xFF >> (n_bits % 8)):
            raise CorruptStream("nonzero padding bits")
        return cls(data, n_bits), end


class ArithmeticEncoder:
    def __init__(self):
        self.low = 0
        self.high = MASK
        self.pending = 0
        self.count = 0
        self._bits: list[int] = []

    def _emit(self, bit: int):
        self._bits.append(bit)
        if self.pending:
            self._bits.extend([bit ^ 1] * self.pending)
            self.pending = 0

    def encode(self, table, symbol: int):
        if not 0 <= symbol < table.K or table.freq(symbol) < 1:
            raise UncodableSymbol(f"symbol {symbol} has zero probability")
        rng = self.high - self.low + 1
        total = table.scale
        self.high = self.low + rng * table.high(symbol) // total - 1
        self.low = self.low + rng * table.low(symbol) // total
        self.count += 1
        assert self.low < self.high
        while True:
            if self.high < HALF:
                self._emit(0)
            elif self.low >= HALF:
                self._emit(1)
                self.low -= HALF
                self.high -= HALF
            elif self.low >= QUARTER and self.high < THREE_QUARTERS:
                self.pending += 1
                self.low -= QUARTER
                self.high -= QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
        assert self.high - self.low >= QUARTER

    def finish(self) -> BitStream:
        # nothing coded: the empty stream already identifies the (empty) message
        if self.count == 0:
            return BitStream(b"", 0)
        self.pending += 1
        self._emit(0 if self.low < QUARTER else 1)
        return BitStream.from_bits(self._bits)


class ArithmeticDecoder:
    """Decoder that also replays the encoder's output bits.

    Every bit the encoder would have written for the symbols decoded so far
    is compared with the stream, and :meth:`finish` checks the flush bits and
    the total length.  The flush leaves a dyadic interval inside the final
    coding interval, so encodings of distinct messages of one length are
    prefix-free and a truncated stream can never pass as another message.
    """

    def __init__(self, stream: BitStream):
        self.stream = stream
        self.low = 0
        self.high = MASK
        self.shifts = 0
        self.count = 0
        self.value = 0
        self.pending = 0
        self.out_pos = 0
        for i in range(PRECISION):
            self.value = (self.value << 1) | stream.bit(i)

    def _expect(self, bit: int):
        if self.out_pos >= self.stream.n_bits:
            raise CorruptStream("stream ended before the decoded symbols were fully encoded")
        if self.stream.bit(self.out_pos) != bit:
            raise CorruptStream(f"bit {self.out_pos} disagrees with the encoding of the decoded symbols")
        self.out_pos += 1

    def _replay(self, bit: int):
        self._expect(bit)
        for _ in range(self.pending):
            self._expect(bit ^ 1)
        self.pending = 0

    def decode(self, table) -> int:
        rng = self.high - self.low + 1
        total = table.scale
        offset = self.value - self.low
        if offset < 0 or self.value > self.high:
            raise CorruptStream("code value left the coding interval")
        target = ((offset + 1) * total - 1) // rng
        symbol = table.find(target)
        if not 0 <= symbol < table.K:
            raise CorruptStream("interval search failed")
        self.high = self.low + rng * table.high(symbol) // total - 1
        self.low = self.low + rng * table.low(symbol) // total
        while True:
            if self.high < HALF:
                self._replay(0)
            elif self.low >= HALF:
                self._replay(1)
                self.low -= HALF
                self.high -= HALF
                self.value -= HALF
            elif self.low >= QUARTER and self.high < THREE_QUARTERS:
                self.pending += 1
                self.low -= QUARTER
                self.high -= QUARTER
                self.value -= QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
            self.value = (self.value << 1) | self.stream.bit(PRECISION + self.shifts)
            self.shifts += 1
        self.count += 1
        return symbol

    def finish(self):
        """Check the flush bits and that nothing follows them."""
        if self.count:
            self.pending += 1
            self._replay(0 if self.low < QUARTER else 1)
        if self.out_pos != self.stream.n_bits:
            raise CorruptStream(
                f"stream has {self.stream.n_bits} bits but the decoded symbols account for {self.out_pos}"
            )


def ac_encode(symbols, model) -> BitStream:
    """Encode ``symbols``, advancing ``model`` exactly as the decoder will."""
    enc = ArithmeticEncoder()
    for s in symbols:
        s = int(s)
        table = model.predict()
        if not 0 <= s < table.K:
            raise UncodableSymbol(f"symbol {s} outside alphabet of size {table.K}")
        enc.encode(table, s)
        model.update(s)
    return enc.finish()


def ac_decode(stream: BitStream, model, n_symbols: int):
    """Decode ``n_symbols`` symbols; ``model`` must match the encoder's initial state."""
    dec = ArithmeticDecoder(stream)
    out = []
    for _ in range(n_symbols):
        s = dec.decode(model.predict())
        model.update(s)
        out.append(s)
    dec.finish()
    return out
