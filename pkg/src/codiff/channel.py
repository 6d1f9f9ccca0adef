"""Bit-level lossy handoff of intermediate latents."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .diffusion import Latent

HEADER = struct.Struct("<IBdd")
HEADER_BITS = HEADER.size * 8


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class QuantizationSpec:
    bits: int = 8
    lo: float = -4.0
    hi: float = 4.0

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise ChannelError(f"bits per element must be in [1, 16], got {self.bits}")
        if not self.lo < self.hi:
            raise ChannelError("quantization range needs lo < hi")

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1


@dataclass(frozen=True)
class ChannelModel:
    """Memoryless binary channel.

    ``kind`` is one of ``fixed`` (bit error probability ``p``), ``awgn`` or
    ``rayleigh`` (BPSK at linear ``snr``; mean SNR for Rayleigh).
    ``bandwidth_hz`` is only used for latency accounting.
    """

    kind: str
    p: float = 0.0
    snr: float = 0.0
    bandwidth_hz: float | None = None

    def __post_init__(self):
        if self.kind == "fixed":
            if not 0.0 <= self.p <= 1.0:
                raise ChannelError(f"bit error probability must be in [0, 1], got {self.p}")
        elif self.kind in ("awgn", "rayleigh"):
            if not self.snr > 0:
                raise ChannelError(f"snr must be positive, got {self.snr}")
        else:
            raise ChannelError(f"unknown channel kind {self.kind!r}")

    @classmethod
    def fixed(cls, p: float, bandwidth_hz=None) -> "ChannelModel":
        return cls("fixed", p=p, bandwidth_hz=bandwidth_hz)

    @classmethod
    def awgn(cls, snr: float, bandwidth_hz=None) -> "ChannelModel":
        return cls("awgn", snr=snr, bandwidth_hz=bandwidth_hz)

    @classmethod
    def rayleigh(cls, snr: float, bandwidth_hz=None) -> "ChannelModel":
        return cls("rayleigh", snr=snr, bandwidth_hz=bandwidth_hz)

    @property
    def has_snr(self) -> bool:
        return self.kind != "fixed"


@dataclass(frozen=True)
class BitStream:
    payload: np.ndarray  # uint8, MSB-first
    count: int
    qspec: QuantizationSpec
    step_index: int | None = None

    def __post_init__(self):
        payload = np.array(self.payload, dtype=np.uint8).ravel()
        if payload.size != (self.count * self.qspec.bits + 7) // 8:
            raise ChannelError("payload length does not match element count and bit width")
        payload.setflags(write=False)
        object.__setattr__(self, "payload", payload)

    @property
    def nbits(self) -> int:
        return self.count * self.qspec.bits

    def to_bytes(self) -> bytes:
        q = self.qspec
        return HEADER.pack(self.count, q.bits, q.lo, q.hi) + self.payload.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BitStream":
        if len(blob) < HEADER.size:
            raise ChannelError("truncated bitstream header")
        count, bits, lo, hi = HEADER.unpack_from(blob)
        qspec = QuantizationSpec(bits, lo, hi)
        body = np.frombuffer(blob, dtype=np.uint8, offset=HEADER.size)
        if body.size != (count * bits + 7) // 8:
            raise ChannelError(f"bitstream payload is {body.size} bytes, header implies {(count * bits + 7) // 8}")
        return cls(body, count, qspec)

    def payload_bits(self) -> int:
        """Bits on the wire including the header."""
        return HEADER_BITS + self.payload.size * 8


def payload_bits(count: int, qspec: QuantizationSpec | None) -> int:
    """Wire size of a handoff; ``qspec=None`` means raw float64 transfer."""
    if qspec is None:
        return count * 64
    return HEADER_BITS + ((count * qspec.bits + 7) // 8) * 8


def quantize(latent: Latent, qspec: QuantizationSpec) -> BitStream:
    codes = kernels.quantize_codes(latent.data, qspec.lo, qspec.hi, qspec.bits)
    return BitStream(kernels.pack_codes(codes, qspec.bits), latent.data.size, qspec, latent.t)


def decode_codes(bits: BitStream) -> np.ndarray:
    return kernels.unpack_codes(bits.payload, bits.count, bits.qspec.bits)


def dequantize(bits: BitStream, qspec: QuantizationSpec, dims: tuple[int, int],
               step_index: int | None = None) -> Latent:
    w, h = dims
    if bits.count != w * h:
        raise ChannelError(f"bitstream carries {bits.count} elements, dims need {w * h}")
    if bits.qspec != qspec:
        raise ChannelError("bitstream was encoded with a different quantization spec")
    codes = decode_codes(bits).astype(np.float64)
    values = qspec.lo + (codes / qspec.levels) * (qspec.hi - qspec.lo)
    t = step_index if step_index is not None else bits.step_index
    return Latent(values, w, h, 0 if t is None else t)


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ber(model: ChannelModel) -> float:
    if model.kind == "fixed":
        return float(model.p)
    if math.isinf(model.snr):
        return 0.0
    if model.kind == "awgn":
        return q_function(math.sqrt(2.0 * model.snr))
    return 0.5 * (1.0 - math.sqrt(model.snr / (1.0 + model.snr)))


def transmit(bits: BitStream, model: ChannelModel, rng: np.random.Generator) -> tuple[BitStream, int]:
    """Flip every payload bit independently with probability ``ber(model)``."""
    p = ber(model)
    flips = rng.random(bits.nbits) < p
    flip_count = int(flips.sum())
    if flip_count == 0:
        return bits, 0
    mask = np.packbits(flips)
    out = np.bitwise_xor(bits.payload, mask)
    return BitStream(out, bits.count, bits.qspec, bits.step_index), flip_count


def hamming(a: BitStream, b: BitStream) -> int:
    return int(np.unpackbits(np.bitwise_xor(a.payload, b.payload)).sum())


@dataclass(frozen=True)
class Link:
    """Quantize -> transmit -> dequantize path for a handoff latent."""

    model: ChannelModel
    qspec: QuantizationSpec = QuantizationSpec()

    def carry(self, latent: Latent, rng: np.random.Generator) -> tuple[Latent, int]:
        sent = quantize(latent, self.qspec)
        received, flips = transmit(sent, self.model, rng)
        return dequantize(received, self.qspec, latent.dims, latent.t), flips
