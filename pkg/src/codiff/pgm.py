"""Binary PGM (P5, maxval 255) read/write."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np


class PGMError(ValueError):
    pass


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and scale to 0..255 with round-half-up."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def encode(image: np.ndarray) -> bytes:
    pix = to_bytes(image)
    if pix.ndim != 2:
        raise PGMError("PGM images must be 2-D")
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode(image))


_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def decode(blob: bytes) -> np.ndarray:
    m = _HEADER.match(blob)
    if m is None:
        raise PGMError("not a binary P5 PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PGMError(f"only maxval 255 is supported, got {maxval}")
    body = blob[m.end():]
    if len(body) != w * h:
        raise PGMError(f"PGM payload has {len(body)} bytes, expected {w * h}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def read_pgm(path: str | Path) -> np.ndarray:
    """Pixel values scaled back to [0, 1]."""
    return decode(Path(path).read_bytes()).astype(np.float64) / 255.0
