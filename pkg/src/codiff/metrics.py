"""Image quality (MSE, PSNR, SSIM) and nearest-prototype fidelity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .diffusion import Latent, MixtureModel

PSNR_CAP_DB = 120.0


def _as_image(x) -> np.ndarray:
    if isinstance(x, Latent):
        return x.image()
    return np.asarray(x, dtype=np.float64)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, L: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 120 dB for near-identical images."""
    if L <= 0:
        raise ValueError("dynamic range must be positive")
    err = mse(a, b)
    if err < 1e-12:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(L * L / err))


@dataclass(frozen=True)
class SsimParams:
    window: int = 7
    sigma: float = 1.5
    L: float = 1.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("SSIM window side must be a positive odd integer")
        if self.L <= 0:
            raise ValueError("dynamic range must be positive")

    @property
    def c1(self) -> float:
        return (0.01 * self.L) ** 2

    @property
    def c2(self) -> float:
        return (0.03 * self.L) ** 2

    def kernel(self) -> np.ndarray:
        r = np.arange(self.window) - (self.window - 1) / 2
        g = np.exp(-(r**2) / (2 * self.sigma**2))
        k = np.outer(g, g)
        return k / k.sum()


def ssim(a, b, params: SsimParams = SsimParams()) -> float:
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ValueError("SSIM expects 2-D images")
    if min(a.shape) < params.window:
        raise ValueError(f"image {a.shape} smaller than the {params.window}x{params.window} window")
    return kernels.ssim_mean(a, b, params.kernel(), params.c1, params.c2)


@dataclass(frozen=True)
class FidelityVerdict:
    predicted: str
    distance: float
    margin: float


def classify(x, prototypes: MixtureModel) -> FidelityVerdict:
    """Nearest prototype by Euclidean distance.

    Distances equal up to rounding (1e-12 relative) count as ties and go to
    the lexicographically smallest concept id.
    """
    data = x.data if isinstance(x, Latent) else np.asarray(x, dtype=np.float64).ravel()
    means = np.stack([c.mean for c in prototypes.components])
    if means.shape[1] != data.size:
        raise ValueError("image and prototype dimensions differ")
    dist = np.sqrt(((means - data[None, :]) ** 2).sum(axis=1))
    ids = prototypes.concept_ids
    d_min = float(dist.min())
    tied = [i for i in range(len(ids)) if dist[i] - d_min <= 1e-12 * max(1.0, d_min)]
    best = min(tied, key=lambda i: ids[i])
    rest = np.delete(dist, best)
    margin = float(max(0.0, rest.min() - dist[best])) if rest.size else math.inf
    return FidelityVerdict(ids[best], float(dist[best]), margin)
