"""Procedural prototype images for the default concepts.

Every object is drawn over the same table backdrop. Fruits share a centred
round layout and are visually close; the bird sits in a bright sky band and
is far from everything else, mirroring the concept graph's branches.
"""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .diffusion import MixtureModel
from .pgm import read_pgm

BACKGROUND = 0.1
TABLE = 0.6


def _grid(width: int, height: int):
    # shapes are authored on a 16x16 canvas and rescaled
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    return yy * 16.0 / height, xx * 16.0 / width


def _ellipse(yy, xx, cy, cx, rx, ry):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _band(yy, xx, y0, y1, x0=0.0, x1=16.0):
    return (yy >= y0) & (yy < y1) & (xx >= x0) & (xx < x1)


def _backdrop(yy, xx):
    im = np.full(yy.shape, BACKGROUND)
    im[_band(yy, xx, 11, 13)] = TABLE
    im[_band(yy, xx, 13, 16, 1, 3) | _band(yy, xx, 13, 16, 13, 15)] = TABLE
    return im


def _apple(yy, xx):
    im = _backdrop(yy, xx)
    im[_ellipse(yy, xx, 7, 7.5, 3.3, 3.3)] = 0.95
    im[_band(yy, xx, 3, 5, 7, 9)] = 0.3
    return im


def _lemon(yy, xx):
    im = _backdrop(yy, xx)
    im[_ellipse(yy, xx, 7.5, 7.5, 4.2, 2.6)] = 0.8
    return im


def _orange(yy, xx):
    im = _backdrop(yy, xx)
    im[_ellipse(yy, xx, 7.5, 7.5, 3.0, 3.0)] = 0.7
    im[_band(yy, xx, 4, 5, 7, 8)] = 0.45
    return im


def _bird(yy, xx):
    im = _backdrop(yy, xx)
    im[_band(yy, xx, 0, 6)] = 0.45
    im[_ellipse(yy, xx, 4, 5, 3.0, 2.0)] = 0.95
    im[_band(yy, xx, 1, 4, 7, 13)] = 0.85
    im[_band(yy, xx, 4, 5, 1, 3)] = 1.0
    return im


def _cat(yy, xx):
    im = _backdrop(yy, xx)
    im[_ellipse(yy, xx, 8, 10, 2.8, 2.2)] = 0.7
    im[_band(yy, xx, 4, 6, 8, 9) | _band(yy, xx, 4, 6, 12, 13)] = 0.7
    im[_band(yy, xx, 6, 11, 4, 8)] = 0.5
    return im


def _car(yy, xx):
    im = _backdrop(yy, xx)
    im[_band(yy, xx, 6, 10, 2, 14)] = 0.75
    im[_band(yy, xx, 10, 11, 3, 6) | _band(yy, xx, 10, 11, 10, 13)] = 0.2
    return im


DRAWERS: Mapping[str, Callable] = {
    "apple": _apple,
    "lemon": _lemon,
    "orange": _orange,
    "bird": _bird,
    "cat": _cat,
    "car": _car,
}


def procedural(concept: str, width: int = 16, height: int = 16) -> np.ndarray:
    """Prototype image (height, width) with values in [0, 1]."""
    try:
        draw = DRAWERS[concept]
    except KeyError:
        raise KeyError(f"no procedural prototype for concept {concept!r}") from None
    yy, xx = _grid(width, height)
    return draw(yy, xx)


def default_prototypes(width: int = 16, height: int = 16) -> dict[str, np.ndarray]:
    return {c: procedural(c, width, height) for c in DRAWERS}


def load_prototypes(bindings: Mapping[str, str], width: int, height: int) -> dict[str, np.ndarray]:
    """Load ``concept -> PGM path`` bindings; the literal "procedural" draws one."""
    out = {}
    for concept, source in bindings.items():
        if source == "procedural":
            out[concept] = procedural(concept, width, height)
            continue
        img = read_pgm(source)
        if img.shape != (height, width):
            raise ValueError(f"prototype {source} is {img.shape[1]}x{img.shape[0]}, expected {width}x{height}")
        out[concept] = img
    return out


def default_mixture(width: int = 16, height: int = 16, sigma0: float = 0.05, graph=None,
                    prototypes: Mapping[str, np.ndarray] | None = None) -> MixtureModel:
    """Uniform-weight mixture over the prototypes; remaining graph nodes become scene concepts."""
    protos = prototypes if prototypes is not None else default_prototypes(width, height)
    scene = set(graph.nodes) - set(protos) if graph is not None else set()
    return MixtureModel.build(protos, width, height, sigma0=sigma0, scene_concepts=scene)
