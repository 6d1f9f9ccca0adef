"""Named, seed-derived random streams.

Every stochastic draw in the simulator goes through :class:`RngStreams` so a
run is a pure function of ``(master seed, context, label, index)``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

# Fixed label codes; never renumber, outputs depend on them.
STREAM_LABELS = {"init": 0, "shared": 1, "local": 2, "channel": 3}


@dataclass(frozen=True)
class RngStreams:
    """Factory of independent numpy generators keyed by label and index.

    ``context`` lets a harness fork the master seed per sweep cell and
    repetition without touching the label namespace.
    """

    seed: int
    context: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"master seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "context", tuple(int(c) for c in self.context))

    def child(self, *context: int) -> "RngStreams":
        return RngStreams(self.seed, self.context + tuple(context))

    def stream(self, label: str, index: int = 0) -> np.random.Generator:
        try:
            code = STREAM_LABELS[label]
        except KeyError:
            raise ValueError(f"unknown stream label {label!r}") from None
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(*self.context, code, int(index)))
        return np.random.Generator(np.random.PCG64(seq))

    def fingerprint(self) -> str:
        text = f"{self.seed}|{','.join(map(str, self.context))}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]
