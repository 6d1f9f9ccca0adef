"""Exact Gaussian-mixture diffusion.

The learned noise predictor of a latent diffusion model is replaced by the
closed-form score of a concept-conditioned isotropic Gaussian mixture, so the
reverse chain can be checked against analytic targets.  Sampling uses DDPM
ancestral steps; the chain can be cut into a shared prefix and a local suffix.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .rng import RngStreams

DEFAULT_T = 11
DEFAULT_BETA_START = 0.1
DEFAULT_BETA_END = 0.6
MAX_FINAL_ALPHA_BAR = 0.02


class ScheduleError(ValueError):
    pass


class ConditionError(ValueError):
    pass


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NoiseSchedule:
    """Diffusion constants for a T-step chain.

    ``alpha_bars`` has length T + 1 with ``alpha_bars[0] == 1``; ``betas`` and
    ``alphas`` are indexed 1..T through :meth:`beta` / :meth:`alpha`.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[t])

    def sigma(self, t: int) -> float:
        """Ancestral noise scale for the step t -> t-1 (zero at t = 1)."""
        ab_t, ab_prev = self.alpha_bars[t], self.alpha_bars[t - 1]
        return math.sqrt(max(0.0, self.beta(t) * (1.0 - ab_prev) / (1.0 - ab_t)))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.betas.tobytes()).hexdigest()[:16]


def schedule_from_betas(betas: Sequence[float]) -> NoiseSchedule:
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size < 1:
        raise ScheduleError("schedule needs at least one step")
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise ScheduleError("every beta must lie strictly inside (0, 1)")
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    if alpha_bars[-1] > MAX_FINAL_ALPHA_BAR:
        raise ScheduleError(
            f"chain does not reach noise: alpha_bar_T = {alpha_bars[-1]:.4g} > {MAX_FINAL_ALPHA_BAR}"
        )
    return NoiseSchedule(betas.size, _frozen(betas), _frozen(alphas), _frozen(alpha_bars))


def build_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                   beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linear beta ramp from ``beta_start`` to ``beta_end`` over ``T`` steps."""
    if int(T) != T or T < 1:
        raise ScheduleError(f"T must be a positive integer, got {T}")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise ScheduleError("beta_start and beta_end must lie strictly inside (0, 1)")
    if beta_start > beta_end:
        raise ScheduleError("beta_start must not exceed beta_end")
    return schedule_from_betas(np.linspace(beta_start, beta_end, int(T)))


@dataclass(frozen=True)
class Latent:
    """Flat W*H image tensor at chain position ``t`` (0 = finished sample)."""

    data: np.ndarray
    width: int
    height: int
    t: int

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64).ravel()
        if arr.size != self.width * self.height:
            raise ValueError(f"latent has {arr.size} values, expected {self.width}x{self.height}")
        if self.t < 0:
            raise ValueError("step index must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height

    def image(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width)

    def at(self, t: int) -> "Latent":
        return Latent(self.data, self.width, self.height, t)


@dataclass(frozen=True)
class Component:
    weight: float
    mean: np.ndarray
    sigma0: float
    concept_id: str


@dataclass(frozen=True)
class MixtureModel:
    """Concept-tagged isotropic Gaussian mixture over W*H images.

    ``scene_concepts`` are ids a condition may mention (e.g. a backdrop such
    as "table") that are baked into every prototype and select no component.
    """

    components: tuple[Component, ...]
    width: int
    height: int
    scene_concepts: frozenset = frozenset()

    @classmethod
    def build(cls, prototypes: Mapping[str, np.ndarray], width: int, height: int,
              sigma0: float | Mapping[str, float] = 0.05, weights: Mapping[str, float] | None = None,
              scene_concepts=()) -> "MixtureModel":
        if not prototypes:
            raise ValueError("mixture needs at least one component")
        raw = []
        for cid, mu in prototypes.items():
            mu = np.asarray(mu, dtype=np.float64).ravel()
            if mu.size != width * height:
                raise ValueError(f"prototype {cid!r} has {mu.size} values, expected {width * height}")
            s0 = sigma0[cid] if isinstance(sigma0, Mapping) else sigma0
            if s0 < 0:
                raise ValueError("sigma0 must be non-negative")
            w = 1.0 if weights is None else float(weights[cid])
            if w <= 0:
                raise ValueError("component weights must be positive")
            raw.append((w, _frozen(mu), float(s0), str(cid)))
        total = sum(r[0] for r in raw)
        comps = tuple(Component(w / total, mu, s0, cid) for w, mu, s0, cid in raw)
        return cls(comps, width, height, frozenset(scene_concepts) - {c.concept_id for c in comps})

    @property
    def concept_ids(self) -> tuple[str, ...]:
        return tuple(c.concept_id for c in self.components)

    @property
    def known_concepts(self) -> frozenset:
        return frozenset(self.concept_ids) | self.scene_concepts

    def prototype(self, concept_id: str) -> np.ndarray:
        for c in self.components:
            if c.concept_id == concept_id:
                return c.mean
        raise KeyError(concept_id)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for c in self.components:
            h.update(f"{c.concept_id}|{c.weight!r}|{c.sigma0!r}|".encode())
            h.update(c.mean.tobytes())
        h.update(",".join(sorted(self.scene_concepts)).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Condition:
    """Concepts enabled for generation, with optional per-concept weights.

    ``background`` is the relative prior weight given to mixture components
    outside the condition; 0 disables them entirely.
    """

    concepts: tuple[str, ...]
    weights: tuple[float, ...] | None = None
    background: float = 0.0

    def __post_init__(self):
        concepts = tuple(dict.fromkeys(self.concepts))
        if not concepts:
            raise ConditionError("condition must enable at least one concept")
        object.__setattr__(self, "concepts", concepts)
        if self.weights is not None:
            if len(self.weights) != len(concepts) or any(w <= 0 for w in self.weights):
                raise ConditionError("condition weights must be positive, one per concept")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.background < 0:
            raise ConditionError("background weight must be non-negative")

    def weight_of(self, concept_id: str) -> float:
        if concept_id not in self.concepts:
            return 0.0
        if self.weights is None:
            return 1.0
        return self.weights[self.concepts.index(concept_id)]

    def fingerprint(self) -> str:
        text = repr((self.concepts, self.weights, float(self.background)))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _component_weights(mixture: MixtureModel, condition: Condition) -> np.ndarray:
    unknown = [c for c in condition.concepts if c not in mixture.known_concepts]
    if unknown:
        raise ConditionError(f"condition references unknown concepts: {unknown}")
    enabled = np.array([condition.weight_of(c.concept_id) for c in mixture.components])
    if not np.any(enabled > 0):
        raise ConditionError("condition enables no mixture component")
    enabled = enabled / enabled.sum()
    w = np.array([c.weight for c in mixture.components])
    w = w * np.where(enabled > 0, enabled, condition.background)
    return w / w.sum()


def _check_t(t: int, schedule: NoiseSchedule):
    if not 1 <= t <= schedule.T:
        raise ValueError(f"step {t} outside [1, {schedule.T}]")


def mixture_score(x: Latent | np.ndarray, t: int, mixture: MixtureModel, condition: Condition,
                  schedule: NoiseSchedule) -> np.ndarray:
    """Gradient of log p_t at ``x`` for the condition-restricted mixture."""
    _check_t(t, schedule)
    data = x.data if isinstance(x, Latent) else np.asarray(x, dtype=np.float64)
    w = _component_weights(mixture, condition)
    keep = np.flatnonzero(w > 0)
    ab = schedule.alpha_bar(t)
    means = np.stack([mixture.components[i].mean for i in keep]) * math.sqrt(ab)
    var = np.array([ab * mixture.components[i].sigma0 ** 2 + (1.0 - ab) for i in keep])
    if data.shape[0] != means.shape[1]:
        raise ValueError("latent dimension does not match the mixture")
    return kernels.mixture_score(data, means, np.log(w[keep]), var)


def predict_noise(x: Latent | np.ndarray, t: int, mixture: MixtureModel, condition: Condition,
                  schedule: NoiseSchedule) -> np.ndarray:
    return -math.sqrt(1.0 - schedule.alpha_bar(t)) * mixture_score(x, t, mixture, condition, schedule)


def forward_diffuse(x0: Latent, t: int, eps, schedule: NoiseSchedule) -> Latent:
    _check_t(t, schedule)
    eps = np.asarray(eps, dtype=np.float64).ravel()
    if eps.shape != x0.data.shape:
        raise ValueError("noise and latent dimensions differ")
    ab = schedule.alpha_bar(t)
    return Latent(math.sqrt(ab) * x0.data + math.sqrt(1.0 - ab) * eps, x0.width, x0.height, t)


def reverse_step(x_t: Latent, t: int, eps_hat, schedule: NoiseSchedule,
                 rng: np.random.Generator | None) -> Latent:
    """One ancestral step t -> t-1; draws noise from ``rng`` only when sigma_t > 0."""
    if t == 0 or x_t.t == 0:
        raise ValueError("chain already finished")
    _check_t(t, schedule)
    eps_hat = np.asarray(eps_hat, dtype=np.float64).ravel()
    if eps_hat.shape != x_t.data.shape:
        raise ValueError("predicted noise and latent dimensions differ")
    sigma = schedule.sigma(t)
    z = None
    if sigma > 0.0:
        if rng is None:
            raise ValueError(f"step {t} needs a noise stream")
        z = rng.standard_normal(x_t.data.size)
    c_x = 1.0 / math.sqrt(schedule.alpha(t))
    c_eps = schedule.beta(t) / math.sqrt(1.0 - schedule.alpha_bar(t))
    out = kernels.ddpm_update(x_t.data, eps_hat, c_x, c_eps, sigma, z)
    return Latent(out, x_t.width, x_t.height, t - 1)


def denoise(x: Latent, steps: int, mixture: MixtureModel, condition: Condition,
            schedule: NoiseSchedule, rng: np.random.Generator) -> Latent:
    """Run ``steps`` reverse steps from ``x.t`` drawing noise from one stream."""
    if steps < 0 or steps > x.t:
        raise ValueError(f"cannot run {steps} steps from position {x.t}")
    for _ in range(steps):
        t = x.t
        x = reverse_step(x, t, predict_noise(x, t, mixture, condition, schedule), schedule, rng)
    return x


def initial_latent(dims: tuple[int, int], schedule: NoiseSchedule, streams: RngStreams) -> Latent:
    w, h = dims
    return Latent(streams.stream("init").standard_normal(w * h), w, h, schedule.T)


def _check_dims(mixture: MixtureModel, dims):
    if tuple(dims) != (mixture.width, mixture.height):
        raise ValueError(f"dims {tuple(dims)} do not match mixture {mixture.width}x{mixture.height}")


def sample(schedule: NoiseSchedule, mixture: MixtureModel, condition: Condition,
           dims: tuple[int, int], streams: RngStreams, shared_steps: int = 0,
           local_index: int = 0) -> Latent:
    """Monolithic ancestral sampling from x_T to x_0.

    Reverse noise for the first ``shared_steps`` steps comes from the
    "shared" stream and the rest from ``("local", local_index)``, the same
    convention :func:`split_sample` uses.
    """
    if not 0 <= shared_steps <= schedule.T:
        raise ValueError(f"shared step count {shared_steps} outside [0, {schedule.T}]")
    _check_dims(mixture, dims)
    x = initial_latent(dims, schedule, streams)
    x = denoise(x, shared_steps, mixture, condition, schedule, streams.stream("shared"))
    return denoise(x, x.t, mixture, condition, schedule, streams.stream("local", local_index))


def shared_phase(schedule: NoiseSchedule, mixture: MixtureModel, condition: Condition,
                 shared_steps: int, streams: RngStreams) -> Latent:
    """x_T followed by ``shared_steps`` steps; depends only on seed, not on any user."""
    if not 0 <= shared_steps <= schedule.T:
        raise ValueError(f"shared step count {shared_steps} outside [0, {schedule.T}]")
    x = initial_latent((mixture.width, mixture.height), schedule, streams)
    return denoise(x, shared_steps, mixture, condition, schedule, streams.stream("shared"))


def local_phase(handoff: Latent, mixture: MixtureModel, condition: Condition,
                schedule: NoiseSchedule, streams: RngStreams, local_index: int = 0) -> Latent:
    return denoise(handoff, handoff.t, mixture, condition, schedule, streams.stream("local", local_index))


def split_sample(schedule: NoiseSchedule, mixture: MixtureModel, shared_cond: Condition,
                 local_cond: Condition, s: int, link=None, streams: RngStreams | None = None,
                 local_index: int = 0) -> tuple[Latent, Latent]:
    """Shared prefix of ``s`` steps, optional lossy handoff, local suffix.

    Returns the handoff as it left the shared executor and the final sample.
    ``link`` is a :class:`codiff.channel.Link`; ``None`` means an ideal link.
    """
    if streams is None:
        raise ValueError("split_sample needs RngStreams")
    if not 0 <= s <= schedule.T:
        raise ValueError(f"shared step count {s} outside [0, {schedule.T}]")
    handoff = shared_phase(schedule, mixture, shared_cond, s, streams)
    received = handoff
    if link is not None:
        received, _ = link.carry(handoff, streams.stream("channel", local_index))
    final = local_phase(received, mixture, local_cond, schedule, streams, local_index)
    return handoff, final
