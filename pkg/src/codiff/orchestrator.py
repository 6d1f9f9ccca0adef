"""Plans, executes and costs shared/local diffusion across simulated devices.

Architectures:

* ``EdgeToMulti``: an edge server runs every group's shared steps.
* ``D2D``: two user devices; the faster one runs the shared steps.
* ``ClusterMode``: each group's fastest member (or the edge, if allowed and
  at least as fast) runs its shared steps.
"""
from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .channel import ChannelModel, Link, QuantizationSpec, payload_bits
from .diffusion import (Condition, Latent, MixtureModel, NoiseSchedule, local_phase,
                        shared_phase)
from .rng import RngStreams
from .semantic import ClusterAssignment, prompt_condition

DEFAULT_SNR_TABLE = {"low": 0.5, "mid": 3.0, "high": 10.0}
DEFAULT_FIXED_RATE_BPS = 1e6
DEEP_FADE_SNR = 0.5
SPLIT_INCREMENT = 2


class PlanError(ValueError):
    pass


class CacheIntegrityError(RuntimeError):
    pass


@dataclass(frozen=True)
class DeviceProfile:
    id: str
    role: str
    steps_per_s: float
    joules_per_step: float
    tx_power: str = "mid"
    snr_table: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_SNR_TABLE))
    uplink_hz: float = 1e5
    downlink_hz: float = 1e6

    def __post_init__(self):
        if self.role not in ("edge", "user"):
            raise PlanError(f"device {self.id}: role must be 'edge' or 'user'")
        for name in ("steps_per_s", "joules_per_step", "uplink_hz", "downlink_hz"):
            if not getattr(self, name) > 0:
                raise PlanError(f"device {self.id}: {name} must be positive")
        if self.tx_power not in self.snr_table:
            raise PlanError(f"device {self.id}: unknown transmit power class {self.tx_power!r}")

    @property
    def snr(self) -> float:
        return float(self.snr_table[self.tx_power])

    @property
    def tx_bandwidth_hz(self) -> float:
        # edge servers send on the downlink, user devices on their uplink
        return self.downlink_hz if self.role == "edge" else self.uplink_hz


def default_profiles(users: Sequence[str], edge_id: str = "edge") -> dict[str, DeviceProfile]:
    """One edge server plus identical phone-class user devices."""
    profiles = {edge_id: DeviceProfile(edge_id, "edge", steps_per_s=10.0, joules_per_step=6.0, tx_power="high")}
    for u in users:
        profiles[u] = DeviceProfile(u, "user", steps_per_s=0.5, joules_per_step=4.0)
    return profiles


@dataclass(frozen=True)
class Architecture:
    kind: str  # "edge", "d2d", "cluster"
    with_edge: bool = False

    def __post_init__(self):
        if self.kind not in ("edge", "d2d", "cluster"):
            raise PlanError(f"unknown architecture {self.kind!r}")

    @classmethod
    def parse(cls, name: str) -> "Architecture":
        names = {"edge": cls("edge"), "edge_to_multi": cls("edge"), "d2d": cls("d2d"),
                 "cluster": cls("cluster"), "cluster_edge": cls("cluster", with_edge=True)}
        try:
            return names[name]
        except KeyError:
            raise PlanError(f"unknown architecture {name!r}; expected one of {sorted(names)}") from None


EdgeToMulti = Architecture("edge")
D2D = Architecture("d2d")


def ClusterMode(with_edge: bool = False) -> Architecture:
    return Architecture("cluster", with_edge)


@dataclass(frozen=True)
class GroupPlan:
    members: tuple[str, ...]
    executor: str
    shared_steps: int
    condition: Condition
    local_conditions: Mapping[str, Condition]
    local_steps: Mapping[str, int]
    links: Mapping[str, ChannelModel | None]  # None: executor itself or an ideal link


@dataclass(frozen=True)
class TaskPlan:
    T: int
    groups: tuple[GroupPlan, ...]
    user_index: Mapping[str, int]
    qspec: QuantizationSpec = QuantizationSpec()

    def __post_init__(self):
        for g in self.groups:
            if not 0 <= g.shared_steps <= self.T:
                raise PlanError(f"shared steps {g.shared_steps} outside [0, {self.T}]")
            for m in g.members:
                if g.local_steps[m] + g.shared_steps != self.T:
                    raise PlanError(f"user {m}: shared + local steps != {self.T}")


def _fastest(candidates: Sequence[DeviceProfile]) -> DeviceProfile:
    # highest rate; ties broken by role (edge first) then device id
    return min(candidates, key=lambda p: (-p.steps_per_s, p.role != "edge", p.id))


def _member_link(kind: str, sender: DeviceProfile) -> ChannelModel:
    bw = sender.tx_bandwidth_hz
    if kind == "awgn":
        return ChannelModel.awgn(sender.snr, bw)
    if kind == "rayleigh":
        return ChannelModel.rayleigh(sender.snr, bw)
    if kind == "fixed":
        return ChannelModel.fixed(0.0, bw)
    raise PlanError(f"unknown link kind {kind!r}")


def plan(arch: Architecture, assignment: ClusterAssignment, profiles: Mapping[str, DeviceProfile],
         T: int, s_default: int, background: float = 0.0, link_kind: str = "awgn",
         qspec: QuantizationSpec = QuantizationSpec(), user_order: Sequence[str] | None = None) -> TaskPlan:
    """Choose a shared executor per group and wire per-member links.

    ``user_order`` fixes each user's stream index; defaults to assignment order.
    """
    if not 0 <= s_default <= T:
        raise PlanError(f"shared step count {s_default} outside [0, {T}]")
    users = assignment.users
    missing = [u for u in users if u not in profiles]
    if missing:
        raise PlanError(f"no device profile for users {missing}")
    edges = sorted((p for p in profiles.values() if p.role == "edge"), key=lambda p: p.id)
    if arch.kind == "edge" and not edges:
        raise PlanError("EdgeToMulti needs an edge device profile")
    if arch.kind == "d2d" and len(users) != 2:
        raise PlanError(f"D2D needs exactly 2 users, got {len(users)}")
    order = list(user_order) if user_order is not None else list(users)
    user_index = {u: order.index(u) for u in users}

    groups = []
    for members, cond in zip(assignment.groups, assignment.conditions):
        member_profiles = [profiles[m] for m in members]
        if arch.kind == "edge":
            executor = edges[0]
        elif arch.kind == "d2d":
            executor = _fastest(member_profiles)
        else:
            executor = _fastest(member_profiles + (edges[:1] if arch.with_edge else []))
        links = {m: (None if m == executor.id else _member_link(link_kind, executor)) for m in members}
        groups.append(GroupPlan(
            members=tuple(members),
            executor=executor.id,
            shared_steps=s_default,
            condition=cond,
            local_conditions={m: prompt_condition(assignment.prompts[m], background) for m in members},
            local_steps={m: T - s_default for m in members},
            links=links,
        ))
    return TaskPlan(T, tuple(groups), user_index, qspec)


def with_links(task: TaskPlan, link: ChannelModel | None) -> TaskPlan:
    """Replace every non-executor link with ``link`` (``None`` = ideal float link)."""
    groups = []
    for g in task.groups:
        links = {m: (None if m == g.executor else link) for m in g.members}
        groups.append(replace(g, links=links))
    return replace(task, groups=tuple(groups))


def with_shared_steps(task: TaskPlan, s: int) -> TaskPlan:
    groups = [replace(g, shared_steps=s, local_steps={m: task.T - s for m in g.members}) for g in task.groups]
    return replace(task, groups=tuple(groups))


def snr_at(fade_timeline: Sequence[tuple[float, float]], when: float) -> float:
    """Piecewise-constant SNR: value of the last breakpoint at or before ``when``."""
    points = sorted(fade_timeline)
    if not points:
        raise ValueError("empty fade timeline")
    current = points[0][1]
    for t, snr in points:
        if t <= when:
            current = snr
    return float(current)


def handoff_time(group: GroupPlan, profiles: Mapping[str, DeviceProfile]) -> float:
    return group.shared_steps / profiles[group.executor].steps_per_s


def adapt_split(task: TaskPlan, fade_timeline: Sequence[tuple[float, float]],
                profiles: Mapping[str, DeviceProfile], threshold: float = DEEP_FADE_SNR,
                increment: int = SPLIT_INCREMENT) -> TaskPlan:
    """Push extra shared steps into groups whose handoff lands in a deep fade."""
    groups = []
    for g in task.groups:
        fading = snr_at(fade_timeline, handoff_time(g, profiles)) < threshold
        if fading and g.shared_steps < task.T - 1:
            s = min(g.shared_steps + increment, task.T - 1)
            g = replace(g, shared_steps=s, local_steps={m: task.T - s for m in g.members})
        groups.append(g)
    return replace(task, groups=tuple(groups))


@dataclass(frozen=True)
class DeviceCost:
    steps: int = 0
    compute_s: float = 0.0
    transmit_s: float = 0.0
    energy_j: float = 0.0


@dataclass(frozen=True)
class CostReport:
    devices: Mapping[str, DeviceCost]
    group_latency_s: tuple[float, ...]
    user_latency_s: Mapping[str, float]

    @property
    def total_energy_j(self) -> float:
        return sum(d.energy_j for d in self.devices.values())

    @property
    def total_steps(self) -> int:
        return sum(d.steps for d in self.devices.values())


def link_rate(model: ChannelModel | None, fixed_rate_bps: float = DEFAULT_FIXED_RATE_BPS) -> float:
    if model is None or not model.has_snr:
        return fixed_rate_bps
    if not model.bandwidth_hz:
        raise PlanError("SNR-bearing link needs a positive bandwidth")
    return model.bandwidth_hz * math.log2(1.0 + model.snr)


def cost(task: TaskPlan, profiles: Mapping[str, DeviceProfile], count: int,
         channels: Mapping[str, ChannelModel | None] | None = None,
         charged_shared: Sequence[bool] | None = None,
         fixed_rate_bps: float = DEFAULT_FIXED_RATE_BPS) -> CostReport:
    """Linear-in-steps compute cost plus Shannon-rate link latency.

    ``count`` is the number of latent elements handed off; ``charged_shared``
    marks groups whose shared phase was actually computed (cache misses).
    """
    steps: dict[str, int] = {}
    tx_time: dict[str, float] = {}
    group_latency = []
    user_latency = {}
    for gi, g in enumerate(task.groups):
        exec_prof = profiles[g.executor]
        charged = True if charged_shared is None else charged_shared[gi]
        shared_lat = g.shared_steps / exec_prof.steps_per_s
        if charged:
            steps[g.executor] = steps.get(g.executor, 0) + g.shared_steps
        worst = 0.0
        for m in g.members:
            link = g.links[m]
            if channels is not None and m in channels:
                link = channels[m] if m != g.executor else None
            if m == g.executor:
                tx = 0.0
            else:
                qspec = task.qspec if link is not None else None
                tx = payload_bits(count, qspec) / link_rate(link, fixed_rate_bps)
                tx_time[g.executor] = tx_time.get(g.executor, 0.0) + tx
            local = g.local_steps[m] / profiles[m].steps_per_s
            steps[m] = steps.get(m, 0) + g.local_steps[m]
            user_latency[m] = shared_lat + tx + local
            worst = max(worst, tx + local)
        group_latency.append(shared_lat + worst)
    devices = {}
    for dev in sorted(set(steps) | set(tx_time)):
        p = profiles[dev]
        n = steps.get(dev, 0)
        devices[dev] = DeviceCost(n, n / p.steps_per_s, tx_time.get(dev, 0.0), n * p.joules_per_step)
    return CostReport(devices, tuple(group_latency), user_latency)


def independent_cost(users: Sequence[str], profiles: Mapping[str, DeviceProfile], T: int) -> CostReport:
    """Every user runs the full chain alone."""
    devices = {u: DeviceCost(T, T / profiles[u].steps_per_s, 0.0, T * profiles[u].joules_per_step) for u in users}
    lat = {u: devices[u].compute_s for u in users}
    return CostReport(devices, tuple(lat[u] for u in users), lat)


class SharedCache:
    """Thread-safe store of shared-phase handoff latents."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[tuple, tuple[bytes, Latent]] = {}

    @staticmethod
    def key(condition: Condition, s: int, schedule: NoiseSchedule, streams: RngStreams,
            mixture: MixtureModel) -> tuple:
        return (condition.fingerprint(), int(s), schedule.fingerprint(), streams.fingerprint(), mixture.fingerprint())

    def __contains__(self, key) -> bool:
        with self._lock:
            return key in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def get(self, key) -> Latent | None:
        with self._lock:
            entry = self._entries.get(key)
        if entry is None:
            return None
        digest, latent = entry
        if _digest(key, latent) != digest:
            raise CacheIntegrityError(f"cached handoff for {key} does not match its fingerprint")
        return latent

    def put(self, key, latent: Latent) -> None:
        with self._lock:
            self._entries[key] = (_digest(key, latent), latent)

    def _tamper(self, key, latent: Latent) -> None:
        """Overwrite an entry without refreshing its digest (testing hook)."""
        with self._lock:
            digest, _ = self._entries[key]
            self._entries[key] = (digest, latent)


def _digest(key, latent: Latent) -> bytes:
    import hashlib

    h = hashlib.sha256(repr(key).encode())
    h.update(np.int64([latent.width, latent.height, latent.t]).tobytes())
    h.update(latent.data.tobytes())
    return h.digest()


@dataclass(frozen=True)
class RunResult:
    finals: Mapping[str, Latent]
    handoffs: Mapping[str, Latent]  # as received by each user
    shared_handoffs: tuple[Latent, ...]  # as they left each group's executor
    flips: Mapping[str, int]
    cache_hits: tuple[bool, ...]
    cost: CostReport


def execute(task: TaskPlan, mixture: MixtureModel, schedule: NoiseSchedule, streams: RngStreams,
            profiles: Mapping[str, DeviceProfile], cache: SharedCache | None = None,
            channels: Mapping[str, ChannelModel | None] | None = None, jobs: int = 1) -> RunResult:
    """Run every group's shared phase once, hand it off, and finish locally.

    ``channels`` overrides planned links per user (``None`` = ideal link).
    Hits are decided in group order before anything runs, so charges and
    outputs do not depend on ``jobs``.
    """
    if task.T != schedule.T:
        raise PlanError(f"plan is for T={task.T} but schedule has T={schedule.T}")
    keys = [SharedCache.key(g.condition, g.shared_steps, schedule, streams, mixture) for g in task.groups]
    hits, todo, first = [], [], set()
    for gi, k in enumerate(keys):
        hit = cache is not None and (k in cache or k in first)
        hits.append(hit)
        if not hit:
            todo.append(gi)
            first.add(k)

    def run_shared(gi):
        g = task.groups[gi]
        return shared_phase(schedule, mixture, g.condition, g.shared_steps, streams)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        computed = dict(zip(todo, pool.map(run_shared, todo)))
    if cache is not None:
        for gi in todo:
            cache.put(keys[gi], computed[gi])
    shared = [computed[gi] if gi in computed else cache.get(keys[gi]) for gi in range(len(keys))]

    def run_member(item):
        gi, m = item
        g = task.groups[gi]
        handoff = shared[gi]
        link = g.links[m]
        if channels is not None and m in channels:
            link = channels[m]
        idx = task.user_index[m]
        flips = 0
        received = handoff
        if m != g.executor and link is not None:
            received, flips = Link(link, task.qspec).carry(handoff, streams.stream("channel", idx))
        final = local_phase(received, mixture, g.local_conditions[m], schedule, streams, idx)
        return m, received, final, flips

    items = [(gi, m) for gi, g in enumerate(task.groups) for m in g.members]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(run_member, items))
    finals = {m: f for m, _, f, _ in results}
    received = {m: r for m, r, _, _ in results}
    flips = {m: n for m, _, _, n in results}
    report = cost(task, profiles, mixture.width * mixture.height, channels, [not h for h in hits])
    return RunResult(finals, received, tuple(shared), flips, tuple(hits), report)
