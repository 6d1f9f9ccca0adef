"""Scenario runner: sweeps, CSV/PGM artifacts, presets and summaries."""
from __future__ import annotations

import csv
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Sequence

from . import pgm
from .channel import ChannelModel, QuantizationSpec, ber as channel_ber
from .config import ScenarioConfig, validate
from .diffusion import MixtureModel, build_schedule
from .metrics import classify, mse, psnr, ssim
from .orchestrator import (Architecture, DeviceProfile, SharedCache, TaskPlan, adapt_split,
                           default_profiles, execute, plan, with_shared_steps)
from .prototypes import default_mixture, load_prototypes
from .rng import RngStreams
from .semantic import cluster, default_graph, load_graph, parse_prompt, single_group

COLUMNS = (
    "scenario", "cell", "repetition", "user", "target", "s", "local_steps", "channel", "ber", "snr",
    "mse_ref", "psnr_ref", "ssim_ref", "mse_proto", "psnr_proto", "ssim_proto",
    "predicted", "fidelity", "distance", "margin", "handoff_predicted", "handoff_fidelity",
    "flip_count", "cache_hit", "latency_s", "energy_j", "total_energy_j",
)
KEY_COLUMNS = ("scenario", "cell", "user", "target", "s", "local_steps", "channel", "ber", "snr")
NUMERIC_COLUMNS = (
    "mse_ref", "psnr_ref", "ssim_ref", "mse_proto", "psnr_proto", "ssim_proto", "fidelity",
    "distance", "margin", "handoff_fidelity", "flip_count", "latency_s", "energy_j", "total_energy_j",
)


class SummaryError(ValueError):
    pass


@dataclass(frozen=True)
class Prepared:
    cfg: ScenarioConfig
    graph: Any
    mixture: MixtureModel
    schedule: Any
    profiles: dict
    base_plan: TaskPlan
    targets: dict


def _profiles(cfg: ScenarioConfig) -> dict[str, DeviceProfile]:
    profiles = default_profiles(cfg.users)
    for dev, items in cfg.devices:
        spec = dict(items)
        if dev in profiles:
            profiles[dev] = replace(profiles[dev], **spec)
        else:
            profiles[dev] = DeviceProfile(dev, **spec)
    return profiles


@lru_cache(maxsize=8)
def prepare(cfg: ScenarioConfig) -> Prepared:
    graph = load_graph(cfg.graph) if cfg.graph else default_graph()
    protos = load_prototypes(dict(cfg.prototypes), cfg.width, cfg.height) if cfg.prototypes else None
    mixture = default_mixture(cfg.width, cfg.height, cfg.sigma0, graph, protos)
    schedule = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    prompts = [parse_prompt(text, graph, owner=u) for u, text in cfg.prompts]
    targets = {}
    for p in prompts:
        objs = [c for c in p.concepts if c in mixture.concept_ids]
        if not objs:
            raise ValueError(f"prompt of {p.owner} ({p.text!r}) names no concept with a prototype")
        targets[p.owner] = objs[0]
    if cfg.force_group:
        assignment = single_group(prompts, cfg.policy, cfg.background_weight)
    else:
        assignment = cluster(prompts, cfg.threshold, graph, cfg.policy, cfg.background_weight)
    profiles = _profiles(cfg)
    link_kind = cfg.channel if cfg.channel in ("awgn", "rayleigh") else "fixed"
    base = plan(Architecture.parse(cfg.architecture), assignment, profiles, cfg.T, cfg.shared_steps[0],
                cfg.background_weight, link_kind, QuantizationSpec(cfg.bits, cfg.q_lo, cfg.q_hi),
                user_order=cfg.users)
    return Prepared(cfg, graph, mixture, schedule, profiles, base, targets)


def _cell_channels(prep: Prepared, task: TaskPlan, point, error_free: bool = False) -> dict:
    """Per-user link overrides for one sweep cell."""
    cfg = prep.cfg
    out = {}
    for g in task.groups:
        sender = prep.profiles[g.executor]
        for m in g.members:
            if m == g.executor:
                continue
            if cfg.channel == "lossless":
                out[m] = None
            elif cfg.channel == "fixed":
                out[m] = ChannelModel.fixed(0.0 if error_free else point)
            elif error_free:
                out[m] = ChannelModel.fixed(0.0, sender.tx_bandwidth_hz)
            else:
                snr = sender.snr if point is None else point
                out[m] = ChannelModel(cfg.channel, snr=snr, bandwidth_hz=sender.tx_bandwidth_hz)
    return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def run_cell(cfg: ScenarioConfig, cell: int, rep: int):
    """Rows (and rep-0 images) for one (cell, repetition) pair."""
    prep = prepare(cfg)
    s, point = cfg.cells()[cell]
    streams = RngStreams(cfg.seed, (cell, rep))
    task = plan_for(prep, s)
    channels = _cell_channels(prep, task, point)
    cache = SharedCache() if cfg.cache else None
    run = execute(task, prep.mixture, prep.schedule, streams, prep.profiles, cache, channels)
    ref = execute(task, prep.mixture, prep.schedule, streams, prep.profiles, cache,
                  _cell_channels(prep, task, point, error_free=True))
    rows, images = [], []
    for gi, g in enumerate(task.groups):
        for u in g.members:
            target = prep.targets[u]
            proto = prep.mixture.prototype(target).reshape(cfg.height, cfg.width)
            final = run.finals[u]
            verdict = classify(final, prep.mixture)
            hverdict = classify(run.handoffs[u], prep.mixture)
            link = channels.get(u)
            dev = run.cost.devices.get(u)
            rows.append({
                "scenario": cfg.name, "cell": cell, "repetition": rep, "user": u, "target": target,
                "s": g.shared_steps, "local_steps": g.local_steps[u],
                "channel": "local" if u == g.executor else cfg.channel,
                "ber": channel_ber(link) if link is not None else 0.0,
                "snr": link.snr if link is not None and link.has_snr else None,
                "mse_ref": mse(final, ref.finals[u]), "psnr_ref": psnr(final, ref.finals[u]),
                "ssim_ref": ssim(final, ref.finals[u]),
                "mse_proto": mse(final.image(), proto), "psnr_proto": psnr(final.image(), proto),
                "ssim_proto": ssim(final.image(), proto),
                "predicted": verdict.predicted, "fidelity": int(verdict.predicted == target),
                "distance": verdict.distance, "margin": verdict.margin,
                "handoff_predicted": hverdict.predicted,
                "handoff_fidelity": int(hverdict.predicted == target),
                "flip_count": run.flips[u], "cache_hit": int(run.cache_hits[gi]),
                "latency_s": run.cost.user_latency_s[u],
                "energy_j": dev.energy_j if dev is not None else 0.0,
                "total_energy_j": run.cost.total_energy_j,
            })
            if rep == 0 and cfg.write_images:
                images.append((f"cell{cell:02d}_{u}_final.pgm", pgm.encode(final.image())))
                images.append((f"cell{cell:02d}_{u}_handoff.pgm", pgm.encode(run.handoffs[u].image())))
    rows.sort(key=lambda r: cfg.users.index(r["user"]))
    return rows, images


def plan_for(prep: Prepared, s: int) -> TaskPlan:
    task = with_shared_steps(prep.base_plan, s)
    if prep.cfg.fade_timeline:
        task = adapt_split(task, prep.cfg.fade_timeline, prep.profiles,
                           prep.cfg.deep_fade_threshold, prep.cfg.split_increment)
    return task


def _run_cell_star(args):
    return run_cell(*args)


@dataclass(frozen=True)
class Artifacts:
    directory: Path
    csv_path: Path
    summary_path: Path
    images: tuple[Path, ...]
    rows: int


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path, jobs: int = 1) -> Artifacts:
    """Execute every sweep cell x repetition and write CSV, summary and PGMs.

    Work items may run in parallel; all files are written afterwards by this
    process in (cell, repetition, user) order.
    """
    validate(cfg)
    prepare(cfg)  # fail fast on domain errors before forking workers
    work = [(cfg, c, r) for c in range(len(cfg.cells())) for r in range(cfg.repetitions)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_star, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        results = [run_cell(*w) for w in work]
    rows = [r for rows, _ in results for r in rows]
    directory = Path(out_dir) / cfg.name
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "results.csv"
    csv_path.write_text(rows_to_csv(rows))
    img_dir = directory / "images"
    written = []
    if cfg.write_images:
        img_dir.mkdir(exist_ok=True)
        for _, images in results:
            for name, blob in images:
                path = img_dir / name
                path.write_bytes(blob)
                written.append(path)
    summary_path = emit_summary(csv_path, directory / "summary.csv")
    return Artifacts(directory, csv_path, summary_path, tuple(written), len(rows))


def summarize_rows(rows: Sequence[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in KEY_COLUMNS), []).append(r)
    out = []
    for key, members in groups.items():
        rec = dict(zip(KEY_COLUMNS, key))
        rec["n"] = len(members)
        for col in NUMERIC_COLUMNS:
            vals = [float(m[col]) for m in members if m[col] != ""]
            rec[f"{col}_mean"] = statistics.fmean(vals) if vals else None
            rec[f"{col}_std"] = statistics.pstdev(vals) if vals else None
        out.append(rec)
    return out


def read_rows(csv_path: str | Path) -> list[dict]:
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SummaryError(f"{csv_path}: empty CSV")
        missing = [c for c in KEY_COLUMNS + NUMERIC_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SummaryError(f"{csv_path}: missing column {missing[0]!r}")
        rows = list(reader)
    for i, r in enumerate(rows, start=2):
        for col in NUMERIC_COLUMNS:
            if r[col] == "":
                continue
            try:
                v = float(r[col])
            except ValueError:
                raise SummaryError(f"{csv_path}: line {i}: column {col!r} is not numeric: {r[col]!r}") from None
            if not math.isfinite(v):
                raise SummaryError(f"{csv_path}: line {i}: column {col!r} is not finite")
    return rows


def emit_summary(csv_path: str | Path, out_path: str | Path | None = None) -> Path:
    """Per-cell mean and population std over repetitions, written as CSV."""
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path is not None else csv_path.with_name(csv_path.stem + "_summary.csv")
    summary = summarize_rows(read_rows(csv_path))
    cols = list(KEY_COLUMNS) + ["n"] + [f"{c}_{stat}" for c in NUMERIC_COLUMNS for stat in ("mean", "std")]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for rec in summary:
        writer.writerow([_fmt(rec[c]) for c in cols])
    out_path.write_text(buf.getvalue())
    return out_path


# --- presets -------------------------------------------------------------

BER_GRID = (0.0, 0.005, 0.01, 0.02, 0.05, 0.1)
FRUIT_PAIR = (("u1", "Apple on Table"), ("u2", "Lemon on Table"))


def preset_configs(name: str, seed: int = 2024, repetitions: int | None = None) -> list[ScenarioConfig]:
    reps = {} if repetitions is None else {"repetitions": repetitions}
    if name == "ber_sweep":
        cfgs = [ScenarioConfig(seed=seed, prompts=FRUIT_PAIR, name="ber_sweep", architecture="d2d",
                               shared_steps=(5,), channel="fixed", ber=BER_GRID, **reps)]
    elif name == "split_sweep":
        cfgs = [ScenarioConfig(seed=seed, prompts=FRUIT_PAIR, name="split_sweep", architecture="d2d",
                               shared_steps=(5, 7, 9), channel="fixed", ber=(0.0,), **reps)]
    elif name == "mismatch":
        cfgs = [
            ScenarioConfig(seed=seed, prompts=(("u1", "Apple on Table"), ("u2", "A bird in the sky")),
                           name="mismatch_dissimilar", architecture="d2d", shared_steps=(4,),
                           force_group=True, **reps),
            ScenarioConfig(seed=seed, prompts=FRUIT_PAIR, name="mismatch_similar", architecture="d2d",
                           shared_steps=(4,), force_group=True, **reps),
        ]
    elif name == "arch_compare":
        four = (("u1", "Apple on Table"), ("u2", "Lemon on Table"),
                ("u3", "A bird on a table"), ("u4", "A cat on a table"))
        # "table" is shared by all four prompts, which lifts fruit/animal pairs to 0.6;
        # 0.65 still keeps the two fruit prompts (0.667) together
        common = dict(seed=seed, shared_steps=(5,), channel="awgn", threshold=0.65, **reps)
        cfgs = [
            ScenarioConfig(prompts=four, name="arch_edge", architecture="edge", **common),
            ScenarioConfig(prompts=four, name="arch_cluster", architecture="cluster", **common),
            ScenarioConfig(prompts=four, name="arch_cluster_edge", architecture="cluster_edge", **common),
            ScenarioConfig(prompts=FRUIT_PAIR, name="arch_d2d", architecture="d2d", **common),
            ScenarioConfig(prompts=four, name="arch_edge_fade", architecture="edge",
                           fade_timeline=((0.0, 2.0), (0.3, 0.2), (1.5, 3.0)), **common),
        ]
    else:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return [validate(c) for c in cfgs]


PRESETS = ("ber_sweep", "split_sweep", "mismatch", "arch_compare")


def run_preset(name: str, out_dir: str | Path, seed: int = 2024, jobs: int = 1,
               repetitions: int | None = None) -> list[Artifacts]:
    return [run_scenario(c, out_dir, jobs) for c in preset_configs(name, seed, repetitions)]
