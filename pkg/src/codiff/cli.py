"""Command-line entry point: ``codiff run|preset|summarize|graph``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, with_overrides
from .harness import PRESETS, SummaryError, emit_summary, run_preset, run_scenario
from .semantic import default_graph, dump_graph, load_graph

log = logging.getLogger("codiff")

EXIT_CONFIG, EXIT_DOMAIN, EXIT_IO, EXIT_DATA = 2, 3, 4, 5


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--out-dir", type=Path, default=Path("results"), help="artifact directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--reps", type=int, default=None, help="repetitions per sweep cell")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="codiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run a scenario config file")
    run.add_argument("config", type=Path)

    pre = sub.add_parser("preset", parents=[common], help="run a built-in experiment")
    pre.add_argument("name", choices=PRESETS)

    summ = sub.add_parser("summarize", parents=[common], help="aggregate a results CSV")
    summ.add_argument("csv", type=Path)
    summ.add_argument("-o", "--output", type=Path, default=None)

    graph = sub.add_parser("graph", parents=[common], help="concept graph utilities")
    graph.add_argument("action", choices=["show"])
    graph.add_argument("--file", type=Path, default=None, help="graph file instead of the default")
    return parser


def _report(artifacts) -> None:
    for a in artifacts:
        print(f"{a.directory}: {a.rows} rows -> {a.csv_path.name}, {a.summary_path.name}, {len(a.images)} images")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = with_overrides(load_config(args.config), seed=args.seed, repetitions=args.reps)
            _report([run_scenario(cfg, args.out_dir, args.jobs)])
        elif args.command == "preset":
            seed = 2024 if args.seed is None else args.seed
            _report(run_preset(args.name, args.out_dir, seed, args.jobs, args.reps))
        elif args.command == "summarize":
            print(emit_summary(args.csv, args.output))
        elif args.command == "graph":
            graph = load_graph(args.file) if args.file else default_graph()
            sys.stdout.write(dump_graph(graph))
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SummaryError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error[domain]: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return 0


if __name__ == "__main__":
    sys.exit(main())
