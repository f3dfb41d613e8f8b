"""Command-line entry points: run experiments, audit transcripts, generate data.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 audit
findings present.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .crypto import transcript_audit
from .errors import ConfigError, ParseError, SplitGnnError
from .experiments import ExperimentConfig, emit_report, run_experiment, run_grid
from .graph import SyntheticSpec, generate_synthetic, save_dataset
from .transcript import RoundTranscript

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_FINDINGS = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitgnn",
        description="Split-learning GNN simulator over vertically partitioned graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config or a grid")
    run.add_argument("--config", required=True, help="experiment config JSON")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--seeds", help="comma-separated seed overrides")
    run.add_argument("--secure", action="store_true",
                     help="encrypt embedding uplinks")
    run.add_argument("--grid", choices=["table1", "table2", "table3", "cost"],
                     help="run a predefined grid instead of a single strategy")

    audit = sub.add_parser("audit", help="audit a transcript CSV for leaks")
    audit.add_argument("--transcript", required=True)

    gen = sub.add_parser("gen-synthetic", help="write a synthetic dataset directory")
    gen.add_argument("--spec", required=True, help="synthetic spec JSON")
    gen.add_argument("--out", required=True, help="dataset directory to create")
    gen.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.seeds:
        overrides = {**config.to_json(),
                     "seeds": [int(s) for s in args.seeds.split(",")]}
        config = ExperimentConfig.from_json(overrides)
    if args.secure:
        config = ExperimentConfig.from_json({**config.to_json(), "secure": True})
    if args.grid:
        rows, costs, transcript = run_grid(config, args.grid)
    else:
        rows, cost, transcript = run_experiment(config)
        costs = [cost]
    metrics_path, cost_path = emit_report(rows, costs, args.out)
    if transcript is not None:
        transcript.save(Path(args.out) / "transcript.csv")
    print(f"wrote {metrics_path} ({len(rows)} rows) and {cost_path} ({len(costs)} rows)")
    return EXIT_OK


def _cmd_audit(args) -> int:
    transcript = RoundTranscript.load(args.transcript)
    report = transcript_audit(transcript)
    print(report.render())
    return EXIT_OK if report.ok else EXIT_FINDINGS


def _cmd_gen(args) -> int:
    payload = json.loads(Path(args.spec).read_text())
    try:
        spec = SyntheticSpec.from_json(payload)
    except TypeError as exc:
        raise ConfigError(f"{args.spec}: {exc}") from None
    bundle = generate_synthetic(spec, seed=args.seed)
    save_dataset(bundle, args.out)
    g = bundle.graph
    print(f"wrote {args.out}: {g.num_nodes} nodes, "
          f"{sum(len(r) for r in g.relations.values())} edges, "
          f"{len(bundle.metapaths)} metapaths")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "audit":
            return _cmd_audit(args)
        return _cmd_gen(args)
    except (ConfigError, ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SplitGnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
