"""Command-line entry point: ``sl2walk <experiment> [options]``.

Exit status: 0 when the experiment ran and every hard pathwise assertion held
(statistical verdicts may still fail; they are in the report), 1 on a failed
hard assertion, 2 on configuration errors or a refused schedule.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone

from .experiments.config import DEFAULT_SEED, EXPERIMENTS, ConfigError, validate_config
from .experiments.runs import ExperimentRefused, run_experiment
from .measures import PRESETS

EXIT_OK, EXIT_HARD_FAILURE, EXIT_CONFIG = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sl2walk",
        description="Monte Carlo experiments on random products of SL(2, R) matrices.",
        epilog=f"Presets: {', '.join(PRESETS)}. Default seed: {DEFAULT_SEED}.",
    )
    sub = parser.add_subparsers(dest="experiment", metavar="experiment", required=True,
                                help=", ".join(EXPERIMENTS))
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", help="built-in schedule name")
        src.add_argument("--config", help="JSON config file")
        grid = p.add_mutually_exclusive_group()
        grid.add_argument("--n", type=int, help="single product length")
        grid.add_argument("--n-grid", type=_int_list, help="comma-separated product lengths")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="report path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--deterministic", action="store_true",
                       help="omit wall-clock and worker information from the report")
    return parser


def _load_document(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([("--config", f"cannot read {path}: {exc.strerror}")]) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"{path}: line {exc.lineno} column {exc.colno}", exc.msg)]) from exc


def _document(args) -> dict:
    doc = _load_document(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigError([("<root>", "config must be a JSON object")])
    doc = dict(doc)
    if args.preset:
        doc["preset"] = args.preset
    if args.n is not None:
        doc["n_grid"] = [args.n]
    if args.n_grid is not None:
        doc["n_grid"] = args.n_grid
    for key in ("trials", "seed", "workers"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if "preset" not in doc and "schedule" not in doc:
        raise ConfigError([("schedule", f"give --preset or --config; presets: {', '.join(sorted(PRESETS))}")])
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        cfg = validate_config(_document(args), args.experiment)
    except ConfigError as exc:
        for path, msg in exc.violations:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(args.experiment, cfg)
    except ExperimentRefused as exc:
        print(f"refused: {exc}", file=sys.stderr)
        print(f"probe: {json.dumps(exc.diagnostic, sort_keys=True)}", file=sys.stderr)
        return EXIT_CONFIG
    report.runtime["started_at"] = started
    text = report.to_csv() if args.format == "csv" else report.to_json(args.deterministic)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    return EXIT_HARD_FAILURE if report.hard_failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
