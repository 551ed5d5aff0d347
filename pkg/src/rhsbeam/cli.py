"""Command-line entry point.

Subcommands:
  gen-codebook   build and write the codebook files for a configuration
  train          run one beam-training trial and print the transcripts
  sweep          full Monte-Carlo experiment -> trials.csv, summary.csv, records.jsonl
  overhead       print the training-overhead table for the five schemes

Exit codes: 0 success, 2 configuration error, 3 degenerate-geometry abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import experiment, training
from .beamformer import DegenerateGeometryError
from .codebooks import CodebookFormatError
from .model import ArrayModel, ConfigError

log = logging.getLogger("rhsbeam")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--profile", choices=("desk", "paper"), default="desk",
                        help="parameter preset (default: desk)")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out-dir", default="out",
                        help="directory for codebooks and results (default: out)")
    parser.add_argument("--schemes", help="comma-separated scheme subset")


def _build_config(args) -> experiment.ExperimentConfig:
    file_kv = experiment.parse_config_file(args.config) if args.config else {}
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "schemes", None):
        overrides["schemes"] = tuple(s.strip() for s in args.schemes.split(","))
    if getattr(args, "scenario", None):
        overrides["scenario"] = args.scenario
    return experiment.make_config(profile=args.profile, file_kv=file_kv,
                                  overrides=overrides)


def cmd_gen_codebook(args) -> int:
    config = _build_config(args)
    books = experiment.build_codebooks(config)
    experiment.save_codebooks(books, args.out_dir, config)
    for name, filename in experiment.CODEBOOK_FILES.items():
        print(f"wrote {os.path.join(args.out_dir, filename)}")
    print(f"config hash: {config.config_hash_hex()}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _build_config(args)
    books = experiment.load_codebooks(args.out_dir, config)
    array = ArrayModel.from_config(config.system)
    record, _ = experiment.run_trial(config, array, books, args.trial)
    print(json.dumps(record, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _build_config(args)
    books = experiment.load_codebooks(args.out_dir, config)
    records, rows = experiment.run_experiment(config, books=books,
                                              workers=args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    trials_path = os.path.join(args.out_dir, "trials.csv")
    summary_path = os.path.join(args.out_dir, "summary.csv")
    records_path = os.path.join(args.out_dir, "records.jsonl")
    experiment.write_csv(rows, experiment.TRIAL_CSV_COLUMNS, trials_path)
    experiment.write_csv(experiment.aggregate(rows),
                         experiment.SUMMARY_CSV_COLUMNS, summary_path)
    experiment.write_records_jsonl(records, records_path)
    print(f"wrote {trials_path}, {summary_path}, {records_path}")
    return EXIT_OK


def cmd_overhead(args) -> int:
    for scheme in training.SCHEMES:
        slots = training.overhead(scheme, args.angle_samples,
                                  args.distance_samples, args.users,
                                  q_candidates=args.candidates)
        print(f"{scheme} {slots}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhsbeam",
        description="RHS beamforming codebooks and multi-user beam training simulator")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-codebook", help="build and write codebook files")
    _add_common(p)
    p.set_defaults(func=cmd_gen_codebook)

    p = sub.add_parser("train", help="run one training trial, print transcripts")
    _add_common(p)
    p.add_argument("--trial", type=int, default=0, help="trial index (default 0)")
    p.add_argument("--scenario", choices=sorted(experiment.SCENARIO_RANGES),
                   help="user placement scenario override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="full Monte-Carlo experiment")
    _add_common(p)
    p.add_argument("--scenario", choices=sorted(experiment.SCENARIO_RANGES),
                   help="user placement scenario override")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel trial workers (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("overhead", help="print the per-scheme overhead table")
    p.add_argument("--angle-samples", type=int, default=64, metavar="I")
    p.add_argument("--distance-samples", type=int, default=10, metavar="J")
    p.add_argument("--users", type=int, default=10, metavar="K")
    p.add_argument("--candidates", type=int, default=3, metavar="Q")
    p.set_defaults(func=cmd_overhead)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CodebookFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateGeometryError as exc:
        print(f"degenerate geometry: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
