"""Command-line entry point: simulate / baseline / sweep / identities."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (
    load_experiment_config,
    run_baseline,
    run_identities,
    run_simulate,
    run_sweep,
)

_COMMANDS = {
    "simulate": (run_simulate, "simulate all scenarios and write dataset.csv"),
    "baseline": (run_baseline, "train the threshold baseline and write table1.csv"),
    "sweep": (run_sweep, "sweep fairness hyperparameters and write pareto reports"),
    "identities": (run_identities, "check the fairness conversion identities"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairleak",
        description="Fairness-aware leakage detection experiments on water networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, type=Path, help="experiment config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        cmd.add_argument("--jobs", type=int, default=1, help="parallel workers")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    runner, _ = _COMMANDS[args.command]
    try:
        cfg = load_experiment_config(args.config, seed_override=args.seed)
        runner(cfg, args.out, jobs=max(1, args.jobs))
    except Exception as exc:  # noqa: BLE001 - surface a clean CLI error
        logging.getLogger("fairleak").error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
