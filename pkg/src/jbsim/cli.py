"""Command-line front end: single runs, the full scheme/scenario/seed matrix,
and config validation.

Exit status: 0 on success, 1 on a validation problem (flags or config),
2 on a simulation invariant failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, SimulationSettings, load_config
from .core import SimulationError
from .metrics import summary_row, write_outputs, write_summary
from .scenario import ExperimentKind, run_simulation

SCENARIO_NAMES = {kind.value: kind for kind in ExperimentKind}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse defaults to exit 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jbsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment and write its CSV outputs")
    run_p.add_argument("--scenario", required=True, choices=sorted(SCENARIO_NAMES))
    run_p.add_argument("--scheme", required=True, choices=["jb", "jbe"])
    run_p.add_argument("--density", choices=["low", "high", "desk"], default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--duration", type=float, default=None)
    run_p.add_argument("--config", type=Path, default=None)
    run_p.add_argument("--out", type=Path, required=True)

    matrix_p = sub.add_parser("matrix", help="run {jb,jbe} x scenarios x seeds")
    matrix_p.add_argument("--scenarios", default="slowdown,stopping,stability",
                          help="comma-separated subset of slowdown,stopping,stability")
    matrix_p.add_argument("--seeds", type=int, required=True, help="number of seeds (1..N)")
    matrix_p.add_argument("--density", choices=["low", "high", "desk"], default=None)
    matrix_p.add_argument("--duration", type=float, default=None)
    matrix_p.add_argument("--config", type=Path, default=None)
    matrix_p.add_argument("--jobs", type=int, default=1)
    matrix_p.add_argument("--out", type=Path, required=True)

    val_p = sub.add_parser("validate-config", help="parse and validate a config file")
    val_p.add_argument("--config", type=Path, required=True)
    return parser


def _settings_from_args(args: argparse.Namespace) -> SimulationSettings:
    overrides = {}
    if getattr(args, "density", None):
        overrides["scenario.density"] = args.density
    if getattr(args, "seed", None) is not None:
        overrides["scenario.seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        overrides["scenario.duration"] = args.duration
    return load_config(args.config, overrides)


def _run_one(settings: SimulationSettings, scheme: str, scenario: str, out_dir: Path) -> list[str]:
    metrics = run_simulation(settings, scheme, SCENARIO_NAMES[scenario])
    write_outputs(metrics, out_dir)
    return summary_row(metrics)


def _matrix_cell(job: tuple[SimulationSettings, str, str, Path]) -> list[str]:
    return _run_one(*job)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            load_config(args.config)
            print(f"config ok: {args.config}")
            return 0

        if args.command == "run":
            settings = _settings_from_args(args)
            _run_one(settings, args.scheme, args.scenario, args.out)
            return 0

        # matrix
        if args.seeds < 1:
            raise ConfigError("--seeds must be at least 1")
        scenarios = [s.strip() for s in args.scenarios.split(",") if s.strip()]
        for name in scenarios:
            if name not in SCENARIO_NAMES:
                raise ConfigError(f"unknown scenario {name!r} in --scenarios")
        base = _settings_from_args(args)
        jobs = []
        for scheme in ("jb", "jbe"):
            for scenario in scenarios:
                for seed in range(1, args.seeds + 1):
                    settings = replace(base, scenario=replace(base.scenario, seed=seed))
                    out_dir = args.out / f"{scheme}_{scenario}_{seed}"
                    jobs.append((settings, scheme, scenario, out_dir))
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_matrix_cell, jobs))
        else:
            rows = [_matrix_cell(job) for job in jobs]
        args.out.mkdir(parents=True, exist_ok=True)
        write_summary(rows, args.out / "summary.csv")
        print(f"wrote {len(rows)} runs to {args.out / 'summary.csv'}")
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"simulation invariant failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
