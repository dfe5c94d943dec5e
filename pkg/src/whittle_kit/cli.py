"""Command-line entry point: ``whittle-kit {compute,scan,learn,search}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .arm import Arm, validate_arm
from .errors import ConfigError, NotUnichain, WhittleKitError
from .experiments import EXPERIMENTS, ExperimentConfig, experiment, run_experiment
from .learner import Schedule
from .oracle import lambda_scan, search_non_indexable
from .solver import ewisc


def _read_arm(path: str, discount: float | None) -> Arm:
    arm = Arm.from_json(Path(path).read_text())
    if discount is not None:
        arm = arm.replace(discount=discount)
    return arm


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_compute(args) -> int:
    arm = _read_arm(args.arm, args.discount)
    if arm.discount is None:
        report = validate_arm(arm, seed=args.seed)
        if not report.unichain_all_policies:
            raise NotUnichain(
                f"policy {sorted(report.counterexample_policy)} induces several recurrent classes "
                f"({report.unichain_check} check)"
            )
    _emit(ewisc(arm).to_dict(), args.out)
    return 0


def cmd_scan(args) -> int:
    arm = _read_arm(args.arm, args.discount)
    _emit(lambda_scan(arm, grid_size=args.grid).to_dict(), args.out)
    return 0


def cmd_search(args) -> int:
    arm = search_non_indexable(args.seed, args.states, args.trials, args.discount)
    _emit(arm.to_dict(), args.out)
    return 0


def cmd_learn(args) -> int:
    schedule = Schedule(factor=args.schedule_factor) if args.schedule_factor else None
    seeds = tuple(args.seed) if args.seed else None
    algorithms = tuple(args.algorithms) if args.algorithms else None
    if args.experiment:
        if args.arm:
            raise ConfigError("give either an experiment name or --arm, not both")
        config = experiment(
            args.experiment, seeds=seeds, horizon=args.horizon, schedule=schedule,
            algorithms=algorithms, discount=args.discount,
        )
    elif args.arm:
        config = ExperimentConfig(
            "custom",
            algorithms or ("blinq",),
            args.horizon or 100_000,
            seeds or (0,),
            arm_file=args.arm,
            discount=args.discount,
            schedule=schedule or Schedule(),
        )
    else:
        raise ConfigError("an experiment name or --arm is required")
    _, summary = run_experiment(config, args.out)
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="whittle-kit", description="Whittle/Gittins index computation and learning.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", help="indices of an arm given as JSON")
    c.add_argument("arm")
    c.add_argument("--discount", type=float)
    c.add_argument("--seed", type=int, default=0, help="seed for sampled unichain checks on large arms")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compute)

    s = sub.add_parser("scan", help="brute-force optimal advantage over a penalty grid (S <= 12)")
    s.add_argument("arm")
    s.add_argument("--discount", type=float)
    s.add_argument("--grid", type=int, help="number of grid points (at least 4*S)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_scan)

    l = sub.add_parser("learn", help="run learning algorithms and write traces, metrics and summary")
    l.add_argument("experiment", nargs="?", choices=sorted(EXPERIMENTS))
    l.add_argument("--arm", help="arm JSON for a custom run")
    l.add_argument("--algorithms", nargs="+", choices=["blinq", "qgi", "qwi"])
    l.add_argument("--seed", type=int, action="append", help="repeat for several seeds")
    l.add_argument("--horizon", type=int)
    l.add_argument("--schedule-factor", type=float)
    l.add_argument("--discount", type=float)
    l.add_argument("--out", default="results")
    l.set_defaults(func=cmd_learn)

    f = sub.add_parser("search", help="find a random non-indexable arm")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--states", type=int, default=4)
    f.add_argument("--trials", type=int, default=10_000)
    f.add_argument("--discount", type=float)
    f.add_argument("--out")
    f.set_defaults(func=cmd_search)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WhittleKitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
