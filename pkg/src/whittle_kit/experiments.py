"""Experiment definitions (ex1, ex2, ex8) and a runner that writes traces, metrics and a summary."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .arm import Arm, generate_dirichlet_arm
from .baselines import QParams, qgi_run, qwi_run
from .errors import ConfigError
from .learner import ArmSimulator, LearningTrace, Schedule, blinq_run, error_metrics, fmt, write_metrics_csv
from .solver import ewisc

ALGORITHMS = ("blinq", "qgi", "qwi")
THREADS_ENV = "WHITTLE_KIT_THREADS"


def load_fixture(name: str) -> Arm:
    """Arm stored in the package data directory, e.g. ``load_fixture("restart5")``."""
    text = resources.files("whittle_kit").joinpath(f"data/{name}.json").read_text()
    return Arm.from_json(text)


def exploration_min_mass(arm: Arm) -> float:
    """Smallest stationary probability of the uniformly explored chain."""
    P = 0.5 * (arm.p_passive + arm.p_active)
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    pi = pi / pi.sum()
    return float(pi.min())


def best_mixing_seed(num_states: int, reward_law: str, candidates=range(100)) -> int:
    """Generator seed whose arm is best covered by uniform exploration.

    Random sparse instances can contain states that uniform exploration almost
    never reaches; picking the seed by this rule (not by learning results)
    keeps the benchmark instance reproducible and learnable.
    """
    return max(candidates, key=lambda s: (exploration_min_mass(generate_dirichlet_arm(num_states, s, reward_law)), -s))


@dataclass
class ExperimentConfig:
    name: str
    algorithms: tuple[str, ...]
    horizon: int
    seeds: tuple[int, ...] = (0,)
    arm_file: str | None = None
    fixture: str | None = None
    generator: dict | None = None  # {"num_states", "seed", "reward_law"}
    discount: float | None = None
    schedule: Schedule = field(default_factory=Schedule)
    params: QParams = field(default_factory=QParams)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if sum(x is not None for x in (self.arm_file, self.fixture, self.generator)) != 1:
            raise ConfigError("exactly one of arm_file, fixture, generator must be set")

    def build_arm(self) -> Arm:
        if self.arm_file is not None:
            arm = Arm.from_json(Path(self.arm_file).read_text())
        elif self.fixture is not None:
            arm = load_fixture(self.fixture)
        else:
            g = self.generator
            arm = generate_dirichlet_arm(g["num_states"], g["seed"], g.get("reward_law", "five-plus"))
        if self.discount is not None:
            arm = arm.replace(discount=self.discount)
        return arm


# generator seeds are best_mixing_seed(5, "geometric") == 64 and best_mixing_seed(50, "five-plus") == 56
EXPERIMENTS = {
    "ex1": ExperimentConfig("ex1", ("blinq", "qwi"), 20_000, fixture="restart5", discount=0.9),
    "ex2": ExperimentConfig(
        "ex2", ALGORITHMS, 100_000, generator={"num_states": 5, "seed": 64, "reward_law": "geometric"}, discount=0.9
    ),
    "ex8": ExperimentConfig(
        "ex8", ALGORITHMS, 100_000, generator={"num_states": 50, "seed": 56, "reward_law": "five-plus"}, discount=0.9
    ),
}


def experiment(name: str, **overrides) -> ExperimentConfig:
    try:
        base = EXPERIMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    return replace(base, **{k: v for k, v in overrides.items() if v is not None})


def run_job(arm: Arm, algorithm: str, seed: int, config: ExperimentConfig, truth) -> LearningTrace:
    sim = ArmSimulator(arm)
    if algorithm == "blinq":
        return blinq_run(
            sim, (arm.r_passive, arm.r_active), config.schedule, config.horizon, seed, arm.discount, arm, truth
        )
    run = qwi_run if algorithm == "qwi" else qgi_run
    return run(sim, config.params, config.horizon, seed, arm.discount, truth, config.schedule)


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer") from None


def summarize(traces: list[LearningTrace]) -> dict:
    """Final (min, median, max) error averaged over seeds, per algorithm."""
    out: dict = {}
    by_alg: dict[str, list[LearningTrace]] = {}
    for tr in traces:
        by_alg.setdefault(tr.algorithm, []).append(tr)
    for alg, group in by_alg.items():
        finals = []
        for tr in group:
            m = error_metrics(tr)
            m = m[~np.isnan(m[:, 3])]
            if len(m):
                finals.append(m[-1])
        if not finals:
            out[alg] = {"min": None, "median": None, "max": None, "final_t": None,
                        "note": "no index records (coverage not reached)"}
            continue
        f = np.array(finals)
        out[alg] = {
            "min": float(f[:, 1].mean()),
            "median": float(f[:, 2].mean()),
            "max": float(f[:, 3].mean()),
            "final_t": int(f[:, 0].max()),
            "seeds": len(finals),
        }
    return out


def run_experiment(config: ExperimentConfig, out_dir=None) -> tuple[list[LearningTrace], dict]:
    """Run every (algorithm, seed) job; write per-job CSVs and summary.json if ``out_dir`` is given."""
    arm = config.build_arm()
    truth = ewisc(arm).indices
    jobs = [(alg, seed) for alg in config.algorithms for seed in config.seeds]
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(run_job, arm, alg, seed, config, truth) for alg, seed in jobs]
            traces = [f.result() for f in futures]
    else:
        traces = [run_job(arm, alg, seed, config, truth) for alg, seed in jobs]
    summary = summarize(traces)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for (alg, seed), tr in zip(jobs, traces):
            tr.write_csv(out / f"trace_{alg}_seed{seed}.csv")
            write_metrics_csv(error_metrics(tr), out / f"metrics_{alg}_seed{seed}.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        (out / "truth.csv").write_text("state,index\n" + "".join(f"{s},{fmt(x)}\n" for s, x in enumerate(truth)))
    return traces, summary
