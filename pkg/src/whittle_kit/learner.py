"""Model-based index learning: explore uniformly, estimate the arm, re-solve on a geometric schedule."""
from __future__ import annotations

import csv
import math
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from pathlib import Path

import numpy as np

from .arm import Arm, ArmEstimate
from .errors import InsufficientSamples, WhittleKitError
from .solver import ewisc


@dataclass
class EmpiricalCounts:
    n_sa: np.ndarray  # (S, 2)
    n_sas: np.ndarray  # (S, 2, S)
    t: int = 0

    @classmethod
    def empty(cls, num_states: int) -> "EmpiricalCounts":
        return cls(np.zeros((num_states, 2), dtype=np.int64), np.zeros((num_states, 2, num_states), dtype=np.int64))

    @property
    def num_states(self) -> int:
        return self.n_sa.shape[0]

    def observe(self, state: int, action: int, next_state: int) -> None:
        self.n_sa[state, action] += 1
        self.n_sas[state, action, next_state] += 1
        self.t += 1

    def covered(self) -> bool:
        return bool(self.n_sa.min() > 0)

    def check(self) -> None:
        assert self.n_sa.sum() == self.t
        assert np.array_equal(self.n_sas.sum(axis=2), self.n_sa)


def estimate_arm(counts: EmpiricalCounts, r_passive, r_active, discount: float | None = None) -> ArmEstimate:
    """Empirical transition frequencies with the known rewards."""
    if not counts.covered():
        missing = [tuple(int(x) for x in p) for p in np.argwhere(counts.n_sa == 0)]
        raise InsufficientSamples(f"unvisited (state, action) pairs: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    P = counts.n_sas / counts.n_sa[:, :, None]
    return ArmEstimate(
        num_states=counts.num_states,
        p_passive=P[:, 0, :],
        p_active=P[:, 1, :],
        r_passive=r_passive,
        r_active=r_active,
        discount=discount,
        source_counts=counts.t,
    )


class ArmSimulator:
    """Samples transitions of a known arm (the reference simulator)."""

    def __init__(self, arm: Arm, initial_state: int = 0):
        self.arm = arm
        self.num_states = arm.num_states
        self.initial_state = initial_state
        self._cum = [[list(accumulate(row)) for row in arm.transitions[a]] for a in (0, 1)]
        self._rewards = [arm.r_passive.tolist(), arm.r_active.tolist()]

    def step(self, state: int, action: int, rng: np.random.Generator) -> tuple[int, float]:
        cum = self._cum[action][state]
        nxt = min(bisect_right(cum, rng.random() * cum[-1]), self.num_states - 1)
        return nxt, self._rewards[action][state]


@dataclass
class Schedule:
    """When to re-solve: first at coverage, then after gaps first_gap, k*first_gap, k^2*first_gap, ...

    ``checkpoints`` replaces the geometric rule with fixed step counts (runs
    before coverage are skipped).  ``final`` adds a run at the last step.
    """

    factor: float = 2.0
    first_gap: int = 1
    checkpoints: tuple[int, ...] | None = None
    final: bool = True

    def __post_init__(self):
        if self.factor <= 1.0:
            raise ValueError("schedule factor must exceed 1")
        if self.first_gap < 1:
            raise ValueError("first_gap must be a positive integer")

    def run_times(self, start: int, horizon: int) -> list[int]:
        """Steps (1-based counts of observed transitions) at which to run, from ``start`` on."""
        if self.checkpoints is not None:
            times = sorted({t for t in self.checkpoints if start <= t <= horizon})
        else:
            times, t, gap = [], start, self.first_gap
            while t <= horizon:
                times.append(t)
                t += gap
                gap = math.ceil(gap * self.factor)
        if self.final and start <= horizon and (not times or times[-1] != horizon):
            times.append(horizon)
        return times


@dataclass
class LearningTrace:
    algorithm: str
    num_states: int
    truth: np.ndarray | None = None
    times: list[int] = field(default_factory=list)
    estimates: list[np.ndarray] = field(default_factory=list)
    indexable: list[bool] = field(default_factory=list)
    model_error: list[float] = field(default_factory=list)
    ewisc_ms: list[float] = field(default_factory=list)
    failures: list[str | None] = field(default_factory=list)
    horizon: int = 0

    def record(self, t, estimate, indexable=True, model_error=math.nan, ms=0.0, failure=None):
        if self.times and t <= self.times[-1]:
            raise ValueError("trace times must increase")
        self.times.append(int(t))
        self.estimates.append(np.asarray(estimate, dtype=float))
        self.indexable.append(bool(indexable))
        self.model_error.append(float(model_error))
        self.ewisc_ms.append(float(ms))
        self.failures.append(failure)

    def __len__(self):
        return len(self.times)

    @property
    def abs_errors(self) -> np.ndarray:
        if self.truth is None:
            raise ValueError("trace has no reference indices")
        return np.abs(np.array(self.estimates).reshape(len(self), self.num_states) - self.truth)

    def final_estimate(self) -> np.ndarray | None:
        for est, fail in zip(reversed(self.estimates), reversed(self.failures)):
            if fail is None:
                return est
        return None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "state", "estimate", "truth", "abs_error", "indexable", "ewisc_ms"])
            for t, est, idx, ms in zip(self.times, self.estimates, self.indexable, self.ewisc_ms):
                for s in range(self.num_states):
                    truth = self.truth[s] if self.truth is not None else math.nan
                    w.writerow([t, s, fmt(est[s]), fmt(truth), fmt(abs(est[s] - truth)), int(idx), fmt(ms)])


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def error_metrics(trace: LearningTrace, true_indices=None) -> np.ndarray:
    """Rows of (t, min, median, max) absolute index error, one per record."""
    truth = np.asarray(true_indices if true_indices is not None else trace.truth, dtype=float)
    if truth.shape != (trace.num_states,):
        raise ValueError(f"expected {trace.num_states} reference indices, got shape {truth.shape}")
    if not len(trace):
        return np.empty((0, 4))
    err = np.abs(np.array(trace.estimates) - truth)
    return np.column_stack([trace.times, err.min(axis=1), np.median(err, axis=1), err.max(axis=1)])


def write_metrics_csv(metrics: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "min_err", "median_err", "max_err"])
        for row in metrics:
            w.writerow([int(row[0])] + [fmt(x) for x in row[1:]])


def run_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for action choice and for the simulator."""
    actions, sim = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(actions), np.random.default_rng(sim)


def blinq_run(
    simulator: ArmSimulator,
    rewards: tuple,
    schedule: Schedule,
    horizon: int,
    seed: int,
    discount: float | None = None,
    reference: Arm | None = None,
    true_indices=None,
) -> LearningTrace:
    """Uniform exploration with periodic re-solving of the estimated arm.

    ``rewards`` is (r_passive, r_active).  With a ``reference`` arm the trace
    also records the model error and, unless given, the reference indices.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    S = simulator.num_states
    r_passive, r_active = (np.asarray(r, dtype=float) for r in rewards)
    if true_indices is None and reference is not None:
        true_indices = ewisc(reference).indices
    trace = LearningTrace("blinq", S, None if true_indices is None else np.asarray(true_indices, float), horizon=horizon)
    action_rng, sim_rng = run_streams(seed)
    actions = action_rng.integers(0, 2, size=horizon).tolist()
    counts = EmpiricalCounts.empty(S)
    state = simulator.initial_state
    pending: list[int] | None = None
    unvisited = 2 * S

    for t in range(1, horizon + 1):
        a = actions[t - 1]
        nxt, _ = simulator.step(state, a, sim_rng)
        if counts.n_sa[state, a] == 0:
            unvisited -= 1
        counts.observe(state, a, nxt)
        state = nxt
        if unvisited:
            continue
        if pending is None:
            pending = schedule.run_times(t, horizon)[::-1]
        if pending and pending[-1] == t:
            pending.pop()
            _solve_and_record(trace, counts, r_passive, r_active, discount, reference)
    return trace


def _solve_and_record(trace, counts, r_passive, r_active, discount, reference):
    estimate = estimate_arm(counts, r_passive, r_active, discount)
    model_error = estimate.distance(reference) if reference is not None else math.nan
    start = time.perf_counter()
    try:
        result = ewisc(estimate)
    except WhittleKitError as exc:
        ms = 1e3 * (time.perf_counter() - start)
        trace.record(counts.t, np.full(counts.num_states, np.nan), False, model_error, ms, f"{type(exc).__name__}: {exc}")
        return
    ms = 1e3 * (time.perf_counter() - start)
    trace.record(counts.t, result.indices, result.indexable, model_error, ms)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def write_trace_files(traces, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for tr in traces:
        p = out / f"trace_{tr.algorithm}.csv"
        tr.write_csv(p)
        paths.append(p)
    return paths
