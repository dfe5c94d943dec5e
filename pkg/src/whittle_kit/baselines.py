"""Tabular two-timescale Q-learning baselines for Whittle (QWI) and Gittins (QGI) indices.

Both keep one Q-table per reference state k, penalized by the current index
estimate lam[k], and learn every table from the same uniformly explored
trajectory.  Q-values move on the fast timescale; lam[k] drifts on the slow
one towards the penalty that makes both actions equally good in state k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arm import is_gittins
from .errors import StructureMismatch
from .learner import ArmSimulator, LearningTrace, Schedule, run_streams


@dataclass
class QParams:
    """Learning-rate schedules.

    Fast rate for a pair visited n times: 1 / ceil(n / alpha_block).
    Slow rate at step t: index_rate / (1 + t log t / index_horizon).
    """

    alpha_block: int = 500
    index_rate: float = 0.01
    index_horizon: float = 1000.0
    initial_index: float = 0.0
    zero_rates: bool = False

    def alpha(self, n: int) -> float:
        if self.zero_rates:
            return 0.0
        return 1.0 / math.ceil(max(n, 1) / self.alpha_block)

    def beta(self, t: int) -> float:
        if self.zero_rates:
            return 0.0
        return self.index_rate / (1.0 + t * math.log(max(t, 1)) / self.index_horizon)


def qwi_update(q, lam, state, action, reward, nxt, alpha, gamma, relative):
    """One fast-timescale update of every reference table, in place."""
    target = reward - lam * action + gamma * q[:, nxt, :].max(axis=1)
    if relative:
        # mean over the table; a single reference pair is unstable while alpha is still 1
        target -= q.mean(axis=(1, 2))
    q[:, state, action] += alpha * (target - q[:, state, action])


def qgi_update(q, lam, state, reward, nxt, alpha, discount):
    """One fast-timescale update of the active values of every reference table, in place."""
    target = reward - lam + discount * np.maximum(q[:, nxt], 0.0)
    q[:, state] += alpha * (target - q[:, state])


def _trace(name, simulator, true_indices, horizon):
    truth = None if true_indices is None else np.asarray(true_indices, dtype=float)
    return LearningTrace(name, simulator.num_states, truth, horizon=horizon)


def qwi_run(
    simulator: ArmSimulator,
    params: QParams,
    horizon: int,
    seed: int,
    discount: float | None = None,
    true_indices=None,
    schedule: Schedule | None = None,
) -> LearningTrace:
    """Whittle-index Q-learning.

    Discounted arms use plain discounted Q-learning.  Average-reward arms use
    relative Q-learning: the target subtracts the mean of Q_k.
    """
    S = simulator.num_states
    schedule = schedule or Schedule()
    record_at = set(schedule.run_times(1, horizon))
    trace = _trace("qwi", simulator, true_indices, horizon)
    action_rng, sim_rng = run_streams(seed)
    actions = action_rng.integers(0, 2, size=horizon).tolist()
    gamma = 1.0 if discount is None else discount
    ref = np.arange(S)

    q = np.zeros((S, S, 2))
    lam = np.full(S, params.initial_index, dtype=float)
    visits = np.zeros((S, 2), dtype=np.int64)
    state = simulator.initial_state
    for t in range(1, horizon + 1):
        a = actions[t - 1]
        nxt, r = simulator.step(state, a, sim_rng)
        visits[state, a] += 1
        qwi_update(q, lam, state, a, r, nxt, params.alpha(visits[state, a]), gamma, discount is None)
        lam += params.beta(t) * (q[ref, ref, 1] - q[ref, ref, 0])
        state = nxt
        if t in record_at:
            trace.record(t, lam.copy())
    return trace


def qgi_run(
    simulator: ArmSimulator,
    params: QParams,
    horizon: int,
    seed: int,
    discount: float | None = None,
    true_indices=None,
    schedule: Schedule | None = None,
) -> LearningTrace:
    """Gittins-index Q-learning on a rested, discounted arm.

    Stopping is worth 0 and a passive step leaves the state unchanged, so only
    the active values are learned: Q_k(x) <- r_x - lam_k + beta * max(Q_k(x'), 0).
    Passive steps carry no information and only advance time.
    """
    arm = getattr(simulator, "arm", None)
    if discount is None or not (0.0 < discount < 1.0):
        raise StructureMismatch("Gittins learning needs a discount in (0, 1)")
    if arm is not None and not is_gittins(arm):
        raise StructureMismatch("arm is not rested: passive transitions must be the identity with zero reward")
    S = simulator.num_states
    schedule = schedule or Schedule()
    record_at = set(schedule.run_times(1, horizon))
    trace = _trace("qgi", simulator, true_indices, horizon)
    action_rng, sim_rng = run_streams(seed)
    actions = action_rng.integers(0, 2, size=horizon).tolist()
    ref = np.arange(S)

    q = np.zeros((S, S))
    lam = np.full(S, params.initial_index, dtype=float)
    visits = np.zeros(S, dtype=np.int64)
    state = simulator.initial_state
    for t in range(1, horizon + 1):
        a = actions[t - 1]
        nxt, r = simulator.step(state, a, sim_rng)
        if a == 1:
            visits[state] += 1
            qgi_update(q, lam, state, r, nxt, params.alpha(visits[state]), discount)
        lam += params.beta(t) * q[ref, ref]
        state = nxt
        if t in record_at:
            trace.record(t, lam.copy())
    return trace
