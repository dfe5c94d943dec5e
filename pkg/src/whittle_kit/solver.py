"""Index computation by threshold tracking (extended WISC).

Starting from the all-active policy at penalty -inf, the solver repeatedly
finds the smallest penalty at which one state's activation advantage under
the current policy reaches zero, flips that state, and continues until the
policy is empty.  On indexable arms every state flips exactly once and the
flip penalties are the Whittle indices; otherwise a state's index is the mean
of all the penalties at which it flipped.

Advantage lines are refreshed with rank-1 inverse updates, with a full
re-factorisation every ``S`` updates.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arm import (
    Arm,
    _check_conditioning,
    diameter,
    lines_from_inverse,
    mask_to_policy,
    system_matrix,
)
from .errors import DegenerateUpdate, IterationLimit, NoCrossing, NotUnichain

SM_DEGENERACY = 1e-12
SLOPE_TOL = 1e-12
EQUAL_TOL = 1e-9


def sherman_morrison_update(inverse: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inverse of (A + p q^T) from the inverse of A, in O(S^2)."""
    Ap = inverse @ p
    qA = q @ inverse
    denom = 1.0 + q @ Ap
    if abs(denom) < SM_DEGENERACY:
        raise DegenerateUpdate(f"rank-1 update denominator {denom:.3g}")
    return inverse - np.outer(Ap, qA) / denom


def _same_threshold(a: float, b: float) -> bool:
    return abs(a - b) <= EQUAL_TOL * max(1.0, abs(b))


@dataclass
class IndexComputation:
    thresholds: list[float]
    policies: list[frozenset]
    flipped: list[int]
    crossings: dict[int, list[float]]
    indices: np.ndarray
    indexable: bool
    num_steps: int
    loop_seconds: float = field(default=0.0, repr=False)

    def to_dict(self) -> dict:
        return {
            "indexable": self.indexable,
            "indices": [float(x) for x in self.indices],
            "thresholds": [float(x) for x in self.thresholds],
            "policies": [sorted(p) for p in self.policies],
            "crossings": {str(s): [float(x) for x in c] for s, c in self.crossings.items()},
        }


def _row_delta(arm: Arm, state: int, to_active: bool) -> np.ndarray:
    """Change of row ``state`` of the system matrix when that state switches action."""
    diff = arm.p_active[state] - arm.p_passive[state]
    if not to_active:
        diff = -diff
    if arm.discount is None:
        delta = -diff
        delta[0] = 0.0
    else:
        delta = -arm.discount * diff
    return delta


def _next_crossing(intercept, slope, mask, mu, buff):
    """Index and penalty of the first state whose line reaches zero at or after ``mu``.

    Only crossings in the direction that breaks optimality count: states in the
    policy whose advantage falls through zero, states outside it whose
    advantage rises through zero.
    """
    S = len(intercept)
    cand = np.full(S, np.inf)
    steep = np.abs(slope) >= SLOPE_TOL
    breaking = (mask & (slope < 0)) | (~mask & (slope > 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = np.where(steep, -intercept / np.where(steep, slope, 1.0), np.inf)
    if math.isinf(mu):
        ok = steep & breaking
        cand[ok] = roots[ok]
    else:
        tol = EQUAL_TOL * max(1.0, abs(mu))
        ok = steep & breaking & (roots >= mu - tol)
        cand[ok] = np.maximum(roots[ok], mu)
        flat = ~steep & (np.abs(intercept) <= tol)
        cand[flat] = mu
    if buff:
        cand[list(buff)] = np.inf
    best = cand.min()
    if not np.isfinite(best):
        return None, None
    tied = np.flatnonzero(cand <= best + EQUAL_TOL * max(1.0, abs(best)))
    sigma = int(tied[0])
    return sigma, float(cand[sigma])


def ewisc(arm: Arm, incremental: bool = True, refactor_every: int | None = None) -> IndexComputation:
    """Compute per-state indices of ``arm``; well defined on non-indexable arms.

    ``incremental=False`` re-factorises the system matrix at every step, which
    is the reference the rank-1 path is tested against.
    """
    S = arm.num_states
    refactor_every = refactor_every or S
    max_steps = max(64, 8 * S * S)

    mask = np.ones(S, dtype=bool)

    def factor(m):
        A = system_matrix(arm, m)
        _check_conditioning(A, "advantage system")
        return np.linalg.inv(A)

    inverse = factor(mask)
    start = time.perf_counter()
    mu = -math.inf
    buff: set[int] = set()
    thresholds: list[float] = []
    policies = [mask_to_policy(mask)]
    flipped: list[int] = []
    since_refactor = 0

    while mask.any():
        if len(thresholds) >= max_steps:
            raise IterationLimit(f"no termination after {max_steps} steps")
        intercept, slope = lines_from_inverse(arm, mask, inverse)
        sigma, new_mu = _next_crossing(intercept, slope, mask, mu, buff)
        if sigma is None:
            raise NoCrossing(f"no state crosses zero after penalty {mu} with policy {sorted(mask_to_policy(mask))}")
        if not math.isinf(mu) and _same_threshold(new_mu, mu):
            buff.add(sigma)
        else:
            buff = {sigma}
        mu = new_mu

        to_active = not mask[sigma]
        mask = mask.copy()
        mask[sigma] = to_active
        thresholds.append(mu)
        flipped.append(sigma)
        policies.append(mask_to_policy(mask))

        if not mask.any():
            break
        if incremental and since_refactor < refactor_every:
            p = np.zeros(S)
            p[sigma] = 1.0
            try:
                inverse = sherman_morrison_update(inverse, p, _row_delta(arm, sigma, to_active))
                since_refactor += 1
                continue
            except DegenerateUpdate:
                pass
        inverse = factor(mask)
        since_refactor = 0

    loop_seconds = time.perf_counter() - start
    crossings: dict[int, list[float]] = {s: [] for s in range(S)}
    for s, m in zip(flipped, thresholds):
        crossings[s].append(m)
    indices = np.array([np.mean(crossings[s]) if crossings[s] else np.nan for s in range(S)])
    indexable = all(len(c) == 1 for c in crossings.values())
    return IndexComputation(
        thresholds=thresholds,
        policies=policies,
        flipped=flipped,
        crossings=crossings,
        indices=indices,
        indexable=indexable,
        num_steps=len(thresholds),
        loop_seconds=loop_seconds,
    )


# --- indexability verdicts ---------------------------------------------------


@dataclass
class Indexable:
    indices: np.ndarray


@dataclass
class NonIndexable:
    crossings: dict[int, list[float]]
    indices: np.ndarray


def classify_indexability(arm: Arm) -> Indexable | NonIndexable:
    result = ewisc(arm)
    if result.indexable:
        return Indexable(result.indices)
    return NonIndexable(result.crossings, result.indices)


# --- explicit bounds ---------------------------------------------------------


@dataclass
class IndexBounds:
    lower: float
    upper: float

    def contains(self, values, tol: float = 1e-9) -> bool:
        v = np.asarray(values)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))


def span(v: np.ndarray) -> float:
    return float(np.max(v) - np.min(v))


def index_bounds(arm: Arm) -> IndexBounds:
    """Penalties outside these bounds make the all-active / all-passive policy optimal.

    Average reward uses the chain diameters of P1 and P0.  For discounted arms
    the span of the value of a constant-policy chain is at most span(r)/(1-beta),
    so the diameter factor becomes beta/(1-beta).
    """
    dr = float(np.abs(arm.r_active - arm.r_passive).max())
    dp = float(np.abs(arm.delta_p).sum(axis=1).max())
    if arm.discount is None:
        try:
            f1, f0 = diameter(arm.p_active), diameter(arm.p_passive)
        except NotUnichain as exc:
            raise NotUnichain(f"extreme policy is not unichain: {exc}") from None
    else:
        f1 = f0 = arm.discount / (1.0 - arm.discount)
    lower = -dr - 0.5 * span(arm.r_active) * f1 * dp
    upper = dr + 0.5 * span(arm.r_passive) * f0 * dp
    return IndexBounds(lower, upper)
