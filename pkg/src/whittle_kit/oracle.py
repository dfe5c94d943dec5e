"""Brute-force ground truth for small arms.

Everything here enumerates all 2^S policies and evaluates them through the
gain/bias (or discounted value) equations directly.  It shares no code path
with the threshold-tracking solver beyond the arm model itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arm import Arm, all_policies, mask_to_policy, random_arm
from .errors import NotFound, SingularSystem, TooLarge
from .solver import IndexBounds, index_bounds

MAX_STATES = 12
BO_TOL = 1e-9
BOUNDARY_WIDTH = 1e-10
# sparse rows make re-entering states in the optimal policy common (about 1 in 10 at S=4,5)
SEARCH_CONCENTRATION = 0.1
SEARCH_MIXING = 0.02


@dataclass
class PolicyTable:
    """Every policy of an arm with its advantage (and value) as affine functions of the penalty."""

    masks: np.ndarray  # (N, S) bool
    adv0: np.ndarray  # (N, S) advantage at penalty 0
    adv_slope: np.ndarray  # (N, S)
    val0: np.ndarray | None = None  # discounted only
    val_slope: np.ndarray | None = None

    def advantages(self, penalty: float) -> np.ndarray:
        return self.adv0 + penalty * self.adv_slope

    def violation(self, penalty: float) -> np.ndarray:
        """How far each policy is from optimal at ``penalty`` (<= tolerance means optimal)."""
        a = self.advantages(penalty)
        signs = np.where(self.masks, -a, a).max(axis=1)
        if self.val0 is None:
            return signs
        v = self.val0 + penalty * self.val_slope
        return np.maximum(signs, (v.max(axis=0) - v).max(axis=1))


def policy_table(arm: Arm) -> PolicyTable:
    S = arm.num_states
    if S > MAX_STATES:
        raise TooLarge(f"{S} states; enumeration is limited to {MAX_STATES}")
    masks = all_policies(S)
    P = np.where(masks[:, :, None], arm.p_active[None], arm.p_passive[None])
    r = np.where(masks, arm.r_active[None], arm.r_passive[None])
    rhs = np.stack([r, masks.astype(float)], axis=2)  # reward at penalty 0, and d reward / d(-penalty)
    eye = np.eye(S)[None]
    if arm.discount is None:
        # g + b_s - sum_s' P b_s' = r_s with b_0 = 0; unknown 0 holds the gain
        A = eye - P
        A[:, :, 0] = 1.0
    else:
        A = eye - arm.discount * P
    try:
        x = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystem("some policy has a singular evaluation system") from None
    if not np.all(np.isfinite(x)):
        raise SingularSystem("some policy has a singular evaluation system")
    if arm.discount is None:
        x[:, 0, :] = 0.0  # bias normalisation b_0 = 0
        scale = 1.0
    else:
        scale = arm.discount
    values0, values1 = x[:, :, 0], x[:, :, 1]
    D = arm.delta_p
    adv0 = (arm.r_active - arm.r_passive)[None] + scale * values0 @ D.T
    adv_slope = -1.0 - scale * values1 @ D.T
    table = PolicyTable(masks, adv0, adv_slope)
    if arm.discount is not None:
        table.val0, table.val_slope = values0, -values1
    return table


def bo_policies_at(arm: Arm, penalty: float, table: PolicyTable | None = None) -> set[frozenset]:
    """All optimal policies of the arm penalized by ``penalty``.

    Average reward: sign characterisation of the activation advantages.
    Discounted: the same sign test plus componentwise value dominance over every other policy.
    """
    table = table or policy_table(arm)
    ok = np.flatnonzero(table.violation(penalty) <= BO_TOL)
    return {mask_to_policy(table.masks[i]) for i in ok}


@dataclass
class LambdaScan:
    grid: np.ndarray
    bo_policies: list[list[list[int]]]
    optimal_advantage: np.ndarray  # (len(grid), S)
    per_state_zeros: dict[int, list[float]]
    indices: np.ndarray
    regimes: list[tuple[float, list[int]]]  # (start penalty, policy)

    @property
    def indexable(self) -> bool:
        return all(len(z) == 1 for z in self.per_state_zeros.values())

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "bo_policies": self.bo_policies,
            "optimal_advantage": self.optimal_advantage.tolist(),
            "per_state_zeros": {str(s): z for s, z in self.per_state_zeros.items()},
            "indices": self.indices.tolist(),
            "indexable": self.indexable,
            "regimes": [[float(a), p] for a, p in self.regimes],
        }


def default_bounds(arm: Arm) -> IndexBounds:
    b = index_bounds(arm)
    return IndexBounds(b.lower - 1.0, b.upper + 1.0)


def lambda_scan(arm: Arm, bounds: IndexBounds | None = None, grid_size: int | None = None) -> LambdaScan:
    """Optimal advantage over a penalty grid, with every zero of every state located.

    Zeros sit where a state's membership in the optimal policy changes.  Those
    regime boundaries are found by bisection on the optimal policy to a width
    of 1e-10, then placed exactly on the affine piece of the left regime.
    """
    S = arm.num_states
    table = policy_table(arm)
    bounds = bounds or default_bounds(arm)
    grid_size = grid_size or max(4 * S, 64)
    if grid_size < 4 * S:
        raise ValueError(f"grid_size must be at least 4*S = {4 * S}")

    def best(penalty):
        return int(np.argmin(table.violation(penalty)))

    lo, hi = bounds.lower, bounds.upper
    full, empty = len(table.masks) - 1, 0
    for _ in range(60):
        if best(lo) == full and best(hi) == empty:
            break
        width = hi - lo
        lo, hi = lo - width, hi + width

    grid = np.linspace(lo, hi, grid_size)
    at_grid = [best(x) for x in grid]

    boundaries = []  # (a, b, left policy, right policy)
    for k in range(grid_size - 1):
        stack = [(grid[k], grid[k + 1], at_grid[k], at_grid[k + 1])]
        while stack:
            a, b, ia, ib = stack.pop()
            if ia == ib:
                continue
            if b - a <= BOUNDARY_WIDTH * max(1.0, abs(a)):
                boundaries.append((a, b, ia, ib))
                continue
            m = 0.5 * (a + b)
            im = best(m)
            stack.append((m, b, im, ib))
            stack.append((a, m, ia, im))
    boundaries.sort()

    zeros: dict[int, list[float]] = {s: [] for s in range(S)}
    regimes = [(-math.inf, sorted(mask_to_policy(table.masks[at_grid[0]])))]
    for a, b, ia, ib in boundaries:
        changed = np.flatnonzero(table.masks[ia] != table.masks[ib])
        for s in changed:
            c, d = table.adv0[ia, s], table.adv_slope[ia, s]
            z = -c / d if d != 0 else 0.5 * (a + b)
            if not (a - 1e-8 <= z <= b + 1e-8):
                z = 0.5 * (a + b)
            zeros[int(s)].append(float(z))
        regimes.append((0.5 * (a + b), sorted(mask_to_policy(table.masks[ib]))))

    bo = []
    alpha = np.empty((grid_size, S))
    for k, x in enumerate(grid):
        viol = table.violation(x)
        bo.append([sorted(mask_to_policy(table.masks[i])) for i in np.flatnonzero(viol <= BO_TOL)])
        alpha[k] = table.advantages(x)[at_grid[k]]
    indices = np.array([np.mean(z) if z else np.nan for z in zeros.values()])
    return LambdaScan(grid, bo, alpha, zeros, indices, regimes)


def regime_intervals(table: PolicyTable, tol: float = BO_TOL) -> list[tuple[float, float, int]]:
    """Exact penalty interval on which each policy satisfies the sign characterisation."""
    out = []
    c, d, m = table.adv0, table.adv_slope, table.masks
    # constraint for s in pi:  c + d x >= -tol ; for s not in pi: -(c + d x) >= -tol
    sign = np.where(m, 1.0, -1.0)
    cc, dd = sign * c + tol, sign * d
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = -cc / dd
    lower = np.where(dd > 0, bound, -np.inf).max(axis=1)
    upper = np.where(dd < 0, bound, np.inf).min(axis=1)
    infeasible = ((dd == 0) & (cc < 0)).any(axis=1)
    for i in np.flatnonzero((upper > lower + tol) & ~infeasible):
        out.append((float(lower[i]), float(upper[i]), int(i)))
    out.sort()
    return out


def quick_multi_crossing(arm: Arm) -> bool:
    """Cheap screen: does the regime sequence re-insert some state?"""
    table = policy_table(arm)
    seq = [table.masks[i] for _, _, i in regime_intervals(table)]
    for prev, nxt in zip(seq, seq[1:]):
        if np.any(nxt & ~prev):
            return True
    return False


def sparse_sampler(rng, num_states, discount=None) -> Arm:
    return random_arm(rng, num_states, discount, SEARCH_CONCENTRATION, SEARCH_MIXING)


def search_non_indexable(
    seed: int,
    num_states: int,
    max_trials: int = 10_000,
    discount: float | None = None,
    sampler=sparse_sampler,
) -> Arm:
    """First sampled arm (in trial order) whose scan shows a state with several zeros.

    ``sampler(rng, num_states, discount)`` draws one candidate arm.
    """
    if num_states > 8:
        raise TooLarge("search is limited to 8 states")
    rng = np.random.default_rng(seed)
    for _ in range(max_trials):
        arm = sampler(rng, num_states, discount)
        try:
            if not quick_multi_crossing(arm):
                continue
            scan = lambda_scan(arm)
        except SingularSystem:
            continue
        if not scan.indexable:
            return arm
    raise NotFound(f"no non-indexable arm in {max_trials} trials (seed={seed}, S={num_states})")
