"""Two-action arm model: validation, policy evaluation and activation advantages.

A policy is the set of states where the active action is taken.  Functions
accept any iterable of state indices or a length-S boolean mask; internally
everything is a boolean mask.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, DimensionMismatch, NotStochastic, NotUnichain, SingularSystem

ROW_REPAIR_TOL = 1e-9
NEGATIVE_TOL = 1e-15
COND_LIMIT = 1e13
EXACT_UNICHAIN_MAX_STATES = 12
SAMPLED_POLICIES = 256


def _stochastic(matrix, name: str, num_states: int) -> np.ndarray:
    m = np.array(matrix, dtype=float)
    if m.shape != (num_states, num_states):
        raise DimensionMismatch(f"{name} has shape {m.shape}, expected {(num_states, num_states)}")
    if not np.all(np.isfinite(m)):
        raise NotStochastic(f"{name} has non-finite entries")
    if m.min() < -NEGATIVE_TOL:
        raise NotStochastic(f"{name} has a negative entry {m.min():.3g}")
    m = np.clip(m, 0.0, None)
    sums = m.sum(axis=1)
    worst = np.abs(sums - 1.0).max()
    if worst > ROW_REPAIR_TOL:
        row = int(np.abs(sums - 1.0).argmax())
        raise NotStochastic(f"{name} row {row} sums to {float(sums[row])!r}")
    return m / sums[:, None]


@dataclass(eq=False)
class Arm:
    """A two-action MDP.  ``discount`` of None selects the average-reward criterion."""

    num_states: int
    p_passive: np.ndarray
    p_active: np.ndarray
    r_passive: np.ndarray
    r_active: np.ndarray
    discount: float | None = None

    def __post_init__(self):
        S = int(self.num_states)
        if S < 1:
            raise DimensionMismatch("num_states must be at least 1")
        self.num_states = S
        self.p_passive = _stochastic(self.p_passive, "p_passive", S)
        self.p_active = _stochastic(self.p_active, "p_active", S)
        for name in ("r_passive", "r_active"):
            r = np.array(getattr(self, name), dtype=float).reshape(-1)
            if r.shape != (S,):
                raise DimensionMismatch(f"{name} has length {r.size}, expected {S}")
            setattr(self, name, r)
        if self.discount is not None:
            self.discount = float(self.discount)
            if not 0.0 < self.discount < 1.0:
                raise ConfigError(f"discount must lie in (0, 1), got {self.discount}")

    @property
    def transitions(self) -> np.ndarray:
        """(2, S, S) array indexed by action."""
        return np.stack([self.p_passive, self.p_active])

    @property
    def rewards(self) -> np.ndarray:
        return np.stack([self.r_passive, self.r_active])

    @property
    def delta_p(self) -> np.ndarray:
        return self.p_active - self.p_passive

    def policy_transition(self, policy) -> np.ndarray:
        mask = policy_mask(policy, self.num_states)
        return np.where(mask[:, None], self.p_active, self.p_passive)

    def policy_reward(self, policy, penalty: float = 0.0) -> np.ndarray:
        mask = policy_mask(policy, self.num_states)
        return np.where(mask, self.r_active - penalty, self.r_passive)

    def replace(self, **changes) -> "Arm":
        fields = dict(
            num_states=self.num_states,
            p_passive=self.p_passive,
            p_active=self.p_active,
            r_passive=self.r_passive,
            r_active=self.r_active,
            discount=self.discount,
        )
        fields.update(changes)
        return Arm(**fields)

    def penalized(self, penalty: float) -> "Arm":
        return self.replace(r_active=self.r_active - penalty)

    def distance(self, other: "Arm") -> float:
        """max_a ||P^a - Q^a||_inf + max_a ||r^a - q^a||_inf."""
        dp = max(np.abs(a - b).sum(axis=1).max() for a, b in zip(self.transitions, other.transitions))
        dr = np.abs(self.rewards - other.rewards).max()
        return float(dp + dr)

    def to_dict(self) -> dict:
        d = {
            "num_states": self.num_states,
            "p_passive": self.p_passive.tolist(),
            "p_active": self.p_active.tolist(),
            "r_passive": self.r_passive.tolist(),
            "r_active": self.r_active.tolist(),
        }
        if self.discount is not None:
            d["discount"] = self.discount
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Arm":
        try:
            return cls(
                num_states=d["num_states"],
                p_passive=d["p_passive"],
                p_active=d["p_active"],
                r_passive=d["r_passive"],
                r_active=d["r_active"],
                discount=d.get("discount"),
            )
        except KeyError as exc:
            raise DimensionMismatch(f"arm JSON is missing field {exc}") from None

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "Arm":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Arm):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.discount == other.discount
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("p_passive", "p_active", "r_passive", "r_active")
            )
        )


@dataclass(eq=False)
class ArmEstimate(Arm):
    """Arm built from empirical counts; ``source_counts`` is the number of samples used."""

    source_counts: object = field(default=None, repr=False)


def policy_mask(policy, num_states: int) -> np.ndarray:
    if isinstance(policy, np.ndarray) and policy.dtype == bool:
        if policy.shape != (num_states,):
            raise DimensionMismatch(f"policy mask has shape {policy.shape}")
        return policy
    mask = np.zeros(num_states, dtype=bool)
    for s in policy:
        s = int(s)
        if not 0 <= s < num_states:
            raise DimensionMismatch(f"policy state {s} outside [0, {num_states})")
        mask[s] = True
    return mask


def mask_to_policy(mask: np.ndarray) -> frozenset:
    return frozenset(int(s) for s in np.flatnonzero(mask))


def all_policies(num_states: int) -> np.ndarray:
    """(2^S, S) boolean array of every policy, bit s of row i giving membership of s."""
    idx = np.arange(2**num_states)[:, None]
    return ((idx >> np.arange(num_states)) & 1).astype(bool)


# --- chain structure -------------------------------------------------------


def recurrent_classes(transition: np.ndarray) -> list[np.ndarray]:
    """Closed communicating classes of a Markov chain (graph condensation)."""
    adj = transition > 0
    n, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n):
        members = labels == c
        leaves = adj[members][:, ~members].any()
        if not leaves:
            closed.append(np.flatnonzero(members))
    return closed


def is_unichain(transition: np.ndarray) -> bool:
    return len(recurrent_classes(transition)) == 1


def is_strongly_connected(transition: np.ndarray) -> bool:
    n, _ = connected_components(transition > 0, directed=True, connection="strong")
    return n == 1


@dataclass
class ValidationReport:
    stochastic: bool
    communicating: bool
    unichain_all_policies: bool
    unichain_check: str  # "exact" or "sampled"
    counterexample_policy: frozenset | None = None


def validate_arm(arm: Arm, seed: int = 0) -> ValidationReport:
    """Structural checks.  Stochasticity is enforced when the Arm is built."""
    S = arm.num_states
    communicating = is_strongly_connected(0.5 * (arm.p_passive + arm.p_active))
    if S <= EXACT_UNICHAIN_MAX_STATES:
        masks = all_policies(S)
        mode = "exact"
    else:
        rng = np.random.default_rng(seed)
        masks = rng.random((SAMPLED_POLICIES, S)) < 0.5
        masks[0], masks[1] = True, False
        mode = "sampled"
    bad = None
    for mask in masks:
        if not is_unichain(arm.policy_transition(mask)):
            bad = mask_to_policy(mask)
            break
    return ValidationReport(True, communicating, bad is None, mode, bad)


# --- policy evaluation -----------------------------------------------------


def _check_conditioning(matrix: np.ndarray, what: str):
    if not np.all(np.isfinite(matrix)) or np.linalg.cond(matrix) > COND_LIMIT:
        raise SingularSystem(f"{what} is singular or numerically degenerate")


def gain_bias_matrix(transition: np.ndarray) -> np.ndarray:
    """Matrix of the gain/bias system in unknowns (g, b_1, ..., b_{S-1}) with b_0 = 0."""
    S = transition.shape[0]
    A = np.eye(S) - transition
    A[:, 0] = 1.0
    return A


class GainBias(NamedTuple):
    gain: float
    bias: np.ndarray


def gain_bias(transition, reward) -> GainBias:
    P = np.asarray(transition, dtype=float)
    r = np.asarray(reward, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or r.shape != (P.shape[0],):
        raise DimensionMismatch("transition must be SxS and reward length S")
    A = gain_bias_matrix(P)
    _check_conditioning(A, "gain/bias system")
    x = np.linalg.solve(A, r)
    bias = x.copy()
    bias[0] = 0.0
    return GainBias(float(x[0]), bias)


def value_discounted(transition, reward, beta: float) -> np.ndarray:
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"discount must lie in (0, 1), got {beta}")
    P = np.asarray(transition, dtype=float)
    r = np.asarray(reward, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or r.shape != (P.shape[0],):
        raise DimensionMismatch("transition must be SxS and reward length S")
    M = np.eye(P.shape[0]) - beta * P
    try:
        return np.linalg.solve(M, r)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None


def relative_value(arm: Arm, policy, penalty: float = 0.0) -> np.ndarray:
    """Bias (average reward) or discounted value of ``policy`` in the penalized arm."""
    P = arm.policy_transition(policy)
    r = arm.policy_reward(policy, penalty)
    if arm.discount is None:
        return gain_bias(P, r).bias
    return value_discounted(P, r, arm.discount)


def advantage_from_values(arm: Arm, values: np.ndarray, penalty: float = 0.0) -> np.ndarray:
    """r1 - penalty - r0 + c (P1 - P0) values, with c the discount (1 for average reward)."""
    scale = 1.0 if arm.discount is None else arm.discount
    return arm.r_active - penalty - arm.r_passive + scale * (arm.delta_p @ values)


def advantage_definitional(arm: Arm, policy, penalty: float = 0.0) -> np.ndarray:
    """Activation advantage of every state under ``policy`` in the arm penalized by ``penalty``."""
    return advantage_from_values(arm, relative_value(arm, policy, penalty), penalty)


# --- affine advantage lines --------------------------------------------------


class AdvantageLine(NamedTuple):
    intercept: float
    slope: float

    def __call__(self, penalty: float) -> float:
        return self.intercept + self.slope * penalty


@dataclass
class AdvantageLines:
    """Per-state lines penalty -> intercept + slope * penalty, plus the system inverse used."""

    intercept: np.ndarray
    slope: np.ndarray
    inverse: np.ndarray

    def __call__(self, penalty: float) -> np.ndarray:
        return self.intercept + self.slope * penalty

    def __getitem__(self, s: int) -> AdvantageLine:
        return AdvantageLine(float(self.intercept[s]), float(self.slope[s]))

    def __len__(self):
        return len(self.intercept)


def system_matrix(arm: Arm, policy) -> np.ndarray:
    """A^pi (average reward, first column of ones) or I - beta P^pi (discounted)."""
    P = arm.policy_transition(policy)
    if arm.discount is None:
        return gain_bias_matrix(P)
    return np.eye(arm.num_states) - arm.discount * P


def lines_from_inverse(arm: Arm, mask: np.ndarray, inverse: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intercepts and slopes of the advantage lines given the inverse system matrix.

    For the average-reward system the first solution component is the gain, not
    a bias entry, so it is dropped before multiplying by P1 - P0.
    """
    r_pi = np.where(mask, arm.r_active, arm.r_passive)
    v_r = inverse @ r_pi
    v_bin = inverse @ mask.astype(float)
    if arm.discount is None:
        v_r[0] = 0.0
        v_bin[0] = 0.0
        scale = 1.0
    else:
        scale = arm.discount
    D = arm.delta_p
    intercept = arm.r_active - arm.r_passive + scale * (D @ v_r)
    slope = -1.0 - scale * (D @ v_bin)
    return intercept, slope


def advantage_lines(arm: Arm, policy, inverse: np.ndarray | None = None) -> AdvantageLines:
    mask = policy_mask(policy, arm.num_states)
    if inverse is None:
        A = system_matrix(arm, mask)
        _check_conditioning(A, "advantage system")
        inverse = np.linalg.inv(A)
    intercept, slope = lines_from_inverse(arm, mask, inverse)
    return AdvantageLines(intercept, slope, inverse)


# --- diameter ---------------------------------------------------------------


def hitting_times(transition: np.ndarray, target: int) -> np.ndarray:
    """Expected steps to reach ``target`` from every state (0 at the target)."""
    P = np.asarray(transition, dtype=float)
    S = P.shape[0]
    others = np.array([s for s in range(S) if s != target], dtype=int)
    h = np.zeros(S)
    if others.size:
        M = np.eye(others.size) - P[np.ix_(others, others)]
        try:
            h[others] = np.linalg.solve(M, np.ones(others.size))
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from None
    return h


def diameter(transition) -> float:
    """Max expected hitting time from any state into any state of the recurrent class."""
    P = np.asarray(transition, dtype=float)
    classes = recurrent_classes(P)
    if len(classes) != 1:
        raise NotUnichain(f"chain has {len(classes)} recurrent classes")
    return float(max(hitting_times(P, int(t)).max() for t in classes[0]))


# --- generators -------------------------------------------------------------

REWARD_LAWS = {
    "five-plus": lambda s: 5.0 + (s + 1) / 10.0,
    "geometric": lambda s: 0.9 ** (s + 1),
}


def generate_dirichlet_arm(num_states: int, seed: int, reward_law: str = "five-plus", discount: float = 0.9) -> Arm:
    """Rested (Gittins) arm: P1 rows ~ Dirichlet(1/S), P0 = I, r0 = 0."""
    if num_states < 2:
        raise DimensionMismatch("num_states must be at least 2")
    if reward_law not in REWARD_LAWS:
        raise ConfigError(f"unknown reward law {reward_law!r}; choose from {sorted(REWARD_LAWS)}")
    rng = np.random.default_rng(seed)
    S = num_states
    p_active = rng.dirichlet(np.full(S, 1.0 / S), size=S)
    law = REWARD_LAWS[reward_law]
    r_active = np.array([law(s) for s in range(S)])
    return Arm(S, np.eye(S), p_active, np.zeros(S), r_active, discount)


def random_arm(
    rng: np.random.Generator,
    num_states: int,
    discount: float | None = None,
    concentration: float = 1.0,
    mixing: float = 0.0,
) -> Arm:
    """Random arm with Dirichlet(concentration) rows, blended with ``mixing`` of the uniform row.

    Rows keep full support (Dirichlet samples are almost surely positive), so
    every policy is unichain; ``mixing > 0`` keeps them well away from reducible.
    """
    S = num_states
    P = (1.0 - mixing) * rng.dirichlet(np.full(S, concentration), size=(2, S)) + mixing / S
    r = rng.random((2, S))
    return Arm(S, P[0], P[1], r[0], r[1], discount)


def perturb_same_support(arm: Arm, eps: float, rng: np.random.Generator) -> Arm:
    """Multiply each nonzero transition by (1 + eps*u), u ~ U(-1, 1), and renormalise.

    The support is unchanged and every row moves by O(eps) in the l1 norm.
    """
    mats = []
    for P in (arm.p_passive, arm.p_active):
        Q = P * (1.0 + eps * rng.uniform(-1.0, 1.0, size=P.shape))
        mats.append(Q / Q.sum(axis=1, keepdims=True))
    return arm.replace(p_passive=mats[0], p_active=mats[1])


def is_gittins(arm: Arm) -> bool:
    return bool(np.array_equal(arm.p_passive, np.eye(arm.num_states)) and not np.any(arm.r_passive))


__all__ = [
    "Arm",
    "ArmEstimate",
    "AdvantageLine",
    "AdvantageLines",
    "GainBias",
    "ValidationReport",
    "advantage_definitional",
    "advantage_from_values",
    "advantage_lines",
    "all_policies",
    "diameter",
    "gain_bias",
    "generate_dirichlet_arm",
    "hitting_times",
    "is_unichain",
    "mask_to_policy",
    "policy_mask",
    "perturb_same_support",
    "random_arm",
    "recurrent_classes",
    "system_matrix",
    "validate_arm",
    "value_discounted",
]
