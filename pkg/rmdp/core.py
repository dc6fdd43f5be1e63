"""
Core - Finite-horizon MDP types, validation and exact policy evaluation.

Conventions:
- Stages are 0-based in code; messages report them 1-based, as written in the math.
- States and actions are dense integer indices per stage. A stage whose action
  set is empty in the model is given a single dummy action 0.
- Kernels hold one (S_t, A_t, S_{t+1}) table per stage transition, i.e. T-1 tables.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from rmdp.config import Config
from rmdp.errors import InvalidInputError, SizeGuardError

logger = logging.getLogger("RMDPCore")


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FiniteHorizonMDP:
    """Stage-indexed state/action spaces and cost tables."""
    horizon: int
    num_states: Tuple[int, ...]
    num_actions: Tuple[int, ...]
    cost: Tuple[np.ndarray, ...]  # cost[t] has shape (num_states[t], num_actions[t])

    def __post_init__(self):
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "num_states", tuple(int(n) for n in self.num_states))
        object.__setattr__(self, "num_actions", tuple(int(n) for n in self.num_actions))
        object.__setattr__(self, "cost", tuple(_frozen(c) for c in self.cost))

    def stage_shape(self, t: int) -> Tuple[int, int]:
        return self.num_states[t], self.num_actions[t]


@dataclass(frozen=True, eq=False)
class Kernel:
    """Row-stochastic transition tables, trans[t] of shape (S_t, A_t, S_{t+1})."""
    trans: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "trans", tuple(_frozen(p) for p in self.trans))


@dataclass(frozen=True, eq=False)
class AmbiguitySet:
    """Ordered finite list of kernels the adversary chooses from."""
    kernels: Tuple[Kernel, ...]

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))

    def __len__(self) -> int:
        return len(self.kernels)

    def __iter__(self) -> Iterator[Kernel]:
        return iter(self.kernels)

    def __getitem__(self, index: int) -> Kernel:
        return self.kernels[index]


@dataclass(frozen=True, eq=False)
class PolicyMD:
    """Deterministic Markov policy: act[t][s] is the action index at stage t."""
    act: Tuple[np.ndarray, ...]
    num_actions: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "act", tuple(_frozen(a, dtype=np.int64) for a in self.act))
        object.__setattr__(self, "num_actions", tuple(int(n) for n in self.num_actions))
        if len(self.act) != len(self.num_actions):
            raise InvalidInputError(f"Policy has {len(self.act)} stages but {len(self.num_actions)} action counts")
        for t, (stage, n) in enumerate(zip(self.act, self.num_actions)):
            if stage.size and (stage.min() < 0 or stage.max() >= n):
                raise InvalidInputError(f"stage {t + 1}: action outside 0..{n - 1}")

    @classmethod
    def first_actions(cls, mdp: FiniteHorizonMDP) -> "PolicyMD":
        return cls(
            act=[np.zeros(n, dtype=np.int64) for n in mdp.num_states],
            num_actions=mdp.num_actions,
        )

    def as_tuple(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(a) for a in stage) for stage in self.act)


@dataclass(frozen=True, eq=False)
class PolicyMR:
    """Randomized Markov policy: dist[t][s] is a distribution over stage-t actions.

    The constructor does not normalize or check rows; see validate_policy.
    """
    dist: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "dist", tuple(_frozen(d) for d in self.dist))

    @classmethod
    def uniform(cls, mdp: FiniteHorizonMDP) -> "PolicyMR":
        return cls(dist=[np.full((s, a), 1.0 / a) for s, a in zip(mdp.num_states, mdp.num_actions)])


@dataclass(frozen=True, eq=False)
class RobustInstance:
    """MDP + ambiguity set + initial state: the unit every solver consumes."""
    mdp: FiniteHorizonMDP
    ambiguity: AmbiguitySet
    initial_state: int = 0


def decision_rows(mdp: FiniteHorizonMDP) -> List[Tuple[int, int, int]]:
    """(stage, state, action count) for every state with a real choice, stage-major."""
    return [
        (t, s, mdp.num_actions[t])
        for t in range(mdp.horizon)
        if mdp.num_actions[t] > 1
        for s in range(mdp.num_states[t])
    ]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _validate_mdp(mdp: FiniteHorizonMDP) -> List[str]:
    violations = []
    T = mdp.horizon
    if T < 1:
        return [f"horizon must be a positive integer, got {T}"]
    for name, seq in (("num_states", mdp.num_states), ("num_actions", mdp.num_actions), ("cost", mdp.cost)):
        if len(seq) != T:
            violations.append(f"{name} lists {len(seq)} stages but horizon is {T}")
    if violations:
        return violations

    for t in range(T):
        S, A = mdp.stage_shape(t)
        if S < 1:
            violations.append(f"stage {t + 1}: state set is empty")
        if A < 1:
            violations.append(f"stage {t + 1}: action set is empty (use a single dummy action)")
        cost = mdp.cost[t]
        if cost.shape != (S, A):
            violations.append(f"stage {t + 1}: cost table has shape {cost.shape}, expected {(S, A)}")
            continue
        for s, a in zip(*np.nonzero(np.isnan(cost))):
            violations.append(f"stage {t + 1}: cost missing for (state {s}, action {a})")
        for s, a in zip(*np.nonzero(np.isinf(cost))):
            violations.append(f"stage {t + 1}: cost for (state {s}, action {a}) is not finite")
    return violations


def _validate_kernel(mdp: FiniteHorizonMDP, kernel: Kernel, label: str, tol: float) -> List[str]:
    violations = []
    T = mdp.horizon
    if len(kernel.trans) != T - 1:
        return [f"{label}: has {len(kernel.trans)} transition stages, expected {T - 1}"]
    for t, table in enumerate(kernel.trans):
        expected = (mdp.num_states[t], mdp.num_actions[t], mdp.num_states[t + 1])
        if table.shape != expected:
            violations.append(f"{label} stage {t + 1}: table has shape {table.shape}, expected {expected}")
            continue
        for s, a, s_next in zip(*np.nonzero(~(table >= 0.0))):
            violations.append(
                f"{label} stage {t + 1}: probability of next state {s_next} from (state {s}, action {a}) "
                f"is negative or undefined"
            )
        sums = table.sum(axis=2)
        for s, a in zip(*np.nonzero(~(np.abs(sums - 1.0) <= tol))):
            violations.append(
                f"{label} stage {t + 1}: row (state {s}, action {a}) sums to {sums[s, a]!r}, "
                f"violating sum-to-one within {tol:g}"
            )
    return violations


def validate_policy(mdp: FiniteHorizonMDP, policy: PolicyMR, tol: float = None) -> List[str]:
    """Violations of the PolicyMR invariants (shape, nonnegativity, rows summing to one)."""
    tol = Config.PROBABILITY_TOLERANCE if tol is None else tol
    if len(policy.dist) != mdp.horizon:
        return [f"policy lists {len(policy.dist)} stages, expected {mdp.horizon}"]
    violations = []
    for t, dist in enumerate(policy.dist):
        if dist.shape != mdp.stage_shape(t):
            violations.append(f"policy stage {t + 1}: shape {dist.shape}, expected {mdp.stage_shape(t)}")
            continue
        for s in range(dist.shape[0]):
            row = dist[s]
            if not np.all(row >= 0.0):
                violations.append(f"policy stage {t + 1}: state {s} has a negative probability")
            elif abs(row.sum() - 1.0) > tol:
                violations.append(f"policy stage {t + 1}: state {s} sums to {row.sum()!r}")
    return violations


def validate(instance: RobustInstance) -> List[str]:
    """
    Check every invariant of a RobustInstance.

    Returns:
        List of violation descriptions, empty iff the instance is well formed.
    """
    mdp = instance.mdp
    violations = _validate_mdp(mdp)
    if violations:
        return violations

    if len(instance.ambiguity) == 0:
        violations.append("ambiguity set is empty")
    for k, kernel in enumerate(instance.ambiguity):
        violations.extend(_validate_kernel(mdp, kernel, f"kernel {k}", Config.PROBABILITY_TOLERANCE))

    if not 0 <= instance.initial_state < mdp.num_states[0]:
        violations.append(
            f"initial state {instance.initial_state} is not a stage-1 state (0..{mdp.num_states[0] - 1})"
        )
    if violations:
        logger.debug(f"Instance validation found {len(violations)} violations")
    return violations


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _require_compatible(mdp: FiniteHorizonMDP, kernel: Kernel, dist: Sequence[np.ndarray], s1: int):
    T = mdp.horizon
    if len(kernel.trans) != T - 1 or len(dist) != T:
        raise InvalidInputError(
            f"Dimension mismatch: horizon {T}, kernel stages {len(kernel.trans)}, policy stages {len(dist)}"
        )
    for t in range(T):
        if dist[t].shape[-2:] != mdp.stage_shape(t):
            raise InvalidInputError(
                f"Dimension mismatch at stage {t + 1}: policy {dist[t].shape[-2:]} vs mdp {mdp.stage_shape(t)}"
            )
        if t < T - 1:
            expected = (mdp.num_states[t], mdp.num_actions[t], mdp.num_states[t + 1])
            if kernel.trans[t].shape != expected:
                raise InvalidInputError(
                    f"Dimension mismatch at stage {t + 1}: kernel {kernel.trans[t].shape} vs expected {expected}"
                )
    if not 0 <= s1 < mdp.num_states[0]:
        raise InvalidInputError(f"Initial state {s1} outside 0..{mdp.num_states[0] - 1}")


def stage_values(
    mdp: FiniteHorizonMDP,
    kernel: Kernel,
    policy: PolicyMR,
    discount: float = 1.0,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Backward induction for a fixed kernel and policy.

    Returns:
        (V, Q) where V[t][s] is the cost-to-go from stage t and
        Q[t][s, a] = c_t(s, a) + discount * sum_s' P_t(s'|s, a) V[t+1][s'].
    """
    _require_compatible(mdp, kernel, policy.dist, 0)
    T = mdp.horizon
    V: List[np.ndarray] = [None] * T
    Q: List[np.ndarray] = [None] * T
    for t in reversed(range(T)):
        q = mdp.cost[t]
        if t < T - 1:
            q = q + discount * (kernel.trans[t] @ V[t + 1])
        Q[t] = q
        V[t] = (policy.dist[t] * q).sum(axis=1)
    return V, Q


def evaluate(
    mdp: FiniteHorizonMDP,
    kernel: Kernel,
    policy: PolicyMR,
    s1: int,
    discount: float = 1.0,
) -> float:
    """Expected cumulative cost of `policy` under `kernel` from stage-1 state s1."""
    _require_compatible(mdp, kernel, policy.dist, s1)
    V, _ = stage_values(mdp, kernel, policy, discount)
    return float(V[0][s1])


def evaluate_batch(
    mdp: FiniteHorizonMDP,
    kernel: Kernel,
    dist_batch: Sequence[np.ndarray],
    s1: int,
) -> np.ndarray:
    """
    Evaluate many policies at once.

    Args:
        dist_batch: per-stage arrays of shape (B, S_t, A_t)

    Returns:
        Array of B values.
    """
    _require_compatible(mdp, kernel, dist_batch, s1)
    T = mdp.horizon
    values = None
    for t in reversed(range(T)):
        q = mdp.cost[t][None, :, :]
        if t < T - 1:
            q = q + np.einsum("sap,bp->bsa", kernel.trans[t], values)
        values = (dist_batch[t] * q).sum(axis=2)
    return values[:, s1]


def state_visitation(mdp: FiniteHorizonMDP, kernel: Kernel, policy: PolicyMR, s1: int) -> List[np.ndarray]:
    """Forward pass: d[t][s] = Pr(S_t = s) under (policy, kernel) started at s1."""
    _require_compatible(mdp, kernel, policy.dist, s1)
    d = np.zeros(mdp.num_states[0])
    d[s1] = 1.0
    visits = [d]
    for t in range(mdp.horizon - 1):
        joint = d[:, None] * policy.dist[t]
        d = np.tensordot(joint, kernel.trans[t], axes=([0, 1], [0, 1]))
        visits.append(d)
    return visits


def brute_force_evaluate(
    mdp: FiniteHorizonMDP,
    kernel: Kernel,
    policy: PolicyMR,
    s1: int,
    max_trajectories: int = None,
) -> float:
    """
    Independent oracle: enumerate every trajectory (s_1, a_1, ..., s_T, a_T)
    and sum probability-weighted cumulative costs.
    """
    limit = Config.BRUTE_FORCE_MAX_TRAJECTORIES if max_trajectories is None else max_trajectories
    _require_compatible(mdp, kernel, policy.dist, s1)
    count = math.prod(s * a for s, a in zip(mdp.num_states, mdp.num_actions))
    if count > limit:
        raise SizeGuardError(f"Trajectory count {count} exceeds brute-force limit {limit}")

    T = mdp.horizon
    cost = [c.tolist() for c in mdp.cost]
    dist = [d.tolist() for d in policy.dist]
    trans = [p.tolist() for p in kernel.trans]
    total = 0.0

    def visit(t: int, state: int, prob: float, accumulated: float):
        nonlocal total
        for a in range(mdp.num_actions[t]):
            p_action = prob * dist[t][state][a]
            running = accumulated + cost[t][state][a]
            if t == T - 1:
                total += p_action * running
                continue
            row = trans[t][state][a]
            for s_next in range(mdp.num_states[t + 1]):
                visit(t + 1, s_next, p_action * row[s_next], running)

    visit(0, s1, 1.0, 0.0)
    return total


def embed_md(policy: PolicyMD) -> PolicyMR:
    """Point-mass randomized policy equal to a deterministic one."""
    dist = []
    for act, n in zip(policy.act, policy.num_actions):
        stage = np.zeros((len(act), n))
        stage[np.arange(len(act)), act] = 1.0
        dist.append(stage)
    return PolicyMR(dist=dist)


def round_to_md(policy: PolicyMR) -> PolicyMD:
    """Most likely action per state (ties to the lowest index)."""
    return PolicyMD(
        act=[np.argmax(d, axis=1) for d in policy.dist],
        num_actions=[d.shape[1] for d in policy.dist],
    )


# ---------------------------------------------------------------------------
# Exact-integer fast path
# ---------------------------------------------------------------------------

def is_integral(mdp: FiniteHorizonMDP, kernels: Sequence[Kernel]) -> bool:
    """True when every cost is an integer and every transition probability is 0 or 1."""
    for c in mdp.cost:
        if not (np.all(np.isfinite(c)) and np.all(c == np.round(c))):
            return False
    for kernel in kernels:
        for p in kernel.trans:
            if not np.all((p == 0.0) | (p == 1.0)):
                return False
    return True


def successor_tables(kernel: Kernel) -> List[List[List[int]]]:
    """next_state[t][s][a] for a kernel whose probabilities are all 0 or 1."""
    return [np.argmax(p, axis=2).tolist() for p in kernel.trans]


def evaluate_md_exact(mdp: FiniteHorizonMDP, kernel: Kernel, policy: PolicyMD, s1: int) -> int:
    """Follow the single trajectory of a deterministic policy with integer arithmetic."""
    if not is_integral(mdp, [kernel]):
        raise InvalidInputError("Exact evaluation needs integer costs and {0,1} transition probabilities")
    if len(policy.act) != mdp.horizon or len(kernel.trans) != mdp.horizon - 1:
        raise InvalidInputError("Dimension mismatch between policy, kernel and horizon")
    if not 0 <= s1 < mdp.num_states[0]:
        raise InvalidInputError(f"Initial state {s1} outside 0..{mdp.num_states[0] - 1}")
    costs = [c.astype(np.int64).tolist() for c in mdp.cost]
    return trajectory_cost(costs, successor_tables(kernel), policy.as_tuple(), s1)


def trajectory_cost(costs, successors, act, s1: int) -> int:
    """Integer cost of the one trajectory of `act` from s1.

    costs[t][s][a] and act[t][s] are nested int lists, successors comes from successor_tables.
    """
    state, total = s1, 0
    for t, stage_costs in enumerate(costs):
        action = act[t][state]
        total += stage_costs[state][action]
        if t < len(successors):
            state = successors[t][state][action]
    return total
