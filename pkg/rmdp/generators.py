"""
Generators - Hardness gadgets and random instances.

Implements:
- the set-partition gadget (two kernels, horizon 2n) and an independent
  subset-sum oracle for it
- the matrix gadget with two kernels whose robust value has a sub-optimal
  strict local minimizer, and its fixed 2x2 instance
- seeded random instances for property suites
- the discounted infinite-horizon embedding (union of stage state spaces
  plus an absorbing zero-cost sink) and its exact evaluation
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from rmdp.config import Config
from rmdp.core import (
    AmbiguitySet,
    FiniteHorizonMDP,
    Kernel,
    PolicyMR,
    RobustInstance,
    validate,
)
from rmdp.errors import InvalidInputError, NumericalError, SizeGuardError

logger = logging.getLogger("Generators")

LOCAL_MIN_MATRIX = ((1.0, 0.0), (-1.0, 1.0))


@dataclass(frozen=True)
class PartitionSpec:
    """Weights W = {w_1, ..., w_n} of a set-partition instance."""
    weights: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(self.weights))
        if len(self.weights) < 1:
            raise InvalidInputError("Partition spec needs at least one weight")
        if any(not (w > 0) for w in self.weights):
            raise InvalidInputError(f"Partition weights must be positive, got {self.weights}")
        if not all(math.isfinite(w) for w in self.weights):
            raise InvalidInputError(f"Partition weights must be finite, got {self.weights}")

    @classmethod
    def parse(cls, text: str) -> "PartitionSpec":
        """Build from a comma-separated weight list such as '1,2,3'."""
        try:
            values = [float(part) for part in text.split(",") if part.strip()]
        except ValueError as e:
            raise InvalidInputError(f"Cannot parse weight list {text!r}: {e}")
        return cls(weights=tuple(int(v) if v.is_integer() else v for v in values))


@dataclass(frozen=True, eq=False)
class MatrixGadgetSpec:
    """n actions per decision stage and the n x n terminal cost matrix A."""
    n: int
    A: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if self.n < 1:
            raise InvalidInputError(f"Matrix gadget needs n >= 1, got {self.n}")
        if A.shape != (self.n, self.n):
            raise InvalidInputError(f"Matrix gadget needs a {self.n}x{self.n} matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidInputError("Matrix gadget entries must be finite")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)


@dataclass(frozen=True, eq=False)
class InfiniteHorizonInstance:
    """
    Stationary embedding of a finite-horizon instance.

    States are the union of the per-stage state sets followed by one sink.
    Arrays are padded to the largest action count; padded actions lead to the
    sink and must receive zero policy mass.
    """
    gamma: float
    num_actions: Tuple[int, ...]
    stage_of_state: Tuple[int, ...]  # 1-based stage, horizon + 1 for the sink
    cost: np.ndarray                 # (S, A_max)
    kernels: Tuple[np.ndarray, ...]  # each (S, A_max, S)
    stage_offsets: Tuple[int, ...]
    sink_state: int
    initial_state: int

    @property
    def num_states(self) -> int:
        return len(self.num_actions)

    def state_index(self, stage: int, state: int) -> int:
        """Global index of `state` at 0-based finite-horizon `stage`."""
        return self.stage_offsets[stage] + state


# ---------------------------------------------------------------------------
# Set partition gadget
# ---------------------------------------------------------------------------

def partition_instance(spec: PartitionSpec) -> RobustInstance:
    """
    Two-kernel instance whose deterministic robust optimum is max of the two
    sides of the best split of W.

    Stage 2t-1 has one state and actions {0, 1}; stage 2t has states {0, 1}
    with a dummy action and cost w_t in state 0. P_(1) sends action a to
    state a, P_(2) to state 1 - a; both advance from stage 2t to the next
    singleton deterministically.
    """
    n = len(spec.weights)
    num_states, num_actions, cost = [], [], []
    first, second = [], []
    advance = np.ones((2, 1, 1))
    for t, w in enumerate(spec.weights):
        num_states += [1, 2]
        num_actions += [2, 1]
        cost += [np.zeros((1, 2)), np.array([[float(w)], [0.0]])]
        first.append(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
        second.append(np.array([[[0.0, 1.0], [1.0, 0.0]]]))
        if t < n - 1:
            first.append(advance)
            second.append(advance)

    mdp = FiniteHorizonMDP(horizon=2 * n, num_states=num_states, num_actions=num_actions, cost=cost)
    logger.debug(f"Built partition gadget for n={n}, total weight {sum(spec.weights)}")
    return RobustInstance(
        mdp=mdp,
        ambiguity=AmbiguitySet(kernels=(Kernel(trans=first), Kernel(trans=second))),
        initial_state=0,
    )


def subset_sum_oracle(spec: PartitionSpec, max_total: int = None) -> bool:
    """
    Decide whether W splits into two parts of equal sum.

    Pseudo-polynomial reachable-sums DP on an integer bitset; uses no MDP code.

    Raises:
        InvalidInputError: for non-integer weights (scale rationals first)
        SizeGuardError: if the total exceeds max_total
    """
    max_total = Config.SUBSET_SUM_MAX_TOTAL if max_total is None else max_total
    weights = []
    for w in spec.weights:
        if float(w) != int(w):
            raise InvalidInputError(f"Subset-sum oracle needs integer weights, got {w}")
        weights.append(int(w))

    total = sum(weights)
    if total > max_total:
        raise SizeGuardError(f"Total weight {total} exceeds subset-sum limit {max_total}")
    if total % 2:
        return False

    reachable = 1  # bit k set <=> some subset sums to k
    for w in weights:
        reachable |= reachable << w
    return bool((reachable >> (total // 2)) & 1)


# ---------------------------------------------------------------------------
# Local-minimizer gadget
# ---------------------------------------------------------------------------

def matrix_gadget_instance(spec: MatrixGadgetSpec) -> RobustInstance:
    """
    Three-stage gadget: A_1 = i leads to S_2 = i under P_(1) and to
    S_2 = n-1-i under P_(2); A_2 = j then ends in stage-3 state (i, j),
    stored at index i*n + j, whose cost is A[i, j].
    """
    n = spec.n
    mdp = FiniteHorizonMDP(
        horizon=3,
        num_states=(1, n, n * n),
        num_actions=(n, n, 1),
        cost=(np.zeros((1, n)), np.zeros((n, n)), spec.A.reshape(n * n, 1)),
    )

    identity_first = np.zeros((1, n, n))
    reversed_first = np.zeros((1, n, n))
    identity_second = np.zeros((n, n, n * n))
    reversed_second = np.zeros((n, n, n * n))
    for i in range(n):
        identity_first[0, i, i] = 1.0
        reversed_first[0, i, n - 1 - i] = 1.0
        for j in range(n):
            identity_second[i, j, i * n + j] = 1.0
            reversed_second[i, j, (n - 1 - i) * n + j] = 1.0

    kernels = (
        Kernel(trans=(identity_first, identity_second)),
        Kernel(trans=(reversed_first, reversed_second)),
    )
    return RobustInstance(mdp=mdp, ambiguity=AmbiguitySet(kernels=kernels), initial_state=0)


def local_minimizer_instance() -> RobustInstance:
    """The fixed 2-action gadget with A = [[1, 0], [-1, 1]]."""
    return matrix_gadget_instance(MatrixGadgetSpec(n=2, A=np.array(LOCAL_MIN_MATRIX)))


def gadget_matrix(instance: RobustInstance) -> np.ndarray:
    """Recover A from a matrix-gadget instance, rejecting other shapes."""
    mdp = instance.mdp
    n = mdp.num_actions[0]
    if mdp.horizon != 3 or mdp.num_states != (1, n, n * n) or mdp.num_actions != (n, n, 1):
        raise InvalidInputError("Instance does not have the matrix-gadget shape")
    return np.asarray(mdp.cost[2]).reshape(n, n)


def trap_policy(instance: RobustInstance) -> PolicyMR:
    """
    Candidate trap of a matrix gadget: action 0 at stage 1 and, in every
    stage-2 state, the action minimizing row 0 of A.

    For the fixed gadget this is ((1,0), (0,1), (0,1)).
    """
    A = gadget_matrix(instance)
    n = A.shape[0]
    best_reply = int(np.argmin(A[0]))
    first = np.zeros((1, n))
    first[0, 0] = 1.0
    second = np.zeros((n, n))
    second[:, best_reply] = 1.0
    return PolicyMR(dist=(first, second, np.ones((n * n, 1))))


def near_trap_policy(instance: RobustInstance, rng: np.random.Generator, weight: float = 0.02) -> PolicyMR:
    """Seeded convex mixture (1 - weight) * trap + weight * random policy."""
    if not 0 <= weight <= 1:
        raise InvalidInputError(f"Mixture weight must lie in [0, 1], got {weight}")
    trap = trap_policy(instance)
    noise = random_policy(instance.mdp, rng)
    return PolicyMR(dist=[(1 - weight) * p + weight * q for p, q in zip(trap.dist, noise.dist)])


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------

def _random_row(rng: np.random.Generator, size: int, denominator: Optional[int]) -> np.ndarray:
    if denominator is None:
        return rng.dirichlet(np.ones(size))
    if denominator < size:
        raise InvalidInputError(f"Denominator {denominator} cannot give full support over {size} states")
    counts = 1 + rng.multinomial(denominator - size, np.full(size, 1.0 / size))
    return counts / denominator


def random_policy(mdp: FiniteHorizonMDP, rng: np.random.Generator) -> PolicyMR:
    """Dirichlet(1) rows on decision stages, the dummy action elsewhere."""
    return PolicyMR(dist=[
        rng.dirichlet(np.ones(A), size=S) if A > 1 else np.ones((S, 1))
        for S, A in zip(mdp.num_states, mdp.num_actions)
    ])


def random_instance(
    rng: np.random.Generator,
    horizon: Optional[int] = None,
    max_horizon: int = 4,
    max_states: int = 3,
    max_actions: int = 3,
    num_kernels: int = 2,
    num_states: Optional[Sequence[int]] = None,
    num_actions: Optional[Sequence[int]] = None,
    nonnegative: bool = False,
    integer_costs: bool = False,
    zero_cost_prob: float = 0.0,
    probability_denominator: Optional[int] = None,
) -> RobustInstance:
    """
    Random valid instance for property suites.

    Args:
        rng: numpy Generator, the only source of randomness
        horizon / num_states / num_actions: fix the shape instead of drawing it
        nonnegative: draw costs from [0, 1] (or {0..4}) instead of [-1, 1] (or {-3..3})
        integer_costs: integer cost tables
        zero_cost_prob: probability of zeroing each cost entry
        probability_denominator: full-support transition rows with entries k/denominator
    """
    if num_states is not None:
        T = len(num_states)
    else:
        T = int(horizon if horizon is not None else rng.integers(1, max_horizon + 1))
        num_states = [int(rng.integers(1, max_states + 1)) for _ in range(T)]
    if num_actions is None:
        num_actions = [int(rng.integers(1, max_actions + 1)) for _ in range(T)]

    cost = []
    for S, A in zip(num_states, num_actions):
        if integer_costs:
            low, high = (0, 5) if nonnegative else (-3, 4)
            table = rng.integers(low, high, size=(S, A)).astype(float)
        else:
            table = rng.uniform(0.0 if nonnegative else -1.0, 1.0, size=(S, A))
        if zero_cost_prob > 0:
            table[rng.random((S, A)) < zero_cost_prob] = 0.0
        cost.append(table)

    mdp = FiniteHorizonMDP(horizon=T, num_states=num_states, num_actions=num_actions, cost=cost)
    kernels = []
    for _ in range(num_kernels):
        trans = []
        for t in range(T - 1):
            S, A, S_next = num_states[t], num_actions[t], num_states[t + 1]
            table = np.empty((S, A, S_next))
            for s in range(S):
                for a in range(A):
                    table[s, a] = _random_row(rng, S_next, probability_denominator)
            trans.append(table)
        kernels.append(Kernel(trans=trans))
    return RobustInstance(mdp=mdp, ambiguity=AmbiguitySet(kernels=tuple(kernels)), initial_state=0)


def multi_model_instance(mdp: FiniteHorizonMDP, kernels: Sequence[Kernel], initial_state: int = 0) -> RobustInstance:
    """Wrap K >= 1 kernels into a validated instance."""
    instance = RobustInstance(mdp=mdp, ambiguity=AmbiguitySet(kernels=tuple(kernels)), initial_state=initial_state)
    violations = validate(instance)
    if violations:
        raise InvalidInputError("Invalid multi-model instance: " + "; ".join(violations))
    return instance


# ---------------------------------------------------------------------------
# Discounted infinite-horizon embedding
# ---------------------------------------------------------------------------

def extend_infinite_horizon(instance: RobustInstance, gamma: float) -> InfiniteHorizonInstance:
    """
    Embed a finite-horizon instance into a stationary discounted one.

    Every kernel acts as before on its own stage block, sends the last stage
    to the sink with probability one, and the sink is absorbing at zero cost.
    """
    if not 0 < gamma < 1:
        raise InvalidInputError(f"Discount factor must lie strictly inside (0, 1), got {gamma}")

    mdp = instance.mdp
    T = mdp.horizon
    offsets = np.concatenate([[0], np.cumsum(mdp.num_states)]).astype(int)
    sink = int(offsets[-1])
    S = sink + 1
    A_max = max(mdp.num_actions)

    num_actions = []
    stage_of_state = []
    cost = np.zeros((S, A_max))
    for t in range(T):
        for s in range(mdp.num_states[t]):
            cost[offsets[t] + s, : mdp.num_actions[t]] = mdp.cost[t][s]
            num_actions.append(mdp.num_actions[t])
            stage_of_state.append(t + 1)
    num_actions.append(1)
    stage_of_state.append(T + 1)

    kernels = []
    for kernel in instance.ambiguity:
        table = np.zeros((S, A_max, S))
        table[:, :, sink] = 1.0  # padded actions and the sink itself
        for t in range(T - 1):
            block = kernel.trans[t]
            rows = slice(offsets[t], offsets[t + 1])
            cols = slice(offsets[t + 1], offsets[t + 2])
            table[rows, : mdp.num_actions[t], sink] = 0.0
            table[rows, : mdp.num_actions[t], cols] = block
        table.setflags(write=False)
        kernels.append(table)

    cost.setflags(write=False)
    logger.debug(f"Embedded horizon-{T} instance into {S} stationary states, gamma={gamma}")
    return InfiniteHorizonInstance(
        gamma=float(gamma),
        num_actions=tuple(num_actions),
        stage_of_state=tuple(stage_of_state),
        cost=cost,
        kernels=tuple(kernels),
        stage_offsets=tuple(int(o) for o in offsets[:-1]),
        sink_state=sink,
        initial_state=int(offsets[0] + instance.initial_state),
    )


def stationary_policy(inst: InfiniteHorizonInstance, policy: PolicyMR) -> np.ndarray:
    """Lift a finite-horizon Markov policy to an (S, A_max) stationary policy matrix."""
    matrix = np.zeros(inst.cost.shape)
    for t, dist in enumerate(policy.dist):
        start = inst.stage_offsets[t]
        matrix[start:start + dist.shape[0], : dist.shape[1]] = dist
    matrix[inst.sink_state, 0] = 1.0
    return matrix


def discounted_values(inst: InfiniteHorizonInstance, kernel_index: int, policy: np.ndarray, tol: float = None) -> np.ndarray:
    """
    Solve V = c_pi + gamma * P_pi V for every stationary state.

    The contract is the residual: max |V - c_pi - gamma P_pi V| <= tol * max(1, max |V|).
    """
    tol = Config.DISCOUNTED_RESIDUAL if tol is None else tol
    if not 0 <= kernel_index < len(inst.kernels):
        raise InvalidInputError(f"Kernel index {kernel_index} outside 0..{len(inst.kernels) - 1}")
    policy = np.asarray(policy, dtype=float)
    if policy.shape != inst.cost.shape:
        raise InvalidInputError(f"Stationary policy has shape {policy.shape}, expected {inst.cost.shape}")
    valid = np.arange(inst.cost.shape[1])[None, :] < np.array(inst.num_actions)[:, None]
    if np.any(policy[~valid] != 0) or np.any(policy < 0):
        raise InvalidInputError("Stationary policy puts mass on an undefined action or is negative")
    if np.any(np.abs(policy.sum(axis=1) - 1.0) > Config.PROBABILITY_TOLERANCE):
        raise InvalidInputError("Stationary policy rows must sum to one")

    c_pi = (policy * inst.cost).sum(axis=1)
    P_pi = np.einsum("sa,sap->sp", policy, inst.kernels[kernel_index])
    system = np.eye(len(c_pi)) - inst.gamma * P_pi
    try:
        V = linalg.solve(system, c_pi)
        residual = c_pi - system @ V
        if np.max(np.abs(residual)) > tol * max(1.0, np.max(np.abs(V))):
            V = V + linalg.solve(system, residual)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Discounted evaluation system is singular: {e}")

    residual = np.max(np.abs(V - c_pi - inst.gamma * P_pi @ V))
    if residual > tol * max(1.0, np.max(np.abs(V))):
        raise NumericalError(f"Discounted evaluation residual {residual:.3e} above {tol:g}")
    return V


def evaluate_discounted(inst: InfiniteHorizonInstance, kernel_index: int, policy: np.ndarray, s0: int) -> float:
    """Discounted cost of a stationary policy from stationary state s0."""
    if not 0 <= s0 < inst.num_states:
        raise InvalidInputError(f"State {s0} outside 0..{inst.num_states - 1}")
    return float(discounted_values(inst, kernel_index, policy)[s0])
