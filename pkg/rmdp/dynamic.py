"""
Dynamic Solver - backward induction where the adversary re-selects a kernel
at every stage and state.

Implements:
- the per-state matrix game min over action mixtures of max over kernels (LP via HiGHS)
- dynamic_dp_solve for deterministic and randomized Markov policies
- per-stage adversary evaluation of a fixed policy
- explicit rectangularization of a finite ambiguity set and the grid check
  that the static problem over it matches the dynamic value
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Union

import numpy as np
import pandas as pd
from scipy import optimize

from rmdp.config import Config
from rmdp.core import AmbiguitySet, Kernel, PolicyMD, PolicyMR, RobustInstance
from rmdp.errors import InvalidInputError, NumericalError, SizeGuardError
from rmdp.robust import robust_value
from rmdp.solvers import GridSearchResult, grid_minimum

logger = logging.getLogger("DynamicSolver")

POLICY_CLASSES = ("md", "mr")
ADVERSARIES = ("state", "state_action")
GRANULARITIES = ("state", "state_action")


@dataclass(frozen=True, eq=False)
class MatrixGame:
    """Row player (actions) minimizes, column player (kernels) maximizes."""
    payoff: np.ndarray

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float)
        if payoff.ndim != 2 or payoff.shape[0] < 1 or payoff.shape[1] < 1:
            raise InvalidInputError(f"Matrix game needs a non-empty 2-D payoff, got shape {payoff.shape}")
        if not np.all(np.isfinite(payoff)):
            raise InvalidInputError("Matrix game payoff entries must be finite")
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)


@dataclass(frozen=True)
class GameSolution:
    strategy: np.ndarray
    value: float        # worst column of `strategy`: an upper bound on the game value
    lower_bound: float  # certified by an adversary mixture
    residual: float


@dataclass
class DynamicSolution:
    """values[t][s] for t = 0..T-1; the value after the last stage is 0."""
    values: List[np.ndarray]
    policy: Union[PolicyMD, PolicyMR]
    game_values_residual: float
    policy_class: str = "mr"
    adversary: str = "state"

    def initial_value(self, s1: int = 0) -> float:
        return float(self.values[0][s1])


@dataclass(frozen=True)
class RectangularConsistency:
    dynamic_value: float
    grid_value: float
    policy_value: float  # DP policy evaluated against the rectangularized set
    slack: float
    num_kernels: int
    consistent: bool


def matrix_game_solve(game: MatrixGame, eps: float = None) -> GameSolution:
    """
    Solve min_x max_k x^T payoff[:, k] over the action simplex.

    Degenerate shapes are solved directly. Otherwise the LP
    min v s.t. payoff^T x <= v, sum x = 1, x >= 0 is solved with HiGHS; the
    dual marginals give the adversary mixture behind the lower bound. A pure
    action is returned instead whenever its worst column is no worse.
    """
    eps = Config.GAME_EPS if eps is None else eps
    if not eps > 0:
        raise InvalidInputError(f"Matrix game tolerance must be positive, got {eps}")

    A = game.payoff
    n, K = A.shape
    row_max = A.max(axis=1)
    pure = int(np.argmin(row_max))
    pure_strategy = np.zeros(n)
    pure_strategy[pure] = 1.0
    if n == 1 or K == 1:
        value = float(row_max[pure])
        return GameSolution(strategy=pure_strategy, value=value, lower_bound=value, residual=0.0)

    c = np.zeros(n + 1)
    c[-1] = 1.0
    result = optimize.linprog(
        c,
        A_ub=np.hstack([A.T, -np.ones((K, 1))]),
        b_ub=np.zeros(K),
        A_eq=np.append(np.ones(n), 0.0)[None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * n + [(None, None)],
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if result.status != 0:
        raise NumericalError(f"Matrix game LP failed: {result.message}")

    strategy = np.clip(result.x[:n], 0.0, None)
    strategy /= strategy.sum()
    upper = float(np.max(strategy @ A))

    lower = float(np.max(A.min(axis=0)))
    mixture = np.clip(-np.asarray(result.ineqlin.marginals), 0.0, None)
    if mixture.sum() > 0:
        lower = max(lower, float(np.min(A @ (mixture / mixture.sum()))))

    if row_max[pure] <= upper:
        strategy, upper = pure_strategy, float(row_max[pure])
    residual = max(upper - lower, 0.0)
    if residual > eps:
        logger.warning(f"Matrix game residual {residual:.3e} above eps {eps:g} (shape {A.shape})")
    return GameSolution(strategy=strategy, value=upper, lower_bound=lower, residual=residual)


def _continuation(instance: RobustInstance, t: int, V_next: np.ndarray) -> np.ndarray:
    """payoff[k, s, a] = c_t(s, a) + sum_s' P_k,t(s'|s, a) V_{t+1}(s')."""
    cost = instance.mdp.cost[t]
    if t == instance.mdp.horizon - 1:
        return np.repeat(cost[None], len(instance.ambiguity), axis=0)
    return np.stack([cost + kernel.trans[t] @ V_next for kernel in instance.ambiguity])


def _check_options(policy_class: str, adversary: str, eps: float) -> str:
    policy_class = str(policy_class).lower()
    if policy_class not in POLICY_CLASSES:
        raise InvalidInputError(f"Policy class must be one of {POLICY_CLASSES}, got {policy_class!r}")
    if adversary not in ADVERSARIES:
        raise InvalidInputError(f"Adversary must be one of {ADVERSARIES}, got {adversary!r}")
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    return policy_class


def dynamic_dp_solve(
    instance: RobustInstance,
    policy_class: str = "mr",
    eps: float = None,
    adversary: str = "state",
) -> DynamicSolution:
    """
    Backward induction for the dynamic formulation.

    Args:
        policy_class: "md" (min over actions) or "mr" (matrix game per state)
        eps: inner matrix-game tolerance
        adversary: "state" picks one kernel per (stage, state) after seeing the
            mixture; "state_action" picks one per action, so each payoff row
            collapses to its max over kernels

    Returns:
        DynamicSolution with per-stage values and the minimizing policy
    """
    eps = Config.GAME_EPS if eps is None else eps
    policy_class = _check_options(policy_class, adversary, eps)
    if len(instance.ambiguity) == 0:
        raise InvalidInputError("Ambiguity set is empty")

    mdp = instance.mdp
    T = mdp.horizon
    values: List[np.ndarray] = [None] * T
    acts: List[np.ndarray] = [None] * T
    dists: List[np.ndarray] = [None] * T
    residual = 0.0
    V_next = None
    for t in reversed(range(T)):
        payoff = _continuation(instance, t, V_next)  # (K, S, A)
        S, A = mdp.stage_shape(t)
        V = np.empty(S)
        act = np.zeros(S, dtype=np.int64)
        dist = np.zeros((S, A))
        for s in range(S):
            game = payoff[:, s, :].T  # (A, K)
            if adversary == "state_action":
                game = game.max(axis=1, keepdims=True)
            if policy_class == "md":
                row_max = game.max(axis=1)
                act[s] = int(np.argmin(row_max))
                V[s] = row_max[act[s]]
                dist[s, act[s]] = 1.0
            else:
                solution = matrix_game_solve(MatrixGame(payoff=game), eps)
                V[s] = solution.value
                dist[s] = solution.strategy
                act[s] = int(np.argmax(solution.strategy))
                residual = max(residual, solution.residual)
        values[t], acts[t], dists[t] = V, act, dist
        V_next = V

    if policy_class == "md":
        policy = PolicyMD(act=acts, num_actions=mdp.num_actions)
    else:
        policy = PolicyMR(dist=dists)
    logger.info(
        f"Dynamic DP ({policy_class}, adversary={adversary}): V_1(s_1)={values[0][instance.initial_state]:.10f}, "
        f"game residual {residual:.2e}"
    )
    return DynamicSolution(
        values=values,
        policy=policy,
        game_values_residual=residual,
        policy_class=policy_class,
        adversary=adversary,
    )


def evaluate_per_stage_adversary(
    instance: RobustInstance,
    policy: PolicyMR,
    adversary: str = "state",
) -> List[np.ndarray]:
    """V_t(s) = max_k sum_a pi(a|s) payoff_k(s, a) for a fixed policy (per action with 'state_action')."""
    _check_options("mr", adversary, 1.0)
    values: List[np.ndarray] = [None] * instance.mdp.horizon
    V_next = None
    for t in reversed(range(instance.mdp.horizon)):
        payoff = _continuation(instance, t, V_next)
        if adversary == "state_action":
            V = (policy.dist[t] * payoff.max(axis=0)).sum(axis=1)
        else:
            V = (policy.dist[t][None] * payoff).sum(axis=2).max(axis=0)
        values[t] = V
        V_next = V
    return values


def rectangularize_enumerate(
    instance: RobustInstance,
    granularity: str = "state_action",
    max_kernels: int = None,
) -> AmbiguitySet:
    """
    Cartesian-product closure of the ambiguity set.

    Every composite kernel picks, independently for each transition row
    (stage, state, action) or, with granularity "state", for each
    (stage, state), one of the K original kernels. Composites are listed in
    lexicographic order of those choices.

    Raises:
        SizeGuardError: if K ** rows exceeds max_kernels
    """
    limit = Config.RECTANGULAR_MAX_KERNELS if max_kernels is None else max_kernels
    if granularity not in GRANULARITIES:
        raise InvalidInputError(f"Granularity must be one of {GRANULARITIES}, got {granularity!r}")
    kernels = list(instance.ambiguity)
    K = len(kernels)
    if K == 0:
        raise InvalidInputError("Ambiguity set is empty")
    if K == 1:
        return AmbiguitySet(kernels=tuple(kernels))

    mdp = instance.mdp
    rows = [
        (t, s, a)
        for t in range(mdp.horizon - 1)
        for s in range(mdp.num_states[t])
        for a in (range(mdp.num_actions[t]) if granularity == "state_action" else [slice(None)])
    ]
    count = K ** len(rows)
    if count > limit:
        raise SizeGuardError(f"Rectangularized set would hold {count} kernels, limit {limit}")

    stacked = [np.stack([k.trans[t] for k in kernels]) for t in range(mdp.horizon - 1)]
    composites = []
    for choice in itertools.product(range(K), repeat=len(rows)):
        trans = [np.empty_like(stacked[t][0]) for t in range(mdp.horizon - 1)]
        for (t, s, a), k in zip(rows, choice):
            trans[t][s, a] = stacked[t][k, s, a]
        composites.append(Kernel(trans=trans))
    logger.info(f"Rectangularized {K} kernels over {len(rows)} rows ({granularity}): {count} composites")
    return AmbiguitySet(kernels=tuple(composites))


def rectangular_grid_minimum(
    instance: RobustInstance,
    grid_step: float,
    granularity: str = "state",
    max_points: int = None,
) -> GridSearchResult:
    """Grid-minimized static robust value over the rectangularized set."""
    rectangular = rectangularize_enumerate(instance, granularity)
    return grid_minimum(instance, grid_step, ambiguity=rectangular, max_points=max_points)


def grid_slack(instance: RobustInstance, grid_step: float) -> float:
    """
    Upper bound on how far the best grid policy can be above the true minimum.

    Rounding a row to the grid moves at most grid_step of L1 mass, and the
    value moves by at most half that times the span of the row's
    continuation values, bounded by the remaining stages' cost spans.
    """
    spans = [float(np.max(c) - np.min(c)) for c in instance.mdp.cost]
    total = 0.0
    for t, A in enumerate(instance.mdp.num_actions):
        if A > 1:
            total += (A - 1) * sum(spans[t:])
    return grid_step / 2.0 * total


def rectangular_consistency(
    instance: RobustInstance,
    grid_step: float = 0.02,
    granularity: str = "state",
    eps: float = None,
) -> RectangularConsistency:
    """
    Compare the dynamic MR value with the static optimum over the
    rectangularized set at matching granularity.
    """
    adversary = granularity
    solution = dynamic_dp_solve(instance, "mr", eps, adversary=adversary)
    rectangular = rectangularize_enumerate(instance, granularity)
    grid = grid_minimum(instance, grid_step, ambiguity=rectangular)
    rect_instance = RobustInstance(mdp=instance.mdp, ambiguity=rectangular, initial_state=instance.initial_state)
    policy_value = robust_value(rect_instance, solution.policy).value

    dynamic_value = solution.initial_value(instance.initial_state)
    slack = grid_slack(instance, grid_step)
    consistent = (
        dynamic_value <= grid.value + 1e-6
        and grid.value <= dynamic_value + slack + 1e-6
        and abs(policy_value - dynamic_value) <= 1e-6
    )
    if not consistent:
        logger.warning(
            f"Rectangular consistency failed: dynamic={dynamic_value:.8f}, grid={grid.value:.8f}, "
            f"policy={policy_value:.8f}, slack={slack:.4f}"
        )
    return RectangularConsistency(
        dynamic_value=dynamic_value,
        grid_value=grid.value,
        policy_value=policy_value,
        slack=slack,
        num_kernels=len(rectangular),
        consistent=consistent,
    )


def export_dp_values(solution: DynamicSolution, path) -> None:
    """CSV with columns stage (1-based), state, value, policy."""
    records = []
    for t, V in enumerate(solution.values):
        for s, value in enumerate(V):
            if isinstance(solution.policy, PolicyMD):
                policy = str(int(solution.policy.act[t][s]))
            else:
                policy = ";".join(f"{p:.17g}" for p in solution.policy.dist[t][s])
            records.append({"stage": t + 1, "state": s, "value": float(value), "policy": policy})
    pd.DataFrame(records, columns=["stage", "state", "value", "policy"]).to_csv(
        path, index=False
    )
