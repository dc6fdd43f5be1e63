"""
Static Solvers - min over policies of the worst-case value over a fixed kernel list.

Implements:
- exhaustive search over deterministic Markov policies (exact integer arithmetic
  on integer-cost {0,1}-kernel instances)
- projected subgradient descent over randomized Markov policies
- grid certificates: strict local minimality in a ball, global grid minimum
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from rmdp.config import Config
from rmdp.core import (
    AmbiguitySet,
    PolicyMD,
    PolicyMR,
    RobustInstance,
    decision_rows,
    embed_md,
    evaluate_batch,
    is_integral,
    stage_values,
    state_visitation,
    successor_tables,
    trajectory_cost,
    validate_policy,
)
from rmdp.errors import InvalidInputError, SizeGuardError
from rmdp.robust import RobustEvaluation, robust_value

logger = logging.getLogger("StaticSolvers")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    robust_value: float
    worst_kernel_index: int


@dataclass
class SolveReport:
    """Best policy found by a static solver and how it was found."""
    best_policy: Union[PolicyMD, PolicyMR]
    best_value: float
    worst_kernel_index: int
    per_kernel_values: List[float]
    policies_examined: int = 0
    iterations: int = 0
    trace: List[TraceRow] = field(default_factory=list)


@dataclass(frozen=True)
class PolicyGradient:
    """Gradient of the worst kernel's value, shaped like PolicyMR.dist."""
    grad: tuple
    worst_kernel_index: int
    value: float


@dataclass
class LocalMinCertificate:
    is_local_min: bool
    is_strict: bool
    witness: Optional[PolicyMR]
    center_value: float
    min_neighbor_value: float
    points_examined: int


@dataclass
class GridSearchResult:
    value: float
    policy: PolicyMR
    points_examined: int


# ---------------------------------------------------------------------------
# Exhaustive search over deterministic policies
# ---------------------------------------------------------------------------

def _md_policy(instance: RobustInstance, rows, choices: Sequence[int]) -> PolicyMD:
    act = [np.zeros(n, dtype=np.int64) for n in instance.mdp.num_states]
    for (t, s, _), a in zip(rows, choices):
        act[t][s] = a
    return PolicyMD(act=act, num_actions=instance.mdp.num_actions)


def solve_md_exhaustive(instance: RobustInstance, max_policies: int = None) -> SolveReport:
    """
    Enumerate every deterministic Markov policy and keep the robust minimizer.

    Policies are visited in lexicographic order (stage-major, state-minor,
    action index); only a strictly better value replaces the incumbent, so ties
    go to the lexicographically smallest policy. On integer-cost instances with
    {0,1} kernels values are Python integers and comparisons are exact.

    Raises:
        SizeGuardError: if the number of policies exceeds max_policies
    """
    limit = Config.MD_MAX_POLICIES if max_policies is None else max_policies
    mdp = instance.mdp
    rows = decision_rows(mdp)
    count = math.prod(n for _, _, n in rows)
    if count > limit:
        raise SizeGuardError(f"{count} deterministic policies exceed the exhaustive limit {limit}")

    exact = is_integral(mdp, instance.ambiguity)
    logger.info(f"Exhaustive search over {count} deterministic policies (exact={exact}, K={len(instance.ambiguity)})")

    if exact:
        costs = [c.astype(np.int64).tolist() for c in mdp.cost]
        successors = [successor_tables(kernel) for kernel in instance.ambiguity]
        act = [[0] * n for n in mdp.num_states]

        def per_kernel_values(choices):
            for (t, s, _), a in zip(rows, choices):
                act[t][s] = a
            return [trajectory_cost(costs, succ, act, instance.initial_state) for succ in successors]
    else:
        def per_kernel_values(choices):
            return robust_value(instance, embed_md(_md_policy(instance, rows, choices))).per_kernel_values

    best_choices, best_values, best_value = None, None, None
    for choices in itertools.product(*(range(n) for _, _, n in rows)):
        values = per_kernel_values(choices)
        value = max(values)
        if best_value is None or value < best_value:
            best_choices, best_values, best_value = choices, values, value

    logger.info(f"Exhaustive optimum {best_value} after {count} policies")
    return SolveReport(
        best_policy=_md_policy(instance, rows, best_choices),
        best_value=best_value,
        worst_kernel_index=best_values.index(best_value),
        per_kernel_values=list(best_values),
        policies_examined=count,
    )


# ---------------------------------------------------------------------------
# Projected subgradient over randomized policies
# ---------------------------------------------------------------------------

def _project_rows(matrix: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row onto the probability simplex (sort-based)."""
    u = -np.sort(-matrix, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, matrix.shape[1] + 1)
    positive = u - css / ind > 0
    rho = matrix.shape[1] - 1 - np.argmax(positive[:, ::-1], axis=1)  # last True
    theta = css[np.arange(matrix.shape[0]), rho] / (rho + 1)
    return np.maximum(matrix - theta[:, None], 0.0)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of a finite vector onto the probability simplex."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size < 1 or not np.all(np.isfinite(v)):
        raise InvalidInputError("Simplex projection needs a finite vector of dimension >= 1")
    return _project_rows(v[None, :])[0]


def _kernel_gradient(instance: RobustInstance, policy: PolicyMR, k: int) -> tuple:
    kernel = instance.ambiguity[k]
    _, Q = stage_values(instance.mdp, kernel, policy)
    visits = state_visitation(instance.mdp, kernel, policy, instance.initial_state)
    return tuple(d[:, None] * q for d, q in zip(visits, Q))


def robust_subgradient(instance: RobustInstance, policy: PolicyMR) -> PolicyGradient:
    """
    Gradient of V under the (lowest-index) worst kernel with respect to every
    policy coordinate: dV/dpi_t(a|s) = Pr(S_t = s) * Q_t(s, a).
    """
    evaluation = robust_value(instance, policy)
    return PolicyGradient(
        grad=_kernel_gradient(instance, policy, evaluation.worst_kernel_index),
        worst_kernel_index=evaluation.worst_kernel_index,
        value=evaluation.value,
    )


def solve_mr_subgradient(
    instance: RobustInstance,
    init: PolicyMR,
    step0: float = None,
    iters: int = None,
) -> SolveReport:
    """
    Projected subgradient descent with steps step0 / sqrt(j + 1).

    Iterate 0 is `init`; `iters` updates produce iterates 0..iters, all traced.
    The report carries the first iterate attaining the smallest robust value,
    not the last one.

    Raises:
        InvalidInputError: for a non-positive step, iters < 1 or an invalid init
    """
    step0 = Config.SUBGRADIENT_STEP0 if step0 is None else step0
    iters = Config.SUBGRADIENT_ITERS if iters is None else iters
    if iters < 1 or not step0 > 0:
        raise InvalidInputError(f"Subgradient needs iters >= 1 and step0 > 0, got iters={iters}, step0={step0}")
    violations = validate_policy(instance.mdp, init)
    if violations:
        raise InvalidInputError("Invalid initial policy: " + "; ".join(violations))

    policy = init
    best_policy: PolicyMR = init
    best: Optional[RobustEvaluation] = None
    trace: List[TraceRow] = []
    for j in range(iters + 1):
        evaluation = robust_value(instance, policy)
        trace.append(TraceRow(j, evaluation.value, evaluation.worst_kernel_index))
        if best is None or evaluation.value < best.value:
            best, best_policy = evaluation, policy
        if j == iters:
            break
        grad = _kernel_gradient(instance, policy, evaluation.worst_kernel_index)
        step = step0 / math.sqrt(j + 1)
        policy = PolicyMR(dist=[_project_rows(p - step * g) for p, g in zip(policy.dist, grad)])
        if j % 500 == 0:
            logger.debug(f"iter {j}: value={evaluation.value:.10f}, worst kernel {evaluation.worst_kernel_index}")

    logger.info(f"Subgradient finished: best value {best.value:.10f} over {iters} iterations")
    return SolveReport(
        best_policy=best_policy,
        best_value=best.value,
        worst_kernel_index=best.worst_kernel_index,
        per_kernel_values=best.per_kernel_values,
        iterations=iters,
        trace=trace,
    )


def export_trace(report: SolveReport, path) -> None:
    """Write the trace as CSV with columns iteration, robust_value, worst_kernel_index."""
    frame = pd.DataFrame(
        [asdict(row) for row in report.trace],
        columns=["iteration", "robust_value", "worst_kernel_index"],
    )
    frame.to_csv(path, index=False)


# ---------------------------------------------------------------------------
# Grid certificates
# ---------------------------------------------------------------------------

def local_min_certificate(
    instance: RobustInstance,
    policy: PolicyMR,
    radius: float = None,
    grid_step: float = None,
    tol: float = None,
    max_coordinates: int = None,
) -> LocalMinCertificate:
    """
    Compare `policy` against every grid policy within `radius`.

    Free coordinates (all but the last action of each decision row) move by
    integer multiples of grid_step; the last action absorbs the remainder.
    Distance is Euclidean over all action probabilities of all decision rows.
    A grid certificate, bounded by its resolution; not a proof.
    """
    radius = Config.LOCAL_MIN_RADIUS if radius is None else radius
    grid_step = Config.LOCAL_MIN_GRID_STEP if grid_step is None else grid_step
    tol = Config.VALUE_TOLERANCE if tol is None else tol
    limit = Config.LOCAL_MIN_MAX_COORDINATES if max_coordinates is None else max_coordinates

    rows = decision_rows(instance.mdp)
    coordinates = sum(n for _, _, n in rows)
    if coordinates > limit:
        raise SizeGuardError(f"{coordinates} policy coordinates exceed the certificate limit {limit}")
    if not 0 < grid_step <= radius:
        raise InvalidInputError(f"Need 0 < grid_step <= radius, got grid_step={grid_step}, radius={radius}")
    violations = validate_policy(instance.mdp, policy)
    if violations:
        raise InvalidInputError("Invalid center policy: " + "; ".join(violations))

    k_max = int(math.floor(radius / grid_step + 1e-9))
    bound = radius * radius + 1e-12
    row_moves = []
    for t, s, n in rows:
        center = policy.dist[t][s]
        moves = []
        for free in itertools.product(range(-k_max, k_max + 1), repeat=n - 1):
            delta = np.array(free, dtype=float) * grid_step
            delta = np.append(delta, -delta.sum())
            point = center + delta
            if np.any(point < -1e-12) or np.any(point > 1 + 1e-12):
                continue
            squared = float(delta @ delta)
            if squared <= bound:
                moves.append((squared, np.clip(point, 0.0, 1.0), any(free)))
        row_moves.append(moves)

    center_value = robust_value(instance, policy).value
    witness, min_neighbor = None, math.inf
    is_local_min, is_strict, examined = True, True, 0
    for combo in itertools.product(*row_moves):
        if not any(moved for _, _, moved in combo):
            continue
        if sum(squared for squared, _, _ in combo) > bound:
            continue
        dist = [np.array(d) for d in policy.dist]
        for (t, s, _), (_, point, _) in zip(rows, combo):
            dist[t][s] = point
        neighbor = PolicyMR(dist=dist)
        value = robust_value(instance, neighbor).value
        examined += 1
        min_neighbor = min(min_neighbor, value)
        if value < center_value - tol and is_local_min:
            is_local_min = False
            witness = neighbor
        if value <= center_value + tol and is_strict:
            is_strict = False
            if witness is None:
                witness = neighbor

    if not is_local_min:
        is_strict = False
    logger.info(
        f"Local-min certificate: center={center_value:.6f}, neighbors={examined}, "
        f"local_min={is_local_min}, strict={is_strict}"
    )
    return LocalMinCertificate(
        is_local_min=is_local_min,
        is_strict=is_strict,
        witness=witness,
        center_value=center_value,
        min_neighbor_value=min_neighbor,
        points_examined=examined,
    )


def simplex_grid(n: int, resolution: int) -> np.ndarray:
    """All points of the n-simplex with coordinates k / resolution, lexicographic."""
    points = [
        free + (resolution - sum(free),)
        for free in itertools.product(range(resolution + 1), repeat=n - 1)
        if sum(free) <= resolution
    ]
    return np.array(points, dtype=float) / resolution


def grid_minimum(
    instance: RobustInstance,
    grid_step: float,
    ambiguity: Optional[AmbiguitySet] = None,
    max_points: int = None,
    batch_size: int = None,
) -> GridSearchResult:
    """
    Minimize the robust value over the grid of randomized Markov policies.

    Args:
        grid_step: resolution; 1 / grid_step must be an integer
        ambiguity: kernel list to maximize over (defaults to the instance's own)
    """
    max_points = Config.GRID_MAX_POINTS if max_points is None else max_points
    batch_size = Config.GRID_BATCH_SIZE if batch_size is None else batch_size
    resolution = int(round(1.0 / grid_step))
    if resolution < 1 or abs(resolution * grid_step - 1.0) > 1e-9:
        raise InvalidInputError(f"1 / grid_step must be a positive integer, got grid_step={grid_step}")

    mdp = instance.mdp
    kernels = instance.ambiguity if ambiguity is None else ambiguity
    rows = decision_rows(mdp)
    grids = {n: simplex_grid(n, resolution) for n in {n for _, _, n in rows}}
    sizes = [len(grids[n]) for _, _, n in rows]
    total = math.prod(sizes)
    if total > max_points:
        raise SizeGuardError(f"Policy grid has {total} points, limit {max_points}")

    base = PolicyMR.uniform(mdp).dist
    best_value, best_index = math.inf, 0
    for start in range(0, total, batch_size):
        index = np.arange(start, min(total, start + batch_size))
        digits = np.unravel_index(index, sizes) if rows else ()
        batch = [np.repeat(d[None], len(index), axis=0) for d in base]
        for (t, s, n), digit in zip(rows, digits):
            batch[t][:, s, :] = grids[n][digit]
        values = np.max(
            [evaluate_batch(mdp, kernel, batch, instance.initial_state) for kernel in kernels],
            axis=0,
        )
        i = int(np.argmin(values))
        if values[i] < best_value:
            best_value, best_index = float(values[i]), int(index[i])

    dist = [np.array(d) for d in base]
    if rows:
        for (t, s, n), digit in zip(rows, np.unravel_index(best_index, sizes)):
            dist[t][s] = grids[n][digit]
    logger.info(f"Grid minimum {best_value:.10f} over {total} policies (step {grid_step})")
    return GridSearchResult(value=best_value, policy=PolicyMR(dist=dist), points_examined=total)
