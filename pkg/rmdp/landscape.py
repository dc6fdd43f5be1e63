"""
Landscape - the robust value of the 2x2 local-minimizer gadget as a function
of the stage-1 mixture.

With p = pi1_0, a = pi2_00 and b = pi2_10 the two kernels give
    V1 = p*a + (1-p)*(1-2b),    V2 = p*b + (1-p)*(1-2a)
and f(p) = min over (a, b) of g(a, b) = max(V1, V2). g is convex and symmetric,
so the diagonal a = b attains the minimum and f(p) = min(1 - p, 2p - 1).
"""

import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import List

import numpy as np
import pandas as pd

from rmdp.core import PolicyMR, RobustInstance, evaluate_batch
from rmdp.errors import InvalidInputError
from rmdp.generators import LOCAL_MIN_MATRIX, local_minimizer_instance

logger = logging.getLogger("Landscape")

MAX_INNER_STEP = 0.1


@dataclass(frozen=True)
class ScanRow:
    pi1_0: float
    f_numeric: float
    f_closed: float
    gap: float


@lru_cache(maxsize=1)
def _gadget() -> RobustInstance:
    return local_minimizer_instance()


def _check_probability(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")


def _check_step(name: str, step: float, upper: float):
    if not 0.0 < step <= upper:
        raise InvalidInputError(f"{name} must lie in (0, {upper}], got {step}")


def _grid(step: float) -> np.ndarray:
    """0, step, ..., 1 with the last point pinned to 1."""
    m = int(np.ceil(1.0 / step - 1e-9))
    return np.minimum(np.arange(m + 1) * step, 1.0)


def g_value(pi1_0: float, a: float, b: float) -> float:
    """Robust value of the gadget at pi1 = (pi1_0, 1 - pi1_0), pi2_0 = (a, 1 - a), pi2_1 = (b, 1 - b)."""
    for name, value in (("pi1_0", pi1_0), ("a", a), ("b", b)):
        _check_probability(name, value)
    p = pi1_0
    return max(p * a + (1 - p) * (1 - 2 * b), p * b + (1 - p) * (1 - 2 * a))


def closed_form_robust_value(policy: PolicyMR, A=LOCAL_MIN_MATRIX) -> float:
    """
    max over the two kernels of sum_i pi1_i sum_j pi2_{m(i), j} A_{i, j}, where
    m is the identity under the first kernel and i -> n-1-i under the second.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    first, second = np.asarray(policy.dist[0][0]), np.asarray(policy.dist[1])
    if first.shape != (n,) or second.shape != (n, n):
        raise InvalidInputError(f"Policy does not match an {n}x{n} gadget")
    identity = float(first @ (second * A).sum(axis=1))
    flipped = float(first @ (second[::-1] * A).sum(axis=1))
    return max(identity, flipped)


def f_closed(pi1_0: float) -> float:
    """min{pi1_1, pi1_0 - pi1_1} with pi1_1 = 1 - pi1_0."""
    _check_probability("pi1_0", pi1_0)
    pi1_1 = 1.0 - pi1_0
    return min(pi1_1, pi1_0 - pi1_1)


def f_numeric(pi1_0: float, grid_step: float, full_grid: bool = False) -> float:
    """
    Minimize the gadget's robust value over the stage-2 rows on a grid.

    Policies are evaluated through the gadget instance itself (batched
    backward induction under both kernels). The default scans the diagonal
    a = b; full_grid scans every (a, b) pair.
    """
    _check_probability("pi1_0", pi1_0)
    _check_step("grid_step", grid_step, MAX_INNER_STEP)

    instance = _gadget()
    points = _grid(grid_step)
    if full_grid:
        a, b = (axis.ravel() for axis in np.meshgrid(points, points, indexing="ij"))
    else:
        a = b = points
    B = len(a)
    first = np.tile([[pi1_0, 1.0 - pi1_0]], (B, 1, 1))
    second = np.stack([np.stack([a, 1.0 - a], axis=1), np.stack([b, 1.0 - b], axis=1)], axis=1)
    third = np.ones((B, 4, 1))
    batch = [first, second, third]
    values = np.max(
        [evaluate_batch(instance.mdp, kernel, batch, instance.initial_state) for kernel in instance.ambiguity],
        axis=0,
    )
    return float(values.min())


def scan(grid_step_pi1: float, grid_step_inner: float, full_grid: bool = False) -> List[ScanRow]:
    """Rows for pi1_0 = 0, step, ..., 1 in increasing order."""
    _check_step("grid_step_pi1", grid_step_pi1, 1.0)
    _check_step("grid_step_inner", grid_step_inner, MAX_INNER_STEP)
    rows = []
    for pi1_0 in _grid(grid_step_pi1):
        pi1_0 = float(pi1_0)
        numeric = f_numeric(pi1_0, grid_step_inner, full_grid=full_grid)
        closed = f_closed(pi1_0)
        rows.append(ScanRow(pi1_0=pi1_0, f_numeric=numeric, f_closed=closed, gap=numeric - closed))
    logger.info(
        f"Scanned {len(rows)} stage-1 mixtures (inner step {grid_step_inner}, full_grid={full_grid}), "
        f"max |gap| {max(abs(r.gap) for r in rows):.3e}"
    )
    return rows


def scan_to_frame(rows: List[ScanRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows], columns=["pi1_0", "f_numeric", "f_closed", "gap"])


def write_scan_csv(rows: List[ScanRow], path) -> None:
    scan_to_frame(rows).to_csv(path, index=False)
