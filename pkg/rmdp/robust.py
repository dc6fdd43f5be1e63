"""
Robust Evaluator - worst-case policy evaluation over a finite ambiguity set.

The adversary commits to one kernel for the whole horizon, so the robust value
of a policy is the maximum of K ordinary evaluations: one backward induction
per kernel and a max, polynomial even though the set is not rectangular.
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from rmdp.config import Config
from rmdp.core import AmbiguitySet, PolicyMR, RobustInstance, evaluate
from rmdp.errors import InvalidInputError, PreconditionError

logger = logging.getLogger("RobustEvaluator")

__all__ = [
    "AmbiguitySet",
    "MaxSumCheck",
    "RobustEvaluation",
    "max_sum_equivalence_check",
    "robust_value",
]


@dataclass(frozen=True)
class RobustEvaluation:
    """Worst-case value with the full per-kernel profile."""
    value: float
    worst_kernel_index: int
    per_kernel_values: List[float]

    @property
    def margin(self) -> float:
        """Gap between the worst kernel and the runner-up (inf for K = 1)."""
        others = [v for k, v in enumerate(self.per_kernel_values) if k != self.worst_kernel_index]
        return self.value - max(others) if others else float("inf")


@dataclass(frozen=True)
class MaxSumCheck:
    max_value: float
    sum_value: float
    all_zero: bool
    both_nonpositive_agree: bool


def robust_value(instance: RobustInstance, policy: PolicyMR) -> RobustEvaluation:
    """
    Evaluate `policy` under every kernel and keep the worst.

    Ties are broken by the lowest kernel index so downstream subgradients are
    deterministic.
    """
    if len(instance.ambiguity) == 0:
        raise InvalidInputError("Ambiguity set is empty")
    per_kernel = [
        evaluate(instance.mdp, kernel, policy, instance.initial_state)
        for kernel in instance.ambiguity
    ]
    worst = int(np.argmax(per_kernel))
    return RobustEvaluation(
        value=per_kernel[worst],
        worst_kernel_index=worst,
        per_kernel_values=per_kernel,
    )


def max_sum_equivalence_check(
    instance: RobustInstance,
    policy: PolicyMR,
    tol: float = None,
) -> MaxSumCheck:
    """
    Compare max_k V_k and sum_k V_k against zero for a nonnegative-cost instance.

    With nonnegative costs every V_k >= 0, so max <= 0, sum <= 0 and
    "all V_k are zero" must agree; the record reports all three.

    Raises:
        PreconditionError: if any cost is negative
    """
    tol = Config.NONPOSITIVE_TOLERANCE if tol is None else tol
    for t, cost in enumerate(instance.mdp.cost):
        if np.any(cost < 0):
            raise PreconditionError(f"Stage {t + 1} has negative costs; the max/sum check needs costs >= 0")

    evaluation = robust_value(instance, policy)
    values = evaluation.per_kernel_values
    max_value = evaluation.value
    sum_value = float(sum(values))
    all_zero = all(v <= tol for v in values)
    agree = (max_value <= tol) == (sum_value <= tol)
    if not agree:
        logger.warning(f"Max/sum disagreement: max={max_value:.3e}, sum={sum_value:.3e}")
    return MaxSumCheck(
        max_value=max_value,
        sum_value=sum_value,
        all_zero=all_zero,
        both_nonpositive_agree=agree,
    )
