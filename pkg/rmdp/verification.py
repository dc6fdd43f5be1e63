"""
Verification Runner - seeded invariant suites behind `verify`.

Suites:
1. partition: exhaustive deterministic optimum vs the subset-sum oracle
2. local-min: values, grid optimum, strict local-min certificate, subgradient
   basins and the closed-form landscape of the 2x2 gadget
3. dynamic: stage games of the partition gadget, MD/MR ordering, the
   per-stage adversary inequality and rectangular consistency

Each suite returns a VerificationSummary; a failing check carries the case
that broke it so the run can be replayed.
"""

import logging
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from rmdp.core import PolicyMR
from rmdp.dynamic import dynamic_dp_solve, evaluate_per_stage_adversary, rectangular_consistency
from rmdp.generators import (
    PartitionSpec,
    local_minimizer_instance,
    near_trap_policy,
    partition_instance,
    random_instance,
    random_policy,
    subset_sum_oracle,
    trap_policy,
)
from rmdp.landscape import f_closed, scan
from rmdp.robust import robust_value
from rmdp.solvers import grid_minimum, local_min_certificate, solve_md_exhaustive, solve_mr_subgradient

logger = logging.getLogger("VerificationRunner")

PARTITION_EDGE_CASES = ((1,), (1, 1), (1, 2), (2, 2, 2), (1, 2, 3), (1, 1, 3))


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    failing_case: Optional[Dict[str, Any]] = None


class VerificationSummary(BaseModel):
    suite: str
    seed: int
    passed: bool = True
    checks: List[CheckResult] = Field(default_factory=list)

    def add(self, check: CheckResult):
        self.checks.append(check)
        self.passed = self.passed and check.passed


def _describe(instance) -> Dict[str, Any]:
    mdp = instance.mdp
    return {
        "num_states": list(mdp.num_states),
        "num_actions": list(mdp.num_actions),
        "cost": [c.tolist() for c in mdp.cost],
        "kernels": [[p.tolist() for p in k.trans] for k in instance.ambiguity],
    }


class VerificationRunner:
    """Runs the invariant suites with a single explicit seed."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        logger.info(f"VerificationRunner initialized with seed={seed}")

    def _check(self, summary: VerificationSummary, name: str, body: Callable[[], CheckResult]):
        check = body()
        summary.add(check)
        level = logging.INFO if check.passed else logging.ERROR
        logger.log(level, f"[{summary.suite}] {name}: {'pass' if check.passed else 'FAIL'} {check.detail}")

    # ------------------------------------------------------------------
    # Partition
    # ------------------------------------------------------------------

    def _partition_cases(self, n_max: int, trials: int, max_total: int) -> List[tuple]:
        cases = list(PARTITION_EDGE_CASES)
        for _ in range(trials):
            n = int(self.rng.integers(1, n_max + 1))
            high = max(1, max_total // n)
            cases.append(tuple(int(w) for w in self.rng.integers(1, high + 1, size=n)))
        return cases

    def run_partition_suite(self, n_max: int = 10, trials: int = 50, max_total: int = 200) -> VerificationSummary:
        summary = VerificationSummary(suite="partition", seed=self.seed)
        cases = self._partition_cases(n_max, trials, max_total)

        def equivalence() -> CheckResult:
            for weights in cases:
                spec = PartitionSpec(weights=weights)
                report = solve_md_exhaustive(partition_instance(spec))
                total = sum(weights)
                splittable = subset_sum_oracle(spec)
                ok = 2 * report.best_value == total if splittable else 2 * report.best_value > total
                if not ok:
                    return CheckResult(
                        name="partition-equivalence",
                        passed=False,
                        detail=f"optimum {report.best_value} vs half-sum {total / 2}, oracle={splittable}",
                        failing_case={"weights": list(weights)},
                    )
            return CheckResult(name="partition-equivalence", passed=True, detail=f"{len(cases)} weight sets")

        self._check(summary, "partition-equivalence", equivalence)
        return summary

    # ------------------------------------------------------------------
    # Local-minimizer gadget
    # ------------------------------------------------------------------

    def run_local_min_suite(
        self,
        radius: float = 0.05,
        grid_step: float = 0.01,
        global_grid_step: float = 0.01,
        scan_step: float = 0.001,
    ) -> VerificationSummary:
        summary = VerificationSummary(suite="local-min", seed=self.seed)
        instance = local_minimizer_instance()
        trap = trap_policy(instance)

        def trap_value() -> CheckResult:
            evaluation = robust_value(instance, trap)
            ok = abs(evaluation.value) <= 1e-9 and all(abs(v) <= 1e-9 for v in evaluation.per_kernel_values)
            return CheckResult(name="trap-value", passed=ok, detail=f"per-kernel {evaluation.per_kernel_values}")

        def global_minimum() -> CheckResult:
            result = grid_minimum(instance, global_grid_step)
            ok = abs(result.value + 1.0) <= 1e-9
            return CheckResult(
                name="grid-global-minimum",
                passed=ok,
                detail=f"{result.value:.12f} over {result.points_examined} grid policies",
            )

        def certificate() -> CheckResult:
            cert = local_min_certificate(instance, trap, radius=radius, grid_step=grid_step)
            ok = cert.is_local_min and cert.is_strict and cert.witness is None
            return CheckResult(
                name="strict-local-min",
                passed=ok,
                detail=f"radius {radius}, step {grid_step}, {cert.points_examined} neighbors, "
                       f"min neighbor {cert.min_neighbor_value:.6f}",
                failing_case=None if ok else {"witness": [d.tolist() for d in cert.witness.dist]},
            )

        def basins() -> CheckResult:
            trapped = solve_mr_subgradient(instance, near_trap_policy(instance, self.rng), step0=0.05, iters=2000)
            escape_init = PolicyMR(dist=[np.array([[0.0, 1.0]]), np.full((2, 2), 0.5), np.ones((4, 1))])
            escaped = solve_mr_subgradient(instance, escape_init, step0=0.1, iters=5000)
            ok = abs(trapped.best_value) <= 1e-6 and abs(escaped.best_value + 1.0) <= 1e-6
            return CheckResult(
                name="subgradient-basins",
                passed=ok,
                detail=f"near-trap {trapped.best_value:.8f}, escape {escaped.best_value:.8f}",
            )

        def landscape() -> CheckResult:
            rows = scan(scan_step, scan_step)
            worst = max(abs(r.gap) for r in rows)
            kink = all(f_closed(1.0 - e) > f_closed(1.0) for e in (0.01, 0.02, 0.05))
            return CheckResult(
                name="closed-form-landscape",
                passed=worst <= 0.002 and kink,
                detail=f"max |gap| {worst:.2e} over {len(rows)} rows",
            )

        for name, body in (
            ("trap-value", trap_value),
            ("grid-global-minimum", global_minimum),
            ("strict-local-min", certificate),
            ("subgradient-basins", basins),
            ("closed-form-landscape", landscape),
        ):
            self._check(summary, name, body)
        return summary

    # ------------------------------------------------------------------
    # Dynamic formulation
    # ------------------------------------------------------------------

    def run_dynamic_suite(self, tiny: bool = False, trials: int = 200) -> VerificationSummary:
        summary = VerificationSummary(suite="dynamic", seed=self.seed)
        consistency_state = 20 if tiny else 40
        consistency_action = 5 if tiny else 10

        def partition_games() -> CheckResult:
            instance = partition_instance(PartitionSpec(weights=(1, 2, 3)))
            md = dynamic_dp_solve(instance, "md").initial_value()
            mr = dynamic_dp_solve(instance, "mr").initial_value()
            ok = abs(md - 6.0) <= 1e-9 and abs(mr - 3.0) <= 1e-6
            return CheckResult(name="partition-stage-games", passed=ok, detail=f"MD {md}, MR {mr:.9f}")

        def ordering_and_power() -> CheckResult:
            for i in range(trials):
                instance = random_instance(self.rng, num_kernels=int(self.rng.integers(1, 4)))
                md = dynamic_dp_solve(instance, "md")
                mr = dynamic_dp_solve(instance, "mr")
                for t, (v_mr, v_md) in enumerate(zip(mr.values, md.values)):
                    if np.any(v_mr > v_md + 1e-10):
                        return CheckResult(
                            name="md-mr-ordering-and-adversary-power",
                            passed=False,
                            detail=f"MR above MD at stage {t + 1}",
                            failing_case=_describe(instance),
                        )
                policy = random_policy(instance.mdp, self.rng)
                per_stage = evaluate_per_stage_adversary(instance, policy)[0][instance.initial_state]
                static = robust_value(instance, policy).value
                if per_stage < static - 1e-10:
                    return CheckResult(
                        name="md-mr-ordering-and-adversary-power",
                        passed=False,
                        detail=f"per-stage {per_stage} below static {static}",
                        failing_case={**_describe(instance), "policy": [d.tolist() for d in policy.dist]},
                    )
            return CheckResult(name="md-mr-ordering-and-adversary-power", passed=True, detail=f"{trials} samples")

        def consistency() -> CheckResult:
            shapes = [("state", (1, 2, 2), (2, 2, 1))] * consistency_state
            shapes += [("state_action", (1, 2), (2, 2))] * consistency_action
            worst_gap = 0.0
            for granularity, num_states, num_actions in shapes:
                instance = random_instance(
                    self.rng, num_states=num_states, num_actions=num_actions, num_kernels=2, nonnegative=True
                )
                result = rectangular_consistency(instance, grid_step=0.02, granularity=granularity)
                worst_gap = max(worst_gap, result.grid_value - result.dynamic_value)
                if not result.consistent:
                    return CheckResult(
                        name="rectangular-consistency",
                        passed=False,
                        detail=f"{granularity}: dynamic {result.dynamic_value:.8f}, grid {result.grid_value:.8f}, "
                               f"policy {result.policy_value:.8f}, slack {result.slack:.4f}",
                        failing_case=_describe(instance),
                    )
            return CheckResult(
                name="rectangular-consistency",
                passed=True,
                detail=f"{len(shapes)} instances, largest grid gap {worst_gap:.2e}",
            )

        for name, body in (
            ("partition-stage-games", partition_games),
            ("md-mr-ordering-and-adversary-power", ordering_and_power),
            ("rectangular-consistency", consistency),
        ):
            self._check(summary, name, body)
        return summary

    def generate_report(self, summary: VerificationSummary) -> str:
        """Human-readable block for the console."""
        lines = ["=" * 60, f"VERIFICATION: {summary.suite.upper()} (seed={summary.seed})", "=" * 60]
        for check in summary.checks:
            mark = "PASS" if check.passed else "FAIL"
            lines.append(f"[{mark}] {check.name}: {check.detail}")
            if check.failing_case is not None:
                lines.append(f"       failing case: {check.failing_case}")
        lines.append("-" * 60)
        lines.append(f"Result: {'PASSED' if summary.passed else 'FAILED'}")
        lines.append("=" * 60)
        return "\n".join(lines)
