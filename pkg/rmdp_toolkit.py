#!/usr/bin/env python3
"""
RMDP Toolkit - command line for finite-horizon robust MDP experiments.

Subcommands:
    gen      write an instance document (partition, local-min, matrix, random, infinite)
    eval     robust value of a policy on an instance
    solve    md (exhaustive), mr (projected subgradient), dp (dynamic formulation)
    dp       alias of `solve dp`
    scan     landscape of the local-minimizer gadget as CSV
    verify   seeded invariant suites (partition, local-min, dynamic)
             `theorem2` is accepted wherever `local-min` is

Every artifact F is written together with F.manifest.json.
Exit codes: 0 ok, 1 verification failure, 2 bad input, 3 size guard.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from output_formatter import OutputFormatter
from rmdp.config import Config
from rmdp.core import PolicyMR, validate
from rmdp.documents import (
    InfiniteHorizonDocument,
    PolicyDocument,
    ReportDocument,
    RunManifest,
    load_instance,
    read_document,
    save_instance,
    write_document,
)
from rmdp.dynamic import dynamic_dp_solve, evaluate_per_stage_adversary, export_dp_values
from rmdp.errors import InvalidInputError, NumericalError, PreconditionError, SizeGuardError
from rmdp.generators import (
    MatrixGadgetSpec,
    PartitionSpec,
    extend_infinite_horizon,
    local_minimizer_instance,
    matrix_gadget_instance,
    near_trap_policy,
    partition_instance,
    random_instance,
    random_policy,
)
from rmdp.landscape import scan, write_scan_csv
from rmdp.robust import robust_value
from rmdp.solvers import export_trace, solve_md_exhaustive, solve_mr_subgradient
from rmdp.verification import VerificationRunner

logger = logging.getLogger("RMDPToolkit")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_SIZE_GUARD = 3


def setup_logging():
    """Logs go to stderr (and RMDP_LOG_FILE when set); stdout carries summaries."""
    handlers = [logging.StreamHandler(sys.stderr)]
    if Config.LOG_FILE:
        handlers.append(logging.FileHandler(Config.LOG_FILE))
    logging.basicConfig(
        level=Config.log_level(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


class Run:
    """Per-invocation context: flags, input digest and the manifests to write."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.started = time.perf_counter()
        self.input_digest: Optional[str] = None

    @property
    def subcommand(self) -> str:
        parts = [self.args.command]
        for attr in ("kind", "mode", "suite"):
            value = getattr(self.args, attr, None)
            if value and value not in parts:
                parts.append(value)
        return " ".join(parts)

    def flags(self) -> dict:
        flags = {}
        for key, value in sorted(vars(self.args).items()):
            if key in ("func", "command", "kind", "mode", "suite"):
                continue
            flags[key] = str(value) if isinstance(value, Path) else value
        return flags

    def manifest(self, artifact) -> None:
        manifest = RunManifest(
            subcommand=self.subcommand,
            flags=self.flags(),
            input_digest=self.input_digest,
            tool_version=Config.TOOL_VERSION,
            duration_seconds=round(time.perf_counter() - self.started, 6),
        )
        write_document(manifest, f"{artifact}.manifest.json")

    def load(self, path):
        instance, digest = load_instance(path)
        violations = validate(instance)
        if violations:
            raise InvalidInputError(f"{path}: " + "; ".join(violations))
        self.input_digest = digest
        return instance


def _rng(args) -> np.random.Generator:
    if args.seed is None:
        raise InvalidInputError("This randomized procedure needs an explicit --seed")
    return np.random.default_rng(args.seed)


def _parse_matrix(text: str) -> np.ndarray:
    try:
        rows = [[float(x) for x in row.split(",")] for row in text.split(";") if row.strip()]
        return np.array(rows, dtype=float)
    except ValueError as e:
        raise InvalidInputError(f"Cannot parse matrix {text!r}: {e}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(run: Run) -> int:
    args = run.args
    if args.kind == "partition":
        instance = partition_instance(PartitionSpec.parse(args.weights))
    elif args.kind in ("local-min", "theorem2"):
        instance = local_minimizer_instance()
    elif args.kind == "matrix":
        A = _parse_matrix(args.matrix)
        instance = matrix_gadget_instance(MatrixGadgetSpec(n=A.shape[0] if A.ndim == 2 else 0, A=A))
    elif args.kind == "random":
        instance = random_instance(
            _rng(args),
            horizon=args.horizon,
            max_states=args.max_states,
            max_actions=args.max_actions,
            num_kernels=args.kernels,
            nonnegative=args.nonnegative,
            integer_costs=args.integer_costs,
        )
    else:  # infinite
        base = run.load(args.base)
        embedded = extend_infinite_horizon(base, args.gamma)
        write_document(InfiniteHorizonDocument.from_instance(embedded), args.out)
        run.manifest(args.out)
        OutputFormatter.section_header("GEN INFINITE", icon='file')
        OutputFormatter.key_value("Stationary states", embedded.num_states)
        OutputFormatter.key_value("Sink", embedded.sink_state)
        OutputFormatter.key_value("Written", args.out, color='gray')
        return EXIT_OK

    violations = validate(instance)
    if violations:
        raise InvalidInputError("; ".join(violations))
    digest = save_instance(instance, args.out)
    run.manifest(args.out)
    OutputFormatter.section_header(f"GEN {args.kind.upper()}", icon='file')
    OutputFormatter.key_value("Horizon", instance.mdp.horizon)
    OutputFormatter.key_value("Kernels", len(instance.ambiguity))
    OutputFormatter.key_value("Digest", digest, color='gray')
    OutputFormatter.key_value("Written", args.out, color='gray')
    return EXIT_OK


def cmd_eval(run: Run) -> int:
    args = run.args
    instance = run.load(args.instance)
    document, _ = read_document(args.policy, PolicyDocument)
    policy = document.to_policy(instance.mdp)
    evaluation = robust_value(instance, policy)
    per_stage = evaluate_per_stage_adversary(instance, policy)[0][instance.initial_state]
    report = ReportDocument(
        kind="eval",
        value=evaluation.value,
        worst_kernel_index=evaluation.worst_kernel_index,
        per_kernel_values=evaluation.per_kernel_values,
        details={"per_stage_adversary_value": float(per_stage)},
    )
    if args.out:
        write_document(report, args.out)
        run.manifest(args.out)
    OutputFormatter.format_report(report, args.out)
    return EXIT_OK


def _initial_policy(run: Run, instance) -> PolicyMR:
    args = run.args
    if args.init == "uniform":
        return PolicyMR.uniform(instance.mdp)
    if args.init == "near-trap":
        return near_trap_policy(instance, _rng(args))
    if args.init == "random":
        return random_policy(instance.mdp, _rng(args))
    document, _ = read_document(args.init, PolicyDocument)
    return document.to_policy(instance.mdp)


def cmd_solve(run: Run) -> int:
    args = run.args
    instance = run.load(args.instance)
    if args.mode == "md":
        result = solve_md_exhaustive(instance)
        report = ReportDocument(
            kind="solve-md",
            value=float(result.best_value),
            worst_kernel_index=result.worst_kernel_index,
            per_kernel_values=[float(v) for v in result.per_kernel_values],
            policy=PolicyDocument.from_policy(result.best_policy),
            details={"policies_examined": result.policies_examined},
        )
    elif args.mode == "mr":
        result = solve_mr_subgradient(instance, _initial_policy(run, instance), step0=args.step0, iters=args.iters)
        report = ReportDocument(
            kind="solve-mr",
            value=result.best_value,
            worst_kernel_index=result.worst_kernel_index,
            per_kernel_values=result.per_kernel_values,
            policy=PolicyDocument.from_policy(result.best_policy),
            details={"iterations": result.iterations, "init": str(args.init), "step0": args.step0},
        )
        if args.trace:
            export_trace(result, args.trace)
            run.manifest(args.trace)
    else:
        solution = dynamic_dp_solve(instance, args.policy_class, args.eps, adversary=args.adversary)
        report = ReportDocument(
            kind="solve-dp",
            value=solution.initial_value(instance.initial_state),
            policy=PolicyDocument.from_policy(solution.policy),
            details={
                "policy_class": solution.policy_class,
                "adversary": solution.adversary,
                "game_values_residual": solution.game_values_residual,
                "stage_values": [v.tolist() for v in solution.values],
            },
        )
        if args.values:
            export_dp_values(solution, args.values)
            run.manifest(args.values)

    write_document(report, args.out)
    run.manifest(args.out)
    OutputFormatter.format_report(report.model_copy(update={"details": {
        k: v for k, v in report.details.items() if k != "stage_values"
    }}), args.out)
    return EXIT_OK


def cmd_scan(run: Run) -> int:
    args = run.args
    rows = scan(args.step_pi1, args.step_inner, full_grid=args.full_grid)
    write_scan_csv(rows, args.out)
    run.manifest(args.out)
    best = max(rows, key=lambda r: r.f_closed)
    OutputFormatter.section_header("SCAN", icon='chart')
    OutputFormatter.key_value("Rows", len(rows))
    OutputFormatter.key_value("Max |gap|", max(abs(r.gap) for r in rows))
    OutputFormatter.key_value("Peak of f_closed", f"{best.f_closed:.6f} at pi1_0={best.pi1_0:.6f}")
    OutputFormatter.key_value("Written", args.out, color='gray')
    return EXIT_OK


def cmd_verify(run: Run) -> int:
    args = run.args
    runner = VerificationRunner(seed=args.seed if args.seed is not None else 0)
    if args.suite == "partition":
        summary = runner.run_partition_suite(n_max=args.n_max, trials=args.trials if args.trials is not None else 50)
    elif args.suite in ("local-min", "theorem2"):
        summary = runner.run_local_min_suite()
    else:
        summary = runner.run_dynamic_suite(tiny=args.tiny, trials=args.trials if args.trials is not None else 200)
    if args.out:
        write_document(summary, args.out)
        run.manifest(args.out)
    print(runner.generate_report(summary))
    return EXIT_OK if summary.passed else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_dp_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--instance', type=Path, required=True, help='Instance document')
    parser.add_argument('--class', dest='policy_class', choices=['md', 'mr'], default='mr',
                        help='Policy class for the stage games (default: mr)')
    parser.add_argument('--eps', type=float, default=Config.GAME_EPS,
                        help=f'Matrix-game tolerance (default: {Config.GAME_EPS})')
    parser.add_argument('--adversary', choices=['state', 'state_action'], default='state',
                        help='Kernel choice per state or per state-action pair (default: state)')
    parser.add_argument('--out', type=Path, required=True, help='Report document')
    parser.add_argument('--values', type=Path, default=None, help='Per-stage value CSV')
    parser.set_defaults(func=cmd_solve, mode='dp')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Finite-horizon robust MDP toolkit')
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help='Write an instance document')
    kinds = gen.add_subparsers(dest='kind', required=True)
    partition = kinds.add_parser('partition', help='Set-partition gadget')
    partition.add_argument('--weights', required=True, help='Comma-separated positive weights, e.g. 1,2,3')
    kinds.add_parser('local-min', aliases=['theorem2'], help='2x2 gadget with a sub-optimal strict local minimizer')
    matrix = kinds.add_parser('matrix', help='General matrix gadget')
    matrix.add_argument('--matrix', required=True, help='Rows separated by ";", entries by ","')
    rand = kinds.add_parser('random', help='Seeded random instance')
    rand.add_argument('--horizon', type=int, default=None)
    rand.add_argument('--max-states', type=int, default=3)
    rand.add_argument('--max-actions', type=int, default=3)
    rand.add_argument('--kernels', type=int, default=2)
    rand.add_argument('--nonnegative', action='store_true')
    rand.add_argument('--integer-costs', action='store_true')
    infinite = kinds.add_parser('infinite', help='Discounted embedding with an absorbing sink')
    infinite.add_argument('--base', type=Path, required=True, help='Finite-horizon instance document')
    infinite.add_argument('--gamma', type=float, required=True, help='Discount factor in (0, 1)')
    for sub in (partition, kinds.choices['local-min'], matrix, rand, infinite):
        sub.add_argument('--out', type=Path, required=True, help='Output document')
        sub.add_argument('--seed', type=int, default=None, help='Random seed')
    gen.set_defaults(func=cmd_gen)

    evaluate = commands.add_parser('eval', help='Robust value of a policy')
    evaluate.add_argument('--instance', type=Path, required=True)
    evaluate.add_argument('--policy', type=Path, required=True, help='Policy document (md or mr)')
    evaluate.add_argument('--out', type=Path, default=None)
    evaluate.set_defaults(func=cmd_eval)

    solve = commands.add_parser('solve', help='Static or dynamic solvers')
    modes = solve.add_subparsers(dest='mode', required=True)
    md = modes.add_parser('md', help='Exhaustive search over deterministic policies')
    md.add_argument('--instance', type=Path, required=True)
    md.add_argument('--out', type=Path, required=True)
    md.set_defaults(func=cmd_solve)
    mr = modes.add_parser('mr', help='Projected subgradient over randomized policies')
    mr.add_argument('--instance', type=Path, required=True)
    mr.add_argument('--init', default='uniform',
                    help='uniform, near-trap, random or a policy document path (default: uniform)')
    mr.add_argument('--seed', type=int, default=None, help='Required by near-trap and random inits')
    mr.add_argument('--step0', type=float, default=Config.SUBGRADIENT_STEP0)
    mr.add_argument('--iters', type=int, default=Config.SUBGRADIENT_ITERS)
    mr.add_argument('--out', type=Path, required=True)
    mr.add_argument('--trace', type=Path, default=None, help='Iteration trace CSV')
    mr.set_defaults(func=cmd_solve)
    _add_dp_arguments(modes.add_parser('dp', help='Dynamic formulation by backward induction'))
    _add_dp_arguments(commands.add_parser('dp', help='Alias of `solve dp`'))

    scan_parser = commands.add_parser('scan', help='Landscape of the local-minimizer gadget')
    scan_parser.add_argument('--step-pi1', type=float, default=0.01)
    scan_parser.add_argument('--step-inner', type=float, default=0.01)
    scan_parser.add_argument('--full-grid', action='store_true', help='Scan all (a, b) pairs, not just a = b')
    scan_parser.add_argument('--out', type=Path, required=True)
    scan_parser.set_defaults(func=cmd_scan)

    verify = commands.add_parser('verify', help='Run an invariant suite')
    verify.add_argument('suite', choices=['partition', 'local-min', 'theorem2', 'dynamic'])
    verify.add_argument('--n-max', type=int, default=10)
    verify.add_argument('--trials', type=int, default=None)
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--tiny', action='store_true')
    verify.add_argument('--out', type=Path, default=None, help='Summary document')
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging()
    run = Run(args)
    try:
        return args.func(run)
    except SizeGuardError as e:
        logger.error(f"Size guard: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_SIZE_GUARD
    except (InvalidInputError, PreconditionError, NumericalError, ValidationError, FileNotFoundError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
