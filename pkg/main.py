#!/usr/bin/env python3
"""
Bounds-Constrained Bernstein FEM - CLI Entry Point
"""

import argparse
import logging
import sys

from dotenv import load_dotenv
from pydantic import ValidationError

from src.config import config
from src.experiments.schema import Experiment, RunConfig, RunSummary, SolverKind
from src.solvers.time_integrator import TimeScheme

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2


def print_summary(summary: RunSummary):
    """Print one run summary as a short table."""
    print("\n" + "=" * 50)
    print(f"{summary.experiment.value.upper()}  k={summary.degree}  n={summary.n}")
    print("=" * 50)
    for stats in summary.fields:
        print(f"  {stats.name:<12} min={stats.min: .6e}  max={stats.max: .6e}  dofs={stats.ndofs}")
    for key, value in summary.metrics.items():
        print(f"  {key}: {value}")
    for note in summary.notes:
        print(f"  # {note}")
    if not summary.converged:
        print("[!] VI solver did not converge")


def run_mms(run: RunConfig) -> int:
    from src.experiments.runner import run_mms_study

    print(f"[*] Manufactured-solution study: degrees {run.degrees}, N in {run.ns}")
    result = run_mms_study(run.degrees, run.ns, run.out_dir, run.tol, run.jobs, run.parallel_assembly)
    for k, rows in result.tables.items():
        print(f"\n[*] k={k}")
        print("     N        ul2          cl2          uh1          ch1")
        for row in rows:
            print(f"  {row.N:4d}  {row.ul2:.4e}  {row.cl2:.4e}  {row.uh1:.4e}  {row.ch1:.4e}")
    for path in result.files:
        print(f"[*] Wrote {path}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def run_rough(run: RunConfig) -> int:
    from src.experiments.runner import run_rough_forcing

    code = EXIT_OK
    for k in run.degrees:
        summary = run_rough_forcing(k, run.ns[0], run.out_dir, run.tol, run.parallel_assembly, run.solver)
        print_summary(summary)
        code = max(code, EXIT_OK if summary.converged else EXIT_NOT_CONVERGED)
    return code


def run_supg(run: RunConfig) -> int:
    from src.experiments.runner import run_supg_benchmark

    code = EXIT_OK
    for k in run.degrees:
        summary = run_supg_benchmark(k, run.refine, run.out_dir, run.tol, run.parallel_assembly, run.solver)
        print_summary(summary)
        code = max(code, EXIT_OK if summary.converged else EXIT_NOT_CONVERGED)
    return code


def run_cone(run: RunConfig) -> int:
    from src.experiments.runner import run_rotating_cone

    code = EXIT_OK
    for k in run.degrees:
        summary = run_rotating_cone(
            k, run.ns[0], run.out_dir, run.tol, TimeScheme(run.scheme), run.solver, run.snapshots,
            parallel=run.parallel_assembly,
        )
        print_summary(summary)
        code = max(code, EXIT_OK if summary.converged else EXIT_NOT_CONVERGED)
    return code


def run_approx(run: RunConfig) -> int:
    from src.experiments.approx_check import run_approx_check

    result = run_approx_check(trials=run.trials, seed=run.seed)
    print(result.model_dump_json(indent=2))
    if not result.passed:
        print("[!] Restricted-range property suite reported failures")
        return EXIT_NOT_CONVERGED
    print("[*] All restricted-range properties hold")
    return EXIT_OK


RUNNERS = {
    Experiment.MMS: run_mms,
    Experiment.ROUGH: run_rough,
    Experiment.SUPG: run_supg,
    Experiment.CONE: run_cone,
    Experiment.APPROX_CHECK: run_approx,
}

DEFAULT_NS = {
    Experiment.MMS: [4, 8, 16, 32, 64],
    Experiment.ROUGH: [16],
    Experiment.SUPG: [72],
    Experiment.CONE: [32],
    Experiment.APPROX_CHECK: [4],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Bounds-constrained Bernstein finite element studies")
    parser.add_argument("experiment", choices=[e.value for e in Experiment], help="Study to run")
    parser.add_argument("--degree", type=int, nargs="+", help="Polynomial degree(s) k in {1,2,3}")
    parser.add_argument("--n", type=int, nargs="+", help="Cells per side (list for mms)")
    parser.add_argument("--solver", choices=[s.value for s in SolverKind], default="both",
                        help="Solve the variational problem, the inequality, or both")
    parser.add_argument("--tol", type=float, default=config.VI_TOL, help="VI absolute stopping tolerance")
    parser.add_argument("--out", type=str, default=config.OUTPUT_DIR, help="Output directory")
    parser.add_argument("--snapshots", type=int, default=0, help="Write a VTK snapshot every K steps (cone)")
    parser.add_argument("--parallel-assembly", action="store_true", help="Assemble cell blocks on threads")
    parser.add_argument("--refine", type=int, default=0, choices=[0, 1], help="Refinement level (supg)")
    parser.add_argument("--scheme", choices=["midpoint", "euler"], default="midpoint", help="Time scheme (cone)")
    parser.add_argument("--jobs", type=int, default=1, help="Concurrent (degree, N) runs (mms)")
    parser.add_argument("--trials", type=int, default=100, help="Random pairs (approx-check)")
    parser.add_argument("--seed", type=int, default=0, help="Random seed (approx-check)")
    return parser


def main(argv=None) -> int:
    load_dotenv()

    problems = config.validate()
    if problems:
        for problem in problems:
            print(f"[!] Configuration problem: {problem}")
        return EXIT_CONFIG

    logging.basicConfig(level=getattr(logging, config.LOG_LEVEL, logging.INFO), format="%(message)s")

    args = build_parser().parse_args(argv)
    experiment = Experiment(args.experiment)
    try:
        run = RunConfig(
            experiment=experiment,
            degrees=args.degree or ([2] if experiment == Experiment.ROUGH else [1, 2, 3]),
            ns=args.n or DEFAULT_NS[experiment],
            solver=args.solver,
            tol=args.tol,
            out_dir=args.out,
            snapshots=args.snapshots,
            parallel_assembly=args.parallel_assembly,
            refine=args.refine,
            scheme=args.scheme,
            jobs=args.jobs,
            trials=args.trials,
            seed=args.seed,
        )
    except ValidationError as e:
        print(f"[!] Invalid arguments: {e}")
        return EXIT_CONFIG

    try:
        return RUNNERS[experiment](run)
    except ValueError as e:
        print(f"[!] {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
