"""Command-line entry point: run scenario documents and emit reports."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .runner import RunOptions, emit_report, report_text, run_suite
from .scenario import ScenarioError, builtin_scenarios, load_scenario

_EXPLANATIONS = {
    "verify_contact": (
        "Scans the volume density of a 1-form (the form wedged with the n-th\n"
        "power of its exterior derivative) over a sample grid and certifies a\n"
        "strict positive minimum after scale normalization."
    ),
    "verify_exact_symplectic": (
        "Checks that the exterior derivative of the fiber 1-form is\n"
        "nondegenerate on the grid and, where a boundary is declared, that the\n"
        "dual (Liouville) vector field points strictly outward along it."
    ),
    "potential": (
        "Given a map and a fiber form, verifies that the pullback differs from\n"
        "the form by an exact correction: the difference is closed on the grid\n"
        "and integrates path-independently, producing the potential by line\n"
        "integration from a basepoint."
    ),
    "assemble": (
        "Builds the bundle 1-form at a fixed scale constant K: K times the\n"
        "base form plus the fiber form, with the transition potential patched\n"
        "in across each collar through a smooth cut-off. Verifies contactness\n"
        "over every piece and collar band."
    ),
    "find_K": (
        "Searches for an admissible scale constant: starting at K=1 and\n"
        "doubling until the assembled bundle form is contact everywhere, then\n"
        "refining down toward the failure boundary. Optionally certifies that\n"
        "fiber restrictions stay exact symplectic on sampled slices."
    ),
    "family": (
        "Certifies a one-parameter family of contact forms at sampled\n"
        "parameter values. With a fibration attached, builds the three-stage\n"
        "concatenation joining the two endpoint bundle forms (ramp K up, move\n"
        "the base form, ramp K down) and checks contactness across the family\n"
        "plus exact agreement at the seams."
    ),
    "fiber_sum": (
        "Glues two fibrations along fibers over base points in radial normal\n"
        "form: checks the bundle identification is norm-preserving and\n"
        "orientation-reversing fiberwise, the annulus identification fixes the\n"
        "gluing sphere, the pulled-back bundle form matches on the sphere, and\n"
        "the assembled sum passes the full construction pipeline."
    ),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="contactfib",
        description="Verification pipeline for contact structures on exact symplectic fibrations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("verify", help="run a scenario document")
    run.add_argument("scenario", help="path to a .scn file or a builtin name")
    run.add_argument("--grid", type=int, default=None, help="per-axis grid resolution")
    run.add_argument("--threshold", type=float, default=None, help="positivity threshold")
    run.add_argument("--t-samples", type=int, default=None, help="family parameter samples")
    run.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    run.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    run.add_argument("--quiet", action="store_true", help="suppress the per-task lines")

    sub.add_parser("list-builtins", help="list packaged scenario documents")

    explain = sub.add_parser("explain", help="describe what a task kind verifies")
    explain.add_argument("task", choices=sorted(_EXPLANATIONS))

    args = parser.parse_args(argv)

    if args.command == "list-builtins":
        for name in builtin_scenarios():
            print(name)
        return 0

    if args.command == "explain":
        print(_EXPLANATIONS[args.task])
        return 0

    try:
        doc = load_scenario(args.scenario)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    options = RunOptions(
        resolution=args.grid,
        threshold=args.threshold,
        t_samples=args.t_samples,
        seed=args.seed,
    )
    report = run_suite(doc, options)
    if not args.quiet:
        for task in report.tasks:
            print(f"[{task.status:>6}] {task.task}: {task.label} ({task.wall_time:.2f}s)")
        print(f"{'all passed' if report.all_passed else 'FAILURES'}: {doc.title}")
    if args.out is not None:
        emit_report(report, args.out)
        if not args.quiet:
            print(f"report written to {args.out}")
    elif args.quiet:
        sys.stdout.write(report_text(report))
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
