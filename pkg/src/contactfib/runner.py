"""Task execution over a scenario document and machine-readable run reports.

Tasks run in order; a failing or erroring task never halts the remaining
ones.  Reports serialize to JSON with floats written at 17 significant
digits, so they round-trip losslessly and repeated runs are byte-identical
except for wall times.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .bundles import (
    DominanceNotReachedError,
    assemble_sigma,
    find_admissible_K,
    horizontal_boundary_residual,
    verify_bundle_contact,
    verify_compatibility,
)
from .families import (
    concatenate_lambda,
    family_K_upper_bound,
    seam_residuals,
    verify_bundle_family_contact,
    verify_family_contact,
)
from .scenario import ScenarioDocument
from .sums import (
    assemble_summed_fibration,
    fixed_sphere_residual,
    involution_residual,
    norm_preservation_residual,
    orientation_determinants,
    summed_sigma_forms,
    verify_gluing_pullback,
)
from .verify import (
    DEFAULT_THRESHOLD,
    SampleGrid,
    exact_symplectomorphism_potential,
    verify_contact,
    verify_exact_symplectic,
)


@dataclass
class RunOptions:
    resolution: Optional[int] = None
    threshold: Optional[float] = None
    t_samples: Optional[int] = None
    seed: Optional[int] = None


@dataclass
class TaskResult:
    index: int
    task: str
    label: str
    status: str  # passed | failed | error
    details: dict
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "task": self.task,
            "label": self.label,
            "status": self.status,
            "details": self.details,
            "wall_time": self.wall_time,
        }


@dataclass
class RunReport:
    title: str
    digest: str
    seed: int
    tool_version: str
    tasks: List[TaskResult] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(t.status == "passed" for t in self.tasks)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "input_digest": self.digest,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "all_passed": self.all_passed,
            "tasks": [t.to_dict() for t in self.tasks],
        }


def _json_write(obj, out: List[str]) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k)))
            out.append(":")
            _json_write(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _json_write(v, out)
        out.append("]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        if v != v or v in (float("inf"), float("-inf")):
            out.append(json.dumps(str(v)))
        else:
            out.append(format(v, ".17g"))
    else:
        out.append(json.dumps(str(obj)))


def report_text(report: RunReport) -> str:
    out: List[str] = []
    _json_write(report.to_dict(), out)
    return "".join(out) + "\n"


def emit_report(report: RunReport, path: str | Path) -> None:
    """Write the structured report; numbers carry 17 significant digits."""
    Path(path).write_text(report_text(report), encoding="utf-8")


# -- task execution ------------------------------------------------------------


def run_suite(doc: ScenarioDocument, options: Optional[RunOptions] = None) -> RunReport:
    options = options or RunOptions()
    seed = options.seed if options.seed is not None else doc.seed
    report = RunReport(
        title=doc.title,
        digest=doc.digest,
        seed=seed,
        tool_version=__version__,
    )
    for index, task in enumerate(doc.run):
        kind = task["task"]
        label = task.get("label", f"{kind}[{index}]")
        start = time.perf_counter()
        try:
            runner = _TASKS[kind]
            details, passed = runner(doc, task, options, seed)
            status = "passed" if passed else "failed"
        except Exception as e:  # recorded, never fatal to the suite
            details = {"error": f"{type(e).__name__}: {e}"}
            status = "error"
        report.tasks.append(
            TaskResult(
                index=index,
                task=kind,
                label=label,
                status=status,
                details=details,
                wall_time=time.perf_counter() - start,
            )
        )
    return report


def _threshold(task: dict, options: RunOptions) -> float:
    if options.threshold is not None:
        return options.threshold
    return float(task.get("threshold", DEFAULT_THRESHOLD))


def _resolution(task: dict, options: RunOptions) -> Optional[int]:
    if options.resolution is not None:
        return options.resolution
    value = task.get("resolution")
    return int(value) if value is not None else None


def _grid_for(doc: ScenarioDocument, task: dict, chart, options: RunOptions) -> SampleGrid:
    from .verify import Exclusion

    exclusions = tuple(
        Exclusion(str(c), float(lo), float(hi)) for c, lo, hi in task.get("exclusions", ())
    )
    return SampleGrid.default(chart, _resolution(task, options), exclusions)


def _expected(task: dict, passed: bool) -> bool:
    if task.get("expect", "pass") == "fail":
        return not passed
    return passed


def _run_verify_contact(doc, task, options, seed):
    form = doc.forms[task["form"]]
    grid = _grid_for(doc, task, form.chart, options)
    rep = verify_contact(form, grid, _threshold(task, options))
    return {"report": rep.to_dict(), "expect": task.get("expect", "pass")}, _expected(task, rep.passed)


def _run_verify_exact_symplectic(doc, task, options, seed):
    from .scenario import _Builder

    form = doc.forms[task["form"]]
    grid = _grid_for(doc, task, form.chart, options)
    builder = _Builder(doc.charts)
    outward = builder._boundaries(task.get("outward"))
    rep = verify_exact_symplectic(
        form, grid, outward=outward or None, threshold=_threshold(task, options), seed=seed
    )
    return {"report": rep.to_dict(), "expect": task.get("expect", "pass")}, _expected(task, rep.passed)


def _run_potential(doc, task, options, seed):
    phi = doc.maps[task["map"]]
    beta = doc.forms[task["form"]]
    grid = _grid_for(doc, task, beta.chart, options)
    basepoint = task.get("basepoint")
    result = exact_symplectomorphism_potential(
        phi, beta, grid, basepoint=basepoint, seed=seed
    )
    details = {
        "max_closedness_residual": result.max_closedness_residual,
        "max_path_discrepancy": result.max_path_discrepancy,
    }
    return details, True


def _run_assemble(doc, task, options, seed):
    spec = doc.fibrations[task["fibration"]]
    K = float(task.get("K", 1.0))
    bundle = assemble_sigma(spec, K)
    rep = verify_bundle_contact(bundle, _resolution(task, options), _threshold(task, options))
    details = {"K": K, "report": rep.to_dict()}
    passed = rep.passed
    if spec.horizontal_boundary_trivial:
        residual = horizontal_boundary_residual(bundle, _resolution(task, options))
        tol = float(task.get("boundary_tol", 1e-12))
        details["horizontal_boundary_residual"] = residual
        passed = passed and residual < tol
    return details, passed


def _run_find_K(doc, task, options, seed):
    spec = doc.fibrations[task["fibration"]]
    resolution = _resolution(task, options)
    threshold = _threshold(task, options)
    details: Dict[str, object] = {}
    if task.get("validate", True):
        spec.validate(resolution, threshold)
        details["input_checks"] = "passed"
    try:
        K, rep = find_admissible_K(spec, resolution, threshold)
    except DominanceNotReachedError as e:
        return {"error": str(e), **details}, bool(task.get("expect_dominance_failure"))
    if task.get("expect_dominance_failure"):
        return {"K": K, **details, "note": "expected dominance failure did not occur"}, False
    details.update({"K": K, "report": rep.to_dict()})
    passed = rep.passed
    K_max = task.get("K_max")
    if K_max is not None:
        details["K_max"] = float(K_max)
        passed = passed and K <= float(K_max)
    if task.get("compatibility", False):
        bundle = assemble_sigma(spec, K)
        comp = verify_compatibility(
            bundle,
            samples=int(task.get("slices", 25)),
            resolution=resolution,
            threshold=threshold,
            seed=seed,
        )
        details["compatibility"] = comp.to_dict()
        passed = passed and comp.passed
    if spec.horizontal_boundary_trivial:
        bundle = assemble_sigma(spec, K)
        residual = horizontal_boundary_residual(bundle, resolution)
        tol = float(task.get("boundary_tol", 1e-12))
        details["horizontal_boundary_residual"] = residual
        passed = passed and residual < tol
    return details, passed


def _run_family(doc, task, options, seed):
    family = doc.families[task["family"]]
    t_samples = options.t_samples or int(task.get("t_samples", 101))
    threshold = _threshold(task, options)
    resolution = _resolution(task, options)
    if "fibration" not in task:
        grid = _grid_for(doc, task, family.chart, options)
        rep = verify_family_contact(family, grid, t_samples, threshold)
        return {"report": rep.to_dict()}, rep.passed
    spec = doc.fibrations[task["fibration"]]
    from .families import _mu_by_piece

    K0, _ = find_admissible_K(
        spec, resolution, threshold, _mu_by_piece(spec, family.form_at(0.0))
    )
    K1, _ = find_admissible_K(
        spec, resolution, threshold, _mu_by_piece(spec, family.form_at(1.0))
    )
    K_upp = family_K_upper_bound(
        spec, family, int(task.get("kupp_samples", 11)), resolution, threshold
    )
    K = max(K0, K1, K_upp)
    lam = concatenate_lambda(family, spec, K0, K1, K)
    rep = verify_bundle_family_contact(lam, t_samples, resolution, threshold)
    seam1, seam2 = seam_residuals(lam, resolution)
    seam_tol = float(task.get("seam_tol", 1e-12))
    details = {
        "K0": K0,
        "K1": K1,
        "K_upp": K_upp,
        "K": K,
        "report": rep.to_dict(),
        "seam_residuals": [seam1, seam2],
    }
    passed = rep.passed and seam1 < seam_tol and seam2 < seam_tol
    return details, passed


def _run_fiber_sum(doc, task, options, seed):
    spec = doc.sums[task["sum"]]
    resolution = _resolution(task, options)
    threshold = _threshold(task, options)
    maps = spec.gluing_maps()
    K = float(task.get("K", 1.0))
    sigma_left, sigma_right = summed_sigma_forms(spec, K)
    tol = float(task.get("gluing_tol", 1e-9))
    rep = verify_gluing_pullback(spec, sigma_left, sigma_right, maps, resolution, tol)
    dets = orientation_determinants(maps, spec.left_darboux, seed=seed)
    details = {
        "gluing": rep.to_dict(),
        "norm_preservation": norm_preservation_residual(maps, spec.left_darboux, seed=seed),
        "orientation_det_max": float(dets.max()),
        "fixed_sphere_residual": fixed_sphere_residual(maps, spec.left_darboux, seed=seed),
        "involution_residual": involution_residual(spec, maps, seed=seed),
    }
    if task.get("expect_gluing_failure", False):
        ok = (not rep.passed) and rep.details["relative_residual"] > float(
            task.get("failure_floor", 1.0)
        )
        details["expected"] = "gluing failure"
        return details, ok
    structural_ok = (
        rep.passed
        and details["norm_preservation"] < 1e-12
        and details["orientation_det_max"] < 0.0
        and details["fixed_sphere_residual"] < 1e-12
        and details["involution_residual"] < 1e-12
    )
    if not structural_ok:
        return details, False
    summed = assemble_summed_fibration(spec, maps, K, resolution, tol)
    K_sum, k_rep = find_admissible_K(summed, resolution, threshold)
    details["summed"] = {"K": K_sum, "report": k_rep.to_dict()}
    passed = k_rep.passed and K_sum <= K * (1.0 + 1e-9)
    if task.get("compatibility", False):
        comp = verify_compatibility(
            assemble_sigma(summed, K_sum),
            samples=int(task.get("slices", 25)),
            resolution=resolution,
            threshold=threshold,
            seed=seed,
        )
        details["compatibility"] = comp.to_dict()
        passed = passed and comp.passed
    return details, passed


_TASKS = {
    "verify_contact": _run_verify_contact,
    "verify_exact_symplectic": _run_verify_exact_symplectic,
    "potential": _run_potential,
    "assemble": _run_assemble,
    "find_K": _run_find_K,
    "family": _run_family,
    "fiber_sum": _run_fiber_sum,
}

TASK_KINDS = tuple(_TASKS)
