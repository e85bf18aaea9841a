"""One-parameter families of contact forms and the three-stage concatenation
joining two bundle contact forms built over isotopic base forms.

Families carry a reserved formal parameter (default ``t``) inside their
coefficient expressions; instantiation substitutes a numeric value and
simplifies.  Certification samples finitely many parameter values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .charts import Chart
from .expressions import Const, Expr, Var, as_expr, div
from .forms import DifferentialForm
from .bundles import (
    FibrationSpec,
    BundleContactForm,
    K_VARIABLE,
    _build_checks,
    _run_checks,
    find_admissible_K,
)
from .verify import (
    DEFAULT_THRESHOLD,
    PositivityReport,
    SampleGrid,
    combine_reports,
    verify_contact,
)

T_VARIABLE = "t"
S_VARIABLE = "_s"  # internal branch parameter; must not collide with coordinates
DEFAULT_T_SAMPLES = 101


@dataclass(frozen=True)
class ContactFamily:
    """A t-family of 1-forms on one chart, t in [0, 1]."""

    chart: Chart
    form: DifferentialForm  # coefficients may contain the parameter variable
    label: str = ""
    t_var: str = T_VARIABLE

    def __post_init__(self):
        if self.form.degree != 1:
            raise ValueError("contact families are families of 1-forms")
        if self.form.chart.coords != self.chart.coords:
            raise ValueError("family form must live on the family chart")
        if self.t_var in self.chart.coords:
            raise ValueError(
                f"family parameter {self.t_var!r} collides with a chart coordinate"
            )

    def form_at(self, t: float) -> DifferentialForm:
        subs = {self.t_var: Const(float(t))}
        return self.form.map_coeffs(lambda c: c.substitute(subs).simplified())

    def scaled(self, factor: Expr, label: str = "") -> "ContactFamily":
        return ContactFamily(self.chart, self.form * factor, label or self.label, self.t_var)


def constant_family(form: DifferentialForm, label: str = "") -> ContactFamily:
    return ContactFamily(form.chart, form, label)


def normalize_family(
    alpha_family: ContactFamily,
    h: Expr,
    grid: SampleGrid,
) -> ContactFamily:
    """Rescale a family by (1 - t + t/h) so the endpoint at t=1 becomes the
    target form while every kernel is preserved.

    ``h`` is the positive ratio between the family's t=1 form and the target;
    positivity is checked on the grid.
    """
    vals = np.asarray(h.evaluate(grid.env()), dtype=float)
    if vals.size and float(np.min(vals)) <= 0.0:
        raise ValueError(
            f"conformal factor is not positive on the grid (min {float(np.min(vals)):.3e})"
        )
    t = Var(alpha_family.t_var)
    factor = 1 - t + div(t, h)
    return ContactFamily(
        alpha_family.chart,
        alpha_family.form * factor,
        label=alpha_family.label + ":normalized",
        t_var=alpha_family.t_var,
    )


def verify_family_contact(
    family: ContactFamily,
    grid: SampleGrid,
    t_samples: int = DEFAULT_T_SAMPLES,
    threshold: float = DEFAULT_THRESHOLD,
) -> PositivityReport:
    """Run the contact scan at uniformly spaced parameter values.

    The combined report's argmin point is (t, point); a failure names the
    failing t in its label.
    """
    if t_samples < 2:
        raise ValueError("t_samples must be at least 2")
    reports = []
    for t in np.linspace(0.0, 1.0, t_samples):
        rep = verify_contact(family.form_at(float(t)), grid, threshold, label=f"t={t:.6f}")
        rep = PositivityReport(
            min_value=rep.min_value,
            argmin_point=(float(t),) + rep.argmin_point,
            grid=rep.grid,
            threshold=rep.threshold,
            passed=rep.passed,
            label=rep.label,
            raw_min=rep.raw_min,
            scale=rep.scale,
            details=rep.details,
        )
        reports.append(rep)
    combined = combine_reports(reports, label=family.label or "family")
    failing = [r.label for r in reports if not r.passed]
    if failing:
        combined.details["failing_t"] = failing[:10]
    combined.details["t_samples"] = t_samples
    return combined


# -- bundle-level families -----------------------------------------------------


@dataclass(frozen=True)
class BundleFamily:
    """A t-family of bundle contact forms, stored per region.

    ``regions`` maps a region label to (chart, 1-form) where coefficients
    contain the parameter variable; Lambda-style concatenations carry three
    branches with their own parameter ranges.
    """

    spec: FibrationSpec
    label: str
    branch_forms: Tuple[Dict[str, Tuple[Chart, DifferentialForm]], ...]
    branch_of_t: Callable[[float], Tuple[int, float]]
    t_var: str = S_VARIABLE

    def regions_at(self, t: float) -> Dict[str, Tuple[Chart, DifferentialForm]]:
        k, s = self.branch_of_t(float(t))
        subs = {self.t_var: Const(float(s))}
        out = {}
        for label, (chart, form) in self.branch_forms[k].items():
            out[label] = (chart, form.map_coeffs(lambda c: c.substitute(subs).simplified()))
        return out


def _mu_by_piece(spec: FibrationSpec, mu_form: DifferentialForm) -> Dict[str, DifferentialForm]:
    """Reissue a base form (given on shared base coordinates) on every piece
    chart."""
    out = {}
    for p in spec.pieces:
        if p.chart.coords != mu_form.chart.coords:
            raise ValueError(
                f"piece {p.name!r} uses coordinates {p.chart.coords}, "
                f"family uses {mu_form.chart.coords}"
            )
        out[p.name] = DifferentialForm(p.chart, 1, mu_form.coeffs)
    return out


def _bundle_regions(spec: FibrationSpec, K: Expr, mu_by_piece) -> Dict[str, Tuple[Chart, DifferentialForm]]:
    from .bundles import _assemble

    piece_forms, piece_charts, collar_forms = _assemble(spec, K, mu_by_piece)
    regions: Dict[str, Tuple[Chart, DifferentialForm]] = {}
    for name, form in piece_forms.items():
        regions[f"piece:{name}"] = (piece_charts[name], form)
    for name, cf in collar_forms.items():
        if cf.collar.seam:
            continue
        regions[f"collar:{name}:inner"] = (cf.chart, cf.inner)
        regions[f"collar:{name}:outer"] = (cf.chart, cf.outer)
    return regions


def family_K_upper_bound(
    spec: FibrationSpec,
    mu_family: ContactFamily,
    t_samples: int = 21,
    resolution: Optional[int] = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> float:
    """Upper bound for the admissible constants along the family: run the
    K-search at each sampled t and take the max."""
    worst = 1.0
    for t in np.linspace(0.0, 1.0, t_samples):
        mu_t = mu_family.form_at(float(t))
        K_t, _ = find_admissible_K(
            spec, resolution=resolution, threshold=threshold,
            mu_by_piece=_mu_by_piece(spec, mu_t),
        )
        worst = max(worst, K_t)
    return worst


def concatenate_lambda(
    mu_family: ContactFamily,
    spec: FibrationSpec,
    K0: float,
    K1: float,
    K: float,
) -> BundleFamily:
    """The three-stage family joining the bundle forms at the family's ends.

    Stage 1 ramps K0 up to K over the fixed t=0 base form, stage 2 moves the
    base form at constant K, stage 3 ramps K down to K1 over the t=1 form.
    Endpoints agree with the bundles assembled at K0 and K1.
    """
    if K < max(K0, K1):
        raise ValueError(f"K={K} must dominate K0={K0} and K1={K1}")
    for p in spec.pieces:
        if S_VARIABLE in p.chart.coords or S_VARIABLE in spec.fiber.coords:
            raise ValueError(f"coordinate name {S_VARIABLE!r} is reserved")
    s = Var(S_VARIABLE)
    mu_s = mu_family.form.map_coeffs(
        lambda c: c.substitute({mu_family.t_var: s})
    )
    mu0 = mu_family.form_at(0.0)
    mu1 = mu_family.form_at(1.0)
    branch1 = _bundle_regions(spec, (1 - s) * K0 + s * K, _mu_by_piece(spec, mu0))
    branch2 = _bundle_regions(spec, as_expr(float(K)), _mu_by_piece(spec, mu_s))
    branch3 = _bundle_regions(spec, (1 - s) * K + s * K1, _mu_by_piece(spec, mu1))

    def branch_of_t(t: float) -> Tuple[int, float]:
        if t <= 1.0 / 3.0:
            return 0, 3.0 * t
        if t <= 2.0 / 3.0:
            return 1, 3.0 * t - 1.0
        return 2, 3.0 * t - 2.0

    return BundleFamily(
        spec=spec,
        label=f"Lambda[{mu_family.label}]",
        branch_forms=(branch1, branch2, branch3),
        branch_of_t=branch_of_t,
    )


def verify_bundle_family_contact(
    family: BundleFamily,
    t_samples: int = DEFAULT_T_SAMPLES,
    resolution: Optional[int] = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> PositivityReport:
    """Contact scan of a bundle family at sampled t over every region."""
    reports = []
    for t in np.linspace(0.0, 1.0, t_samples):
        regions = family.regions_at(float(t))
        sub = []
        for label, (chart, form) in regions.items():
            grid = SampleGrid.default(chart, resolution, family.spec.fiber_exclusions)
            rep = verify_contact(form, grid, threshold, label=f"t={t:.6f}:{label}")
            sub.append(rep)
        combined = combine_reports(sub, label=f"t={t:.6f}")
        reports.append(
            PositivityReport(
                min_value=combined.min_value,
                argmin_point=(float(t),) + combined.argmin_point,
                grid=combined.grid,
                threshold=combined.threshold,
                passed=combined.passed,
                label=combined.label,
                raw_min=combined.raw_min,
                scale=combined.scale,
                details=combined.details,
            )
        )
    out = combine_reports(reports, label=family.label)
    failing = [r.label for r in reports if not r.passed]
    if failing:
        out.details["failing_t"] = failing[:10]
    out.details["t_samples"] = t_samples
    return out


def family_region_residual(
    a: Mapping[str, Tuple[Chart, DifferentialForm]],
    b: Mapping[str, Tuple[Chart, DifferentialForm]],
    resolution: Optional[int] = None,
) -> float:
    """Worst coefficient mismatch between two per-region form assignments."""
    if set(a) != set(b):
        raise ValueError(f"region sets differ: {sorted(a)} vs {sorted(b)}")
    worst = 0.0
    for label in a:
        chart, fa = a[label]
        _, fb = b[label]
        grid = SampleGrid.default(chart, resolution or 7)
        env = grid.env()
        diff = (fa - fb).simplified()
        for c in diff.coeffs.values():
            vals = np.asarray(c.evaluate(env), dtype=float)
            if vals.size:
                worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def bundle_regions_of(bundle: BundleContactForm) -> Dict[str, Tuple[Chart, DifferentialForm]]:
    """The per-region forms of an assembled bundle, keyed like BundleFamily
    regions (for endpoint comparisons)."""
    regions: Dict[str, Tuple[Chart, DifferentialForm]] = {}
    for name, form in bundle.piece_forms.items():
        regions[f"piece:{name}"] = (bundle.piece_charts[name], form)
    for name, cf in bundle.collar_forms.items():
        if cf.collar.seam:
            continue
        regions[f"collar:{name}:inner"] = (cf.chart, cf.inner)
        regions[f"collar:{name}:outer"] = (cf.chart, cf.outer)
    return regions


def seam_residuals(family: BundleFamily, resolution: Optional[int] = None) -> Tuple[float, float]:
    """Coefficient residuals at the two concatenation seams t=1/3 and t=2/3,
    each computed from both adjacent branch formulas."""
    def regions_of_branch(k: int, s: float):
        subs = {family.t_var: Const(float(s))}
        return {
            label: (chart, form.map_coeffs(lambda c: c.substitute(subs).simplified()))
            for label, (chart, form) in family.branch_forms[k].items()
        }

    first = family_region_residual(regions_of_branch(0, 1.0), regions_of_branch(1, 0.0), resolution)
    second = family_region_residual(regions_of_branch(1, 1.0), regions_of_branch(2, 0.0), resolution)
    return first, second
