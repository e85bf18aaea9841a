"""Bundle contact forms on partitioned contact symplectic fibrations.

A fibration is presented pre-partitioned: base pieces (charts carrying the
base contact form), collar tubes between them (charts with a transverse
coordinate, embeddings into the neighboring pieces, and a transition
potential), and one exact symplectic fiber model.  The bundle form is
K*mu + beta away from collars and K*mu + beta + f*dPsi across them; the
admissible K is found by doubling and then binary refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .charts import Chart, product_chart
from .expressions import Expr, Var, as_expr, bump, div, mul
from .forms import (
    DifferentialForm,
    SmoothMap,
    differential,
    exterior_derivative,
    inject_form,
    pullback,
    restrict_to_fiber,
)
from .verify import (
    DEFAULT_THRESHOLD,
    Exclusion,
    OutwardBoundary,
    PositivityReport,
    SampleGrid,
    combine_reports,
    contact_density,
    verify_contact,
    verify_exact_symplectic,
)

K_VARIABLE = "_K"
K_LIMIT = 2.0 ** 40
REFINE_FACTOR = 1.1


class DominanceNotReachedError(RuntimeError):
    pass


# -- cut-off profiles -----------------------------------------------------------


@dataclass(frozen=True)
class CutoffProfile:
    """A smooth cut-off on [-epsilon, epsilon].

    two_sided: identically 1 on (-delta, delta), identically 0 near both ends.
    one_sided: identically 1 on (-delta, epsilon], identically 0 near -epsilon.
    """

    epsilon: float
    delta: float
    kind: str = "two_sided"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < self.epsilon:
            raise ValueError("delta must lie in (0, epsilon)")
        if self.kind not in ("two_sided", "one_sided"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")


def smooth_step(t: Expr) -> Expr:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly monotone between."""
    b = bump(t)
    return div(b, b + bump(1 - t))


def make_cutoff(profile: CutoffProfile, var: str = "x") -> Expr:
    """Build the cut-off expression for a profile in the named variable.

    The plateaus are exact: the guarded bump primitive vanishes identically
    outside its support, so the expression is 0.0 (not merely tiny) on the
    outer bands and exactly 1 on the inner band.
    """
    x = Var(var)
    eps, delta = profile.epsilon, profile.delta
    margin = (eps - delta) / 4.0
    if profile.kind == "two_sided":
        a = eps - margin
        return smooth_step(div(as_expr(a * a) - x * x, as_expr(a * a - delta * delta)))
    return smooth_step(div(x + as_expr(eps - margin), as_expr(eps - delta - margin)))


# -- fibration specifications ----------------------------------------------------


@dataclass(frozen=True)
class BasePiece:
    """A base chart carrying the base contact form, plus an optional region
    predicate (> 0) for non-box pieces."""

    name: str
    chart: Chart
    mu: DifferentialForm
    keep: Optional[Expr] = None
    exclusions: Tuple[Exclusion, ...] = ()


@dataclass(frozen=True)
class Collar:
    """A tube H x [-epsilon, epsilon] between base pieces.

    ``transverse`` names the tube coordinate; its positive side embeds into
    ``inner_piece`` (the already-built union) and the negative side into
    ``outer_piece``, matching the one-sided cut-off direction.  ``potential``
    is the transition potential on H x F (independent of the transverse
    coordinate).  A ``seam`` collar marks a fiber-sum gluing locus: the two
    sides are verified in their own charts and matched only along the seam.
    """

    name: str
    chart: Chart
    transverse: str
    epsilon: float
    delta: float
    inner_piece: str
    outer_piece: str
    embed_inner: SmoothMap
    embed_outer: SmoothMap
    potential: Expr
    profile_kind: str = "two_sided"
    seam: bool = False
    exclusions: Tuple[Exclusion, ...] = ()

    def profile(self) -> CutoffProfile:
        return CutoffProfile(self.epsilon, self.delta, self.profile_kind)

    def cutoff(self) -> Expr:
        if self.seam:
            return as_expr(0)
        return make_cutoff(self.profile(), self.transverse)

    def band_chart(self, side: str) -> Chart:
        lo, hi = (0.0, self.epsilon) if side == "inner" else (-self.epsilon, 0.0)
        return self.chart.restrict(self.transverse, lo, hi, name=f"{self.chart.name}:{side}")


@dataclass(frozen=True)
class FibrationSpec:
    """A contact symplectic fibration presented over a partitioned base."""

    name: str
    fiber: Chart
    beta: DifferentialForm
    pieces: Tuple[BasePiece, ...]
    collars: Tuple[Collar, ...] = ()
    fiber_boundaries: Tuple[OutwardBoundary, ...] = ()
    fiber_exclusions: Tuple[Exclusion, ...] = ()
    horizontal_boundary_trivial: bool = False
    boundary_keep: Optional[Expr] = None

    def __post_init__(self):
        if not self.pieces:
            raise ValueError(f"fibration {self.name!r} needs at least one base piece")
        dims = {p.chart.dim for p in self.pieces}
        if len(dims) != 1:
            raise ValueError(f"fibration {self.name!r}: pieces have mixed base dimensions")
        if self.base_dim % 2 == 0:
            raise ValueError(f"fibration {self.name!r}: base dimension must be odd")
        if self.fiber.dim % 2 != 0:
            raise ValueError(f"fibration {self.name!r}: fiber dimension must be even")
        if self.beta.chart.coords != self.fiber.coords:
            raise ValueError(f"fibration {self.name!r}: beta must live on the fiber chart")
        names = [p.name for p in self.pieces]
        if len(set(names)) != len(names):
            raise ValueError(f"fibration {self.name!r}: duplicate piece names")
        by_name = {p.name: p for p in self.pieces}
        fiber_vars = set(self.fiber.coords)
        for collar in self.collars:
            for side in (collar.inner_piece, collar.outer_piece):
                if side not in by_name:
                    raise ValueError(
                        f"fibration {self.name!r}: collar {collar.name!r} references "
                        f"unknown piece {side!r}"
                    )
            i = collar.chart.index(collar.transverse)
            lo, hi = collar.chart.bounds[i]
            if not (math.isclose(lo, -collar.epsilon) and math.isclose(hi, collar.epsilon)):
                raise ValueError(
                    f"collar {collar.name!r}: transverse bounds must be [-epsilon, epsilon]"
                )
            h_coords = set(collar.chart.coords) - {collar.transverse}
            stray = collar.potential.variables() - h_coords - fiber_vars
            if stray:
                raise ValueError(
                    f"collar {collar.name!r}: potential depends on {sorted(stray)}, "
                    "expected only tube and fiber coordinates"
                )
            if collar.embed_inner.source.coords != collar.chart.coords:
                raise ValueError(f"collar {collar.name!r}: embed_inner source mismatch")
            if collar.embed_outer.source.coords != collar.chart.coords:
                raise ValueError(f"collar {collar.name!r}: embed_outer source mismatch")
            if collar.embed_inner.target.coords != by_name[collar.inner_piece].chart.coords:
                raise ValueError(f"collar {collar.name!r}: embed_inner target mismatch")
            if collar.embed_outer.target.coords != by_name[collar.outer_piece].chart.coords:
                raise ValueError(f"collar {collar.name!r}: embed_outer target mismatch")

    @property
    def base_dim(self) -> int:
        return self.pieces[0].chart.dim

    @property
    def fiber_dim(self) -> int:
        return self.fiber.dim

    @property
    def n(self) -> int:
        return (self.base_dim - 1) // 2

    @property
    def m(self) -> int:
        return self.fiber_dim // 2

    def piece(self, name: str) -> BasePiece:
        for p in self.pieces:
            if p.name == name:
                return p
        raise KeyError(name)

    def with_mu(self, mu_by_piece: Mapping[str, DifferentialForm]) -> "FibrationSpec":
        pieces = tuple(
            replace(p, mu=mu_by_piece.get(p.name, p.mu)) for p in self.pieces
        )
        return replace(self, pieces=pieces)

    def fiber_grid(self, resolution: Optional[int] = None) -> SampleGrid:
        return SampleGrid.default(self.fiber, resolution, self.fiber_exclusions)

    def validate(
        self,
        resolution: Optional[int] = None,
        threshold: float = DEFAULT_THRESHOLD,
        tol: float = 1e-10,
    ) -> Dict[str, PositivityReport]:
        """Check the geometric input obligations on sample grids.

        The base form must be contact on every piece, the fiber form exact
        symplectic (outward where boundaries are declared), the two collar
        embeddings must pull the base form back consistently, and under
        horizontal-boundary triviality every potential must be fiberwise
        constant on the declared boundary neighborhood.
        """
        reports: Dict[str, PositivityReport] = {}
        for p in self.pieces:
            grid = SampleGrid.default(p.chart, resolution, p.exclusions, p.keep)
            reports[f"mu:{p.name}"] = verify_contact(p.mu, grid, threshold, label=f"mu:{p.name}")
        reports["beta"] = verify_exact_symplectic(
            self.beta,
            self.fiber_grid(resolution),
            outward=self.fiber_boundaries or None,
            threshold=threshold,
            label="beta",
        )
        for collar in self.collars:
            if collar.seam:
                continue
            grid = SampleGrid.default(collar.chart, resolution, collar.exclusions)
            env = grid.env()
            inner = pullback(collar.embed_inner, self.piece(collar.inner_piece).mu)
            outer = pullback(collar.embed_outer, self.piece(collar.outer_piece).mu)
            resid = _form_residual(inner, outer, env)
            if resid > tol:
                raise ValueError(
                    f"collar {collar.name!r}: base form pullbacks disagree "
                    f"(residual {resid:.3e})"
                )
        if self.horizontal_boundary_trivial:
            if self.boundary_keep is None:
                raise ValueError(
                    "horizontal_boundary_trivial requires a declared boundary neighborhood"
                )
            fgrid = SampleGrid.default(
                self.fiber, resolution, self.fiber_exclusions, keep=self.boundary_keep
            )
            fpts = fgrid.points()
            for collar in self.collars:
                worst = _potential_fiber_variation(self, collar, fpts)
                if worst > tol:
                    raise ValueError(
                        f"collar {collar.name!r}: potential varies on the declared "
                        f"fiber-boundary neighborhood (residual {worst:.3e})"
                    )
        failed = [k for k, r in reports.items() if not r.passed]
        if failed:
            raise ValueError(f"fibration {self.name!r}: input checks failed: {failed}")
        return reports


def _form_residual(a: DifferentialForm, b: DifferentialForm, env) -> float:
    diff = (a - b).simplified()
    worst = 0.0
    for c in diff.coeffs.values():
        vals = np.asarray(c.evaluate(env), dtype=float)
        if vals.size:
            worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def _potential_fiber_variation(spec: FibrationSpec, collar: Collar, fiber_pts: np.ndarray) -> float:
    """Max fiber-derivative magnitude of a collar potential over sampled
    fiber points, maximized over tube sample points."""
    h_coords = [c for c in collar.chart.coords if c != collar.transverse]
    rng = np.random.default_rng(7)
    n = len(fiber_pts)
    env = {c: fiber_pts[:, i] for i, c in enumerate(spec.fiber.coords)}
    for c in h_coords:
        i = collar.chart.index(c)
        lo, hi = collar.chart.bounds[i]
        env[c] = rng.uniform(lo, hi, n)
    worst = 0.0
    for c in spec.fiber.coords:
        vals = np.asarray(collar.potential.diff(c).simplified().evaluate(env), dtype=float)
        if vals.size:
            worst = max(worst, float(np.max(np.abs(vals))))
    return worst


# -- assembly ---------------------------------------------------------------------


@dataclass(frozen=True)
class CollarForm:
    """The bundle form over one collar tube, one expression per side."""

    collar: Collar
    chart: Chart  # collar x fiber product chart
    inner: DifferentialForm
    outer: DifferentialForm
    cutoff: Expr


@dataclass(frozen=True)
class BundleContactForm:
    """The assembled bundle contact form sigma = K*mu + beta + f*dPsi."""

    K: float
    spec: FibrationSpec
    piece_forms: Dict[str, DifferentialForm]
    piece_charts: Dict[str, Chart]
    collar_forms: Dict[str, CollarForm]

    @property
    def cutoffs(self) -> Dict[str, Expr]:
        return {name: cf.cutoff for name, cf in self.collar_forms.items()}


def _piece_product(piece: BasePiece, fiber: Chart) -> Chart:
    return product_chart(piece.chart, fiber, name=f"{piece.name}*F")


def _collar_product(collar: Collar, fiber: Chart) -> Chart:
    return product_chart(collar.chart, fiber, name=f"{collar.name}*F")


def _assemble(
    spec: FibrationSpec,
    K: Expr,
    mu_by_piece: Optional[Mapping[str, DifferentialForm]] = None,
) -> Tuple[Dict[str, DifferentialForm], Dict[str, Chart], Dict[str, CollarForm]]:
    mu_of = {p.name: (mu_by_piece or {}).get(p.name, p.mu) for p in spec.pieces}
    piece_forms: Dict[str, DifferentialForm] = {}
    piece_charts: Dict[str, Chart] = {}
    for p in spec.pieces:
        prod = _piece_product(p, spec.fiber)
        sigma = inject_form(mu_of[p.name], prod) * K + inject_form(spec.beta, prod)
        piece_forms[p.name] = sigma
        piece_charts[p.name] = prod
    collar_forms: Dict[str, CollarForm] = {}
    for collar in spec.collars:
        prod = _collar_product(collar, spec.fiber)
        beta_up = inject_form(spec.beta, prod)
        cutoff = collar.cutoff()
        correction = differential(prod, collar.potential) * cutoff
        sides = {}
        for side, embed, piece in (
            ("inner", collar.embed_inner, collar.inner_piece),
            ("outer", collar.embed_outer, collar.outer_piece),
        ):
            mu_col = inject_form(pullback(embed, mu_of[piece]), prod)
            sides[side] = mu_col * K + beta_up + correction
        collar_forms[collar.name] = CollarForm(
            collar=collar, chart=prod, inner=sides["inner"], outer=sides["outer"], cutoff=cutoff
        )
    return piece_forms, piece_charts, collar_forms


def assemble_sigma(spec: FibrationSpec, K: float) -> BundleContactForm:
    """Assemble the bundle form at a fixed K."""
    if not K > 0:
        raise ValueError("K must be positive")
    pf, pc, cf = _assemble(spec, as_expr(float(K)))
    return BundleContactForm(K=float(K), spec=spec, piece_forms=pf, piece_charts=pc, collar_forms=cf)


# -- verification over a bundle ----------------------------------------------------


@dataclass
class _RegionCheck:
    label: str
    density: Expr
    scale_exprs: Tuple[Expr, ...]
    env: Dict[str, np.ndarray]
    pts: np.ndarray
    half_dim: int  # n + m for the K-normalization power


def _region_grid(
    spec: FibrationSpec,
    chart: Chart,
    resolution: Optional[int],
    keep: Optional[Expr],
    extra_exclusions: Sequence[Exclusion],
) -> SampleGrid:
    exclusions = tuple(extra_exclusions) + tuple(spec.fiber_exclusions)
    return SampleGrid.default(chart, resolution, exclusions, keep)


def _build_checks(
    spec: FibrationSpec,
    K: Expr,
    mu_by_piece: Optional[Mapping[str, DifferentialForm]] = None,
    resolution: Optional[int] = None,
) -> list:
    piece_forms, piece_charts, collar_forms = _assemble(spec, K, mu_by_piece)
    checks = []
    for p in spec.pieces:
        prod = piece_charts[p.name]
        grid = _region_grid(spec, prod, resolution, p.keep, p.exclusions)
        pts = grid.points()
        sigma = piece_forms[p.name]
        checks.append(
            _RegionCheck(
                label=f"piece:{p.name}",
                density=contact_density(sigma),
                scale_exprs=tuple(sigma.coeffs.values()),
                env=grid.env_of(pts),
                pts=pts,
                half_dim=spec.n + spec.m,
            )
        )
    for collar in spec.collars:
        cf = collar_forms[collar.name]
        if collar.seam:
            continue
        for side in ("inner", "outer"):
            band = product_chart(
                collar.band_chart(side), spec.fiber, name=f"{collar.name}:{side}*F"
            )
            sigma = DifferentialForm(band, 1, getattr(cf, side).coeffs)
            grid = _region_grid(spec, band, resolution, None, collar.exclusions)
            pts = grid.points()
            checks.append(
                _RegionCheck(
                    label=f"collar:{collar.name}:{side}",
                    density=contact_density(sigma),
                    scale_exprs=tuple(sigma.coeffs.values()),
                    env=grid.env_of(pts),
                    pts=pts,
                    half_dim=spec.n + spec.m,
                )
            )
    return checks


def _run_checks(checks, K_value: float, threshold: float) -> PositivityReport:
    reports = []
    for chk in checks:
        env = dict(chk.env)
        env[K_VARIABLE] = K_value
        vals = np.broadcast_to(
            np.asarray(chk.density.evaluate(env), dtype=float), (len(chk.pts),)
        )
        scale = 0.0
        for e in chk.scale_exprs:
            v = np.asarray(e.evaluate(env), dtype=float)
            if v.size:
                scale = max(scale, float(np.max(np.abs(v))))
        imin = int(np.argmin(vals))
        raw = float(vals[imin])
        norm = raw / scale ** (chk.half_dim + 1) if scale > 0 else raw
        reports.append(
            PositivityReport(
                min_value=norm,
                argmin_point=tuple(float(v) for v in chk.pts[imin]),
                grid={"label": chk.label, "points": int(len(chk.pts))},
                threshold=threshold,
                passed=bool(norm > threshold),
                label=chk.label,
                raw_min=raw,
                scale=scale,
            )
        )
    return combine_reports(reports, label="bundle")


def verify_bundle_contact(
    bundle: BundleContactForm,
    resolution: Optional[int] = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> PositivityReport:
    """Contactness of the assembled form over every piece and collar band."""
    checks = _build_checks(bundle.spec, Var(K_VARIABLE), None, resolution)
    return _run_checks(checks, bundle.K, threshold)


def find_admissible_K(
    spec: FibrationSpec,
    resolution: Optional[int] = None,
    threshold: float = DEFAULT_THRESHOLD,
    mu_by_piece: Optional[Mapping[str, DifferentialForm]] = None,
) -> Tuple[float, PositivityReport]:
    """Find one uniform K making the bundle form contact everywhere.

    Doubles K from 1 until the verification passes, then refines down by
    bisection to within ``REFINE_FACTOR`` of the failure boundary.
    """
    checks = _build_checks(spec, Var(K_VARIABLE), mu_by_piece, resolution)
    K = 1.0
    report = _run_checks(checks, K, threshold)
    if report.passed:
        return K, report
    while not report.passed:
        K *= 2.0
        if K > K_LIMIT:
            raise DominanceNotReachedError(
                f"dominance not reached: no admissible K below {K_LIMIT:g} "
                f"(worst region {report.label!r} at min {report.min_value:.3e})"
            )
        report = _run_checks(checks, K, threshold)
    lo, hi, hi_report = K / 2.0, K, report
    while hi / lo > REFINE_FACTOR:
        mid = math.sqrt(lo * hi)
        mid_report = _run_checks(checks, mid, threshold)
        if mid_report.passed:
            hi, hi_report = mid, mid_report
        else:
            lo = mid
    return hi, hi_report


def verify_compatibility(
    bundle: BundleContactForm,
    samples: int = 25,
    resolution: Optional[int] = None,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 42,
) -> PositivityReport:
    """Restrict the bundle form to sampled fiber slices and certify each
    slice as an exact symplectic structure."""
    spec = bundle.spec
    rng = np.random.default_rng(seed)
    regions = []
    for p in spec.pieces:
        grid = SampleGrid.default(p.chart, resolution, p.exclusions, p.keep)
        regions.append((f"piece:{p.name}", bundle.piece_forms[p.name], p.chart, grid.points()))
    for collar in spec.collars:
        if collar.seam:
            continue
        cf = bundle.collar_forms[collar.name]
        for side in ("inner", "outer"):
            band = collar.band_chart(side)
            grid = SampleGrid.default(band, resolution, collar.exclusions)
            regions.append((f"collar:{collar.name}:{side}", getattr(cf, side), band, grid.points()))
    per_region = max(1, samples // len(regions))
    fiber_grid = spec.fiber_grid(resolution)
    reports = []
    for label, sigma, base_chart, base_pts in regions:
        take = min(per_region, len(base_pts))
        chosen = base_pts[rng.choice(len(base_pts), size=take, replace=False)]
        for row in chosen:
            point = dict(zip(base_chart.coords, (float(v) for v in row)))
            slice_form = restrict_to_fiber(sigma, spec.fiber, point)
            rep = verify_exact_symplectic(
                slice_form,
                fiber_grid,
                outward=spec.fiber_boundaries or None,
                threshold=threshold,
                seed=seed,
                label=f"{label}@{tuple(round(v, 6) for v in point.values())}",
            )
            reports.append(rep)
    return combine_reports(reports, label="compatibility")


def product_contact(mu: DifferentialForm, beta: DifferentialForm) -> DifferentialForm:
    """The product contact form mu + beta on the product chart."""
    if mu.chart.dim % 2 == 0:
        raise ValueError("base factor must be odd-dimensional")
    if beta.chart.dim % 2 != 0:
        raise ValueError("fiber factor must be even-dimensional")
    if mu.degree != 1 or beta.degree != 1:
        raise ValueError("product_contact needs two 1-forms")
    prod = product_chart(mu.chart, beta.chart)
    return inject_form(mu, prod) + inject_form(beta, prod)


# -- diagnostics used by the invariants ------------------------------------------


def smooth_gluing_residual(
    bundle: BundleContactForm, resolution: Optional[int] = None, zero_tol: float = 1e-15
) -> float:
    """Worst coefficient mismatch between a collar form and the neighboring
    piece form, sampled where the cut-off has vanished."""
    spec = bundle.spec
    worst = 0.0
    for collar in spec.collars:
        if collar.seam:
            continue
        cf = bundle.collar_forms[collar.name]
        for side, embed, piece in (
            ("inner", collar.embed_inner, collar.inner_piece),
            ("outer", collar.embed_outer, collar.outer_piece),
        ):
            band = product_chart(collar.band_chart(side), spec.fiber)
            grid = SampleGrid.default(band, resolution, collar.exclusions)
            pts = grid.points()
            env = grid.env_of(pts)
            f_vals = np.broadcast_to(
                np.asarray(cf.cutoff.evaluate(env), dtype=float), (len(pts),)
            )
            dead = np.abs(f_vals) <= zero_tol
            if not dead.any():
                continue
            sub_env = {c: v[dead] if np.ndim(v) else v for c, v in env.items()}
            extended = _extend_to_product(embed, spec.fiber, cf.chart, bundle.piece_charts[piece])
            piece_on_collar = pullback(extended, bundle.piece_forms[piece])
            diff = (piece_on_collar - getattr(cf, side)).simplified()
            for c in diff.coeffs.values():
                vals = np.asarray(c.evaluate(sub_env), dtype=float)
                if vals.size:
                    worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def _extend_to_product(embed: SmoothMap, fiber: Chart, source_prod: Chart, target_prod: Chart) -> SmoothMap:
    """Extend a base-level embedding by the identity on the fiber factor."""
    comps = []
    for c in target_prod.coords:
        if c in fiber.coords:
            comps.append(Var(c))
        else:
            comps.append(embed.components[embed.target.index(c)])
    return SmoothMap(source_prod, target_prod, tuple(comps))


def gluing_locus_closedness(
    bundle: BundleContactForm, resolution: Optional[int] = None, one_tol: float = 1e-12
) -> float:
    """On each collar's cutoff == 1 band, the fiber restriction of sigma minus
    beta must be closed; returns the worst d-residual coefficient."""
    spec = bundle.spec
    worst = 0.0
    rng = np.random.default_rng(3)
    fiber_grid = spec.fiber_grid(resolution)
    fenv = fiber_grid.env()
    for collar in spec.collars:
        if collar.seam:
            continue
        cf = bundle.collar_forms[collar.name]
        grid = SampleGrid.default(collar.chart, resolution, collar.exclusions)
        pts = grid.points()
        env = grid.env_of(pts)
        f_vals = np.broadcast_to(
            np.asarray(cf.cutoff.evaluate(env), dtype=float), (len(pts),)
        )
        locus = np.abs(f_vals - 1.0) <= one_tol
        if not locus.any():
            continue
        rows = pts[locus]
        take = rows[rng.choice(len(rows), size=min(5, len(rows)), replace=False)]
        for row in take:
            point = dict(zip(collar.chart.coords, (float(v) for v in row)))
            slice_form = restrict_to_fiber(cf.inner, spec.fiber, point)
            resid_form = exterior_derivative((slice_form - spec.beta).simplified())
            for c in resid_form.coeffs.values():
                vals = np.asarray(c.evaluate(fenv), dtype=float)
                if vals.size:
                    worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def horizontal_boundary_residual(
    bundle: BundleContactForm, resolution: Optional[int] = None
) -> float:
    """Worst |sigma - (K*mu + beta)| coefficient over the declared neighborhood
    of the fiber boundary, across all collar tubes."""
    spec = bundle.spec
    if not spec.horizontal_boundary_trivial or spec.boundary_keep is None:
        raise ValueError("spec does not declare a trivial horizontal boundary")
    worst = 0.0
    for collar in spec.collars:
        if collar.seam:
            continue
        cf = bundle.collar_forms[collar.name]
        grid = SampleGrid.default(
            cf.chart,
            resolution,
            tuple(collar.exclusions) + tuple(spec.fiber_exclusions),
            keep=spec.boundary_keep,
        )
        env = grid.env()
        correction = differential(cf.chart, collar.potential) * cf.cutoff
        for c in correction.coeffs.values():
            vals = np.asarray(c.evaluate(env), dtype=float)
            if vals.size:
                worst = max(worst, float(np.max(np.abs(vals))))
    return worst
