"""Numerical certification on sample grids: contactness, exact
symplecticity, Liouville outwardness, and exact-symplectomorphism potentials.

Everything here is a grid scan of exact symbolic data.  Reports are plain
dataclasses that serialize into the run report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .charts import Chart
from .expressions import Expr, as_expr, div, mul
from .forms import (
    DifferentialForm,
    VectorField,
    SmoothMap,
    exterior_derivative,
    form_power,
    pullback,
    top_density,
    wedge,
)

DEFAULT_THRESHOLD = 1e-8
DEFAULT_RESOLUTION = 15
MAX_GRID_POINTS = 200_000
POLAR_EXCLUSION = 0.05


class NotSymplecticError(ValueError):
    pass


class NotExactError(ValueError):
    pass


@dataclass(frozen=True)
class Exclusion:
    """Half-open coordinate band [lo, hi) to skip when sampling."""

    coord: str
    lo: float
    hi: float


@dataclass(frozen=True)
class SampleGrid:
    """A rectangular sample grid on a chart.

    ``exclusions`` are half-open coordinate bands to skip; ``keep`` is an
    optional scalar expression and only points where it is > 0 survive (used
    for non-box regions such as balls and annuli).
    """

    chart: Chart
    resolution: Tuple[int, ...]
    exclusions: Tuple[Exclusion, ...] = ()
    keep: Optional[Expr] = None

    def __post_init__(self):
        res = self.resolution
        if isinstance(res, int):
            res = (res,) * self.chart.dim
        res = tuple(int(r) for r in res)
        if len(res) != self.chart.dim:
            raise ValueError("resolution length must match chart dimension")
        if any(r < 1 for r in res):
            raise ValueError("resolution entries must be >= 1")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "exclusions", tuple(self.exclusions))

    @staticmethod
    def default(
        chart: Chart,
        resolution: Optional[int] = None,
        exclusions: Sequence[Exclusion] = (),
        keep: Optional[Expr] = None,
        max_points: int = MAX_GRID_POINTS,
    ) -> "SampleGrid":
        """Uniform grid, shrunk until the lattice fits under ``max_points``."""
        per_axis = resolution or DEFAULT_RESOLUTION
        res = [per_axis] * chart.dim
        while _prod(res) > max_points:
            i = res.index(max(res))
            if res[i] <= 2:
                break
            res[i] -= 1
        return SampleGrid(chart, tuple(res), tuple(exclusions), keep)

    def axes(self):
        """Per-coordinate sample values (periodic axes omit the endpoint)."""
        axes = []
        for (lo, hi), n, per in zip(self.chart.bounds, self.resolution, self.chart.periodic):
            axes.append(np.linspace(lo, hi, n, endpoint=not per))
        return axes

    def lattice_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def mask(self, pts: np.ndarray) -> np.ndarray:
        mask = np.ones(len(pts), dtype=bool)
        for exc in self.exclusions:
            i = self.chart.index(exc.coord)
            mask &= ~((pts[:, i] >= exc.lo) & (pts[:, i] < exc.hi))
        if self.keep is not None:
            vals = np.asarray(self.keep.evaluate(self.env_of(pts)), dtype=float)
            mask &= vals > 0.0
        return mask

    def points(self) -> np.ndarray:
        pts = self.lattice_points()
        pts = pts[self.mask(pts)]
        if len(pts) == 0:
            raise ValueError(
                f"grid on chart {self.chart.name!r} is empty after exclusions"
            )
        return pts

    def env_of(self, pts: np.ndarray) -> Dict[str, np.ndarray]:
        return {c: pts[:, i] for i, c in enumerate(self.chart.coords)}

    def env(self) -> Dict[str, np.ndarray]:
        return self.env_of(self.points())

    def metadata(self) -> dict:
        return {
            "chart": self.chart.name,
            "resolution": list(self.resolution),
            "exclusions": [[e.coord, e.lo, e.hi] for e in self.exclusions],
            "restricted": self.keep is not None,
        }


def _prod(xs):
    out = 1
    for x in xs:
        out *= x
    return out


@dataclass(frozen=True)
class PositivityReport:
    """Result of a grid scan for strict positivity of a density."""

    min_value: float
    argmin_point: Tuple[float, ...]
    grid: dict
    threshold: float
    passed: bool
    label: str = ""
    raw_min: float = math.nan
    scale: float = math.nan
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "passed": bool(self.passed),
            "min_value": self.min_value,
            "raw_min": self.raw_min,
            "scale": self.scale,
            "argmin_point": list(self.argmin_point),
            "threshold": self.threshold,
            "grid": self.grid,
            "details": self.details,
        }


def combine_reports(reports: Sequence[PositivityReport], label: str) -> PositivityReport:
    """Associative min-reduction over sub-reports."""
    if not reports:
        raise ValueError("no reports to combine")
    worst = min(reports, key=lambda r: r.min_value)
    return PositivityReport(
        min_value=worst.min_value,
        argmin_point=worst.argmin_point,
        grid={"combined": [r.grid for r in reports]},
        threshold=worst.threshold,
        passed=all(r.passed for r in reports),
        label=label,
        raw_min=worst.raw_min,
        scale=worst.scale,
        details={"parts": [r.label for r in reports], "worst": worst.label},
    )


# -- contact certification -----------------------------------------------------


def contact_density(alpha: DifferentialForm) -> Expr:
    """The coefficient of the contact volume alpha ^ (d alpha)^n."""
    dim = alpha.chart.dim
    if dim % 2 == 0:
        raise ValueError(f"contact forms need an odd-dimensional chart (dim {dim})")
    if alpha.degree != 1:
        raise ValueError("contact_density needs a 1-form")
    n = (dim - 1) // 2
    return top_density(wedge(alpha, form_power(exterior_derivative(alpha), n)))


def _coefficient_scale(form: DifferentialForm, env) -> float:
    """Largest coefficient magnitude of a form over a sampled environment."""
    best = 0.0
    for c in form.coeffs.values():
        vals = np.asarray(c.evaluate(env), dtype=float)
        if vals.size:
            best = max(best, float(np.max(np.abs(vals))))
    return best


def verify_contact(
    alpha: DifferentialForm,
    grid: SampleGrid,
    threshold: float = DEFAULT_THRESHOLD,
    label: str = "",
) -> PositivityReport:
    """Scan the contact density over the grid.

    The reported minimum is normalized by the largest coefficient magnitude
    of ``alpha`` on the grid (raised to n+1, the density's homogeneity), so
    the threshold is scale-free.
    """
    pts = grid.points()
    env = grid.env_of(pts)
    density = contact_density(alpha)
    vals = np.broadcast_to(
        np.asarray(density.evaluate(env), dtype=float), (len(pts),)
    )
    imin = int(np.argmin(vals))
    raw_min = float(vals[imin])
    n = (alpha.chart.dim - 1) // 2
    scale = _coefficient_scale(alpha, env)
    norm_min = raw_min / scale ** (n + 1) if scale > 0 else raw_min
    return PositivityReport(
        min_value=norm_min,
        argmin_point=tuple(float(v) for v in pts[imin]),
        grid=grid.metadata(),
        threshold=threshold,
        passed=bool(norm_min > threshold),
        label=label or f"contact:{alpha.chart.name}",
        raw_min=raw_min,
        scale=scale,
        details={"points": int(len(pts))},
    )


# -- symplectic side -------------------------------------------------------------


def symplectic_matrix(omega: DifferentialForm, point: Mapping[str, float]) -> np.ndarray:
    """The antisymmetric coefficient matrix of a 2-form at a point."""
    if omega.degree != 2:
        raise ValueError("symplectic_matrix needs a 2-form")
    dim = omega.chart.dim
    mat = np.zeros((dim, dim))
    for (i, j), c in omega.coeffs.items():
        v = float(c.evaluate(point))
        mat[i, j] = v
        mat[j, i] = -v
    return mat


def _matrix_stack(omega: DifferentialForm, env, n_points: int) -> np.ndarray:
    dim = omega.chart.dim
    stack = np.zeros((n_points, dim, dim))
    for (i, j), c in omega.coeffs.items():
        v = np.broadcast_to(np.asarray(c.evaluate(env), dtype=float), (n_points,))
        stack[:, i, j] = v
        stack[:, j, i] = -v
    return stack


def _solve_liouville_at(omega: DifferentialForm, beta: DifferentialForm, pts: np.ndarray):
    """Solve iota_chi(omega) = beta pointwise: W^T chi = b."""
    env = {c: pts[:, i] for i, c in enumerate(beta.chart.coords)}
    n = len(pts)
    dim = beta.chart.dim
    w = _matrix_stack(omega, env, n)
    b = np.zeros((n, dim))
    for (i,), c in beta.coeffs.items():
        b[:, i] = np.broadcast_to(np.asarray(c.evaluate(env), dtype=float), (n,))
    dets = np.linalg.det(w)
    bad = np.nonzero(np.abs(dets) < 1e-14)[0]
    if len(bad):
        where = tuple(float(v) for v in pts[bad[0]])
        raise ValueError(f"singular symplectic matrix at grid point {where}")
    return np.linalg.solve(np.transpose(w, (0, 2, 1)), b[..., None])[..., 0]


def _sym_det(m) -> Expr:
    k = len(m)
    if k == 1:
        return m[0][0]
    total = as_expr(0)
    for j in range(k):
        minor = [row[:j] + row[j + 1 :] for row in m[1:]]
        sign = -1 if j % 2 else 1
        total = total + mul(as_expr(sign), m[0][j], _sym_det(minor))
    return total


def _symbolic_liouville(omega: DifferentialForm, beta: DifferentialForm) -> Optional[VectorField]:
    """Closed-form Cramer solve of iota_chi(d beta) = beta for small charts."""
    dim = beta.chart.dim
    if dim > 4:
        return None
    zero = as_expr(0)
    w = [[zero] * dim for _ in range(dim)]
    for (i, j), c in omega.coeffs.items():
        w[i][j] = c
        w[j][i] = mul(as_expr(-1), c)
    a = [[w[j][i] for j in range(dim)] for i in range(dim)]  # transpose
    b = [beta.coeffs.get((i,), zero) for i in range(dim)]
    det = _sym_det(a).simplified()
    if det.is_zero():
        return None
    comps = []
    for i in range(dim):
        col = [[b[r] if c == i else a[r][c] for c in range(dim)] for r in range(dim)]
        comps.append(div(_sym_det(col).simplified(), det).simplified())
    return VectorField(beta.chart, tuple(comps))


@dataclass(frozen=True)
class TabulatedVectorField:
    """Vector field sampled on a full lattice, with multilinear interpolation."""

    chart: Chart
    axes: tuple
    values: np.ndarray  # shape (*lattice, dim)
    symbolic: Optional[VectorField] = None

    def at(self, point: Sequence[float]) -> np.ndarray:
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(self.axes, self.values, method="linear")
        return np.asarray(interp(np.atleast_2d(point))[0])


def liouville_field(
    beta: DifferentialForm, grid: Optional[SampleGrid] = None
) -> TabulatedVectorField:
    """The d(beta)-dual field of beta, tabulated on the grid lattice.

    A closed-form solution is attached when the linear system solves
    symbolically (charts of dimension <= 4).
    """
    if grid is None:
        grid = SampleGrid.default(beta.chart)
    omega = exterior_derivative(beta)
    pts = grid.lattice_points()
    # exclusion bands may hide singular lattice nodes; solve only the kept
    # points and mark the rest unusable
    mask = grid.mask(pts)
    if not mask.any():
        raise ValueError(f"grid on chart {beta.chart.name!r} is empty after exclusions")
    full = np.full((len(pts), beta.chart.dim), np.nan)
    full[mask] = _solve_liouville_at(omega, beta, pts[mask])
    shape = tuple(grid.resolution) + (beta.chart.dim,)
    return TabulatedVectorField(
        chart=beta.chart,
        axes=tuple(grid.axes()),
        values=full.reshape(shape),
        symbolic=_symbolic_liouville(omega, beta),
    )


@dataclass(frozen=True)
class OutwardBoundary:
    """A declared boundary component with outward co-orientation.

    ``kind`` is "face" (a bound of one coordinate) or "sphere" (a round
    sphere about the origin in the given coordinates).
    """

    kind: str
    coord: str = ""
    side: str = "upper"
    radius: float = 1.0
    coords: Tuple[str, ...] = ()

    def sample_points(self, chart: Chart, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "face":
            i = chart.index(self.coord)
            value = chart.bounds[i][1] if self.side == "upper" else chart.bounds[i][0]
            pts = np.column_stack([
                rng.uniform(lo, hi, count) for (lo, hi) in chart.bounds
            ])
            pts[:, i] = value
            return pts
        if self.kind == "sphere":
            idx = [chart.index(c) for c in self.coords]
            dirs = rng.normal(size=(count, len(idx)))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            pts = np.column_stack([
                rng.uniform(lo, hi, count) for (lo, hi) in chart.bounds
            ])
            for k, i in enumerate(idx):
                pts[:, i] = self.radius * dirs[:, k]
            return pts
        raise ValueError(f"unknown boundary kind {self.kind!r}")

    def outward_components(self, chart: Chart, pts: np.ndarray, chi: np.ndarray) -> np.ndarray:
        if self.kind == "face":
            i = chart.index(self.coord)
            sign = 1.0 if self.side == "upper" else -1.0
            return sign * chi[:, i]
        idx = [chart.index(c) for c in self.coords]
        normal = pts[:, idx] / np.linalg.norm(pts[:, idx], axis=1, keepdims=True)
        return np.einsum("ij,ij->i", chi[:, idx], normal)

    def to_dict(self) -> dict:
        if self.kind == "face":
            return {"kind": "face", "coord": self.coord, "side": self.side}
        return {"kind": "sphere", "coords": list(self.coords), "radius": self.radius}


def verify_exact_symplectic(
    beta: DifferentialForm,
    grid: SampleGrid,
    outward: Optional[Sequence[OutwardBoundary]] = None,
    threshold: float = DEFAULT_THRESHOLD,
    require_outward: bool = False,
    boundary_samples: int = 200,
    seed: int = 42,
    label: str = "",
) -> PositivityReport:
    """Certify d(beta) nondegenerate on the grid and, where boundaries are
    declared, the Liouville field strictly outward."""
    dim = beta.chart.dim
    if dim % 2 != 0:
        raise ValueError("exact symplectic structures need an even-dimensional chart")
    if require_outward and not outward:
        raise ValueError("outwardness requested but no boundary declared")
    m = dim // 2
    omega = exterior_derivative(beta)
    pts = grid.points()
    env = grid.env_of(pts)
    w = _matrix_stack(omega, env, len(pts))
    dets = np.linalg.det(w)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    norm_dets = np.abs(dets) / scale ** dim if scale > 0 else np.zeros_like(dets)
    imin = int(np.argmin(norm_dets))
    min_val = float(norm_dets[imin])
    argmin = tuple(float(v) for v in pts[imin])
    details: dict = {"points": int(len(pts)), "pairing_dim": m}
    passed = min_val > threshold
    if outward:
        rng = np.random.default_rng(seed)
        worst = math.inf
        for boundary in outward:
            bpts = boundary.sample_points(beta.chart, boundary_samples, rng)
            chi = _solve_liouville_at(omega, beta, bpts)
            comp = boundary.outward_components(beta.chart, bpts, chi)
            j = int(np.argmin(comp))
            if comp[j] < worst:
                worst = float(comp[j])
                worst_point = tuple(float(v) for v in bpts[j])
        details["outward_min"] = worst
        details["boundaries"] = [b.to_dict() for b in outward]
        if worst <= threshold:
            passed = False
            if worst < min_val:
                min_val = worst
                argmin = worst_point
    return PositivityReport(
        min_value=min_val,
        argmin_point=argmin,
        grid=grid.metadata(),
        threshold=threshold,
        passed=bool(passed),
        label=label or f"exact_symplectic:{beta.chart.name}",
        raw_min=float(np.min(np.abs(dets))) if len(pts) else math.nan,
        scale=scale,
        details=details,
    )


# -- exact symplectomorphism potentials -------------------------------------------


@dataclass(frozen=True)
class TabulatedScalar:
    chart: Chart
    axes: tuple
    values: np.ndarray

    def at(self, point: Sequence[float]) -> float:
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(self.axes, self.values, method="linear")
        return float(interp(np.atleast_2d(point))[0])

    def max_gradient(self) -> float:
        grads = np.gradient(self.values, *self.axes, edge_order=1)
        if self.values.ndim == 1:
            grads = [grads]
        return float(max(np.max(np.abs(g)) for g in grads))


@dataclass(frozen=True)
class PotentialResult:
    """Potential psi with phi*(beta) - beta = d psi up to the residuals."""

    psi: TabulatedScalar
    max_closedness_residual: float
    max_path_discrepancy: float


def _line_integral(gamma: DifferentialForm, starts: np.ndarray, ends: np.ndarray, order: int = 48):
    """Integrate a 1-form along straight segments (Gauss-Legendre)."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    delta = ends - starts
    total = np.zeros(len(starts))
    coords = gamma.chart.coords
    for sk, wk in zip(s, w):
        pts = starts + sk * delta
        env = {c: pts[:, i] for i, c in enumerate(coords)}
        for (i,), c in gamma.coeffs.items():
            vals = np.broadcast_to(np.asarray(c.evaluate(env), dtype=float), (len(pts),))
            total += wk * vals * delta[:, i]
    return total


def exact_symplectomorphism_potential(
    phi: SmoothMap,
    beta: DifferentialForm,
    grid: Optional[SampleGrid] = None,
    basepoint: Optional[Sequence[float]] = None,
    closed_tol: float = 1e-8,
    loop_tol: float = 1e-6,
    loops: int = 20,
    seed: int = 42,
) -> PotentialResult:
    """Certify phi*(beta) - beta = d psi on a star-shaped chart.

    Closedness of the difference is checked on the grid; psi is produced by
    line integration from the basepoint; path independence is probed on
    random closed polygonal loops.
    """
    if grid is None:
        grid = SampleGrid.default(beta.chart)
    chart = beta.chart
    gamma = (pullback(phi, beta) - beta).simplified()
    dgamma = exterior_derivative(gamma)
    env = grid.env()
    n_pts = len(next(iter(env.values()))) if env else 0
    resid = 0.0
    for c in dgamma.coeffs.values():
        vals = np.asarray(c.evaluate(env), dtype=float)
        if vals.size:
            resid = max(resid, float(np.max(np.abs(vals))))
    if resid > closed_tol:
        raise NotSymplecticError(
            f"not symplectic: d(phi* beta - beta) has residual {resid:.3e}"
        )
    if basepoint is None:
        basepoint = [0.5 * (lo + hi) for lo, hi in chart.bounds]
    base = np.asarray(basepoint, dtype=float)
    lattice = grid.lattice_points()
    psi_vals = _line_integral(gamma, np.broadcast_to(base, lattice.shape).copy(), lattice)
    psi = TabulatedScalar(chart, tuple(grid.axes()), psi_vals.reshape(grid.resolution))
    # path independence over random closed polygons
    rng = np.random.default_rng(seed)
    margins = [(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo)) for lo, hi in chart.bounds]
    worst_loop = 0.0
    for _ in range(loops):
        k = int(rng.integers(3, 7))
        verts = np.column_stack([rng.uniform(lo, hi, k) for lo, hi in margins])
        starts = verts
        ends = np.roll(verts, -1, axis=0)
        worst_loop = max(worst_loop, abs(float(np.sum(_line_integral(gamma, starts, ends)))))
    if worst_loop > loop_tol:
        raise NotExactError(
            f"not exact on this chart: loop discrepancy {worst_loop:.3e}"
        )
    return PotentialResult(
        psi=psi,
        max_closedness_residual=resid,
        max_path_discrepancy=worst_loop,
    )
