"""Exterior calculus on coordinate charts.

Differential forms are sparse maps from strictly increasing coordinate
multi-indices to scalar expressions.  All operations are exact and symbolic;
numerics enter only when a form is evaluated on a grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Sequence, Tuple

from .charts import Chart, product_chart
from .expressions import Expr, ExprLike, ONE, ZERO, as_expr, mul, add

Index = Tuple[int, ...]


class ChartMismatchError(ValueError):
    pass


def _merge_sorted(i: Index, j: Index):
    """Sort the concatenation of two strictly increasing index tuples.

    Returns (sign, merged) with the permutation sign, or (0, ()) when an
    index repeats.
    """
    merged = list(i)
    sign = 1
    for b in j:
        pos = len(merged)
        while pos > 0 and merged[pos - 1] > b:
            pos -= 1
        if pos > 0 and merged[pos - 1] == b:
            return 0, ()
        sign *= -1 if (len(merged) - pos) % 2 else 1
        merged.insert(pos, b)
    return sign, tuple(merged)


def sort_index(idx: Sequence[int]):
    """Sign-sort an arbitrary index tuple; (0, ()) on repeats."""
    return _merge_sorted((), tuple(idx))


@dataclass(frozen=True)
class DifferentialForm:
    """A degree-k form on a chart with sparse expression coefficients."""

    chart: Chart
    degree: int
    coeffs: Mapping[Index, Expr]

    def __post_init__(self):
        if not 0 <= self.degree <= self.chart.dim:
            raise ValueError(
                f"degree {self.degree} out of range on {self.chart.dim}-dim chart {self.chart.name!r}"
            )
        clean: Dict[Index, Expr] = {}
        for idx, coeff in self.coeffs.items():
            idx = tuple(idx)
            if len(idx) != self.degree:
                raise ValueError(f"index {idx} has wrong length for degree {self.degree}")
            if any(not 0 <= i < self.chart.dim for i in idx):
                raise ValueError(f"index {idx} out of range on chart {self.chart.name!r}")
            if any(a >= b for a, b in zip(idx, idx[1:])):
                raise ValueError(f"index {idx} is not strictly increasing")
            coeff = as_expr(coeff)
            if coeff.is_zero():
                continue
            clean[idx] = coeff
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    # -- algebra --------------------------------------------------------------

    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._check_chart(other)
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if self.degree != other.degree:
            raise ValueError(f"cannot add degree {self.degree} and degree {other.degree} forms")
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = add(out[idx], c) if idx in out else c
        return DifferentialForm(self.chart, self.degree, out)

    def __sub__(self, other: "DifferentialForm") -> "DifferentialForm":
        return self + (other * -1)

    def __mul__(self, scalar: ExprLike) -> "DifferentialForm":
        s = as_expr(scalar)
        return DifferentialForm(
            self.chart, self.degree, {i: mul(s, c) for i, c in self.coeffs.items()}
        )

    __rmul__ = __mul__

    def __neg__(self) -> "DifferentialForm":
        return self * -1

    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, idx: Sequence[int]) -> Expr:
        sign, key = sort_index(idx)
        if sign == 0:
            return ZERO
        c = self.coeffs.get(key, ZERO)
        return c if sign == 1 else mul(as_expr(sign), c)

    def simplified(self) -> "DifferentialForm":
        return DifferentialForm(
            self.chart, self.degree, {i: c.simplified() for i, c in self.coeffs.items()}
        )

    def map_coeffs(self, fn) -> "DifferentialForm":
        return DifferentialForm(self.chart, self.degree, {i: fn(c) for i, c in self.coeffs.items()})

    def _check_chart(self, other):
        if self.chart.coords != other.chart.coords:
            raise ChartMismatchError(
                f"forms live on different charts: {self.chart.name!r} vs {other.chart.name!r}"
            )

    def __repr__(self):
        if not self.coeffs:
            return f"<0 ({self.degree}-form on {self.chart.name})>"
        names = self.chart.coords
        parts = [
            f"({c!r}) " + "^".join(f"d{names[i]}" for i in idx) if idx else f"({c!r})"
            for idx, c in self.coeffs.items()
        ]
        return " + ".join(parts)


def zero_form(chart: Chart, degree: int) -> DifferentialForm:
    return DifferentialForm(chart, min(degree, chart.dim), {})


def function_form(chart: Chart, f: ExprLike) -> DifferentialForm:
    return DifferentialForm(chart, 0, {(): as_expr(f)})


def one_form(chart: Chart, coeff_by_coord: Mapping[str, ExprLike]) -> DifferentialForm:
    coeffs = {(chart.index(c),): as_expr(e) for c, e in coeff_by_coord.items()}
    return DifferentialForm(chart, 1, coeffs)


@dataclass(frozen=True)
class VectorField:
    """A vector field on a chart: one component expression per coordinate."""

    chart: Chart
    components: Tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise ValueError(
                f"vector field on {self.chart.name!r} needs {self.chart.dim} components"
            )
        object.__setattr__(self, "components", comps)


@dataclass(frozen=True)
class SmoothMap:
    """A chart-to-chart map given by one target-coordinate expression each.

    ``domain`` is a tuple of scalar expressions that must all be positive at
    every point where the map is evaluated numerically.
    """

    source: Chart
    target: Chart
    components: Tuple[Expr, ...]
    domain: Tuple[Expr, ...] = ()

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        if len(comps) != self.target.dim:
            raise ValueError(
                f"map {self.source.name!r}->{self.target.name!r} needs "
                f"{self.target.dim} components"
            )
        allowed = set(self.source.coords)
        for c, comp in zip(self.target.coords, comps):
            stray = comp.variables() - allowed
            if stray:
                raise ValueError(
                    f"component for {c!r} depends on non-source variables {sorted(stray)}"
                )
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "domain", tuple(self.domain))

    def substitution(self) -> Dict[str, Expr]:
        return dict(zip(self.target.coords, self.components))

    def __call__(self, env: Mapping[str, object]):
        import numpy as np

        for guard in self.domain:
            vals = np.asarray(guard.evaluate(env), dtype=float)
            if np.any(vals <= 0.0):
                raise ValueError(
                    f"evaluation outside the domain of map "
                    f"{self.source.name!r}->{self.target.name!r}"
                )
        return [comp.evaluate(env) for comp in self.components]

    def jacobian_at(self, point: Mapping[str, object]):
        import numpy as np

        rows = []
        for comp in self.components:
            rows.append([
                float(comp.diff(c).evaluate(point)) for c in self.source.coords
            ])
        return np.asarray(rows, dtype=float)


def identity_map(chart: Chart) -> SmoothMap:
    from .expressions import Var

    return SmoothMap(chart, chart, tuple(Var(c) for c in chart.coords))


def compose(g: SmoothMap, f: SmoothMap) -> SmoothMap:
    """The composite g . f (apply f first); domain guards carry over."""
    if f.target.coords != g.source.coords:
        raise ChartMismatchError(
            f"cannot compose: {f.target.name!r} does not match {g.source.name!r}"
        )
    subs = f.substitution()
    domain = tuple(f.domain) + tuple(gd.substitute(subs) for gd in g.domain)
    return SmoothMap(
        f.source, g.target, tuple(c.substitute(subs) for c in g.components), domain
    )


# -- the exterior-calculus operations ----------------------------------------


def partial_derivative(e: ExprLike, coord: str, chart: Chart | None = None) -> Expr:
    """Exact symbolic partial derivative of a scalar expression."""
    if chart is not None and coord not in chart.coords:
        raise ValueError(f"chart {chart.name!r} has no coordinate {coord!r}")
    return as_expr(e).diff(coord).simplified()


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    a._check_chart(b)
    deg = a.degree + b.degree
    if deg > a.chart.dim:
        return zero_form(a.chart, a.chart.dim)
    out: Dict[Index, list] = {}
    for i, ca in a.coeffs.items():
        for j, cb in b.coeffs.items():
            sign, merged = _merge_sorted(i, j)
            if sign == 0:
                continue
            term = mul(as_expr(sign), ca, cb)
            out.setdefault(merged, []).append(term)
    coeffs = {idx: add(*terms).simplified() for idx, terms in out.items()}
    return DifferentialForm(a.chart, deg, coeffs)


def wedge_all(*forms: DifferentialForm) -> DifferentialForm:
    result = forms[0]
    for f in forms[1:]:
        result = wedge(result, f)
    return result


def exterior_derivative(a: DifferentialForm) -> DifferentialForm:
    chart = a.chart
    if a.degree >= chart.dim:
        return zero_form(chart, chart.dim)
    out: Dict[Index, list] = {}
    for idx, c in a.coeffs.items():
        for pos, coord in enumerate(chart.coords):
            if pos in idx:
                continue
            dc = c.diff(coord)
            if dc.is_zero():
                continue
            sign, merged = _merge_sorted((pos,), idx)
            if sign == 0:
                continue
            out.setdefault(merged, []).append(mul(as_expr(sign), dc))
    coeffs = {idx: add(*terms).simplified() for idx, terms in out.items()}
    return DifferentialForm(chart, a.degree + 1, coeffs)


def d(a: DifferentialForm) -> DifferentialForm:
    return exterior_derivative(a)


def differential(chart: Chart, e: ExprLike) -> DifferentialForm:
    """The exterior derivative of a scalar expression as a 1-form."""
    return exterior_derivative(function_form(chart, e))


def pullback(f: SmoothMap, a: DifferentialForm) -> DifferentialForm:
    if a.chart.coords != f.target.coords:
        raise ChartMismatchError(
            f"form lives on {a.chart.name!r}, map targets {f.target.name!r}"
        )
    src = f.source
    if a.degree > src.dim:
        raise ValueError(
            f"cannot pull a degree-{a.degree} form back to {src.dim}-dim chart {src.name!r}"
        )
    subs = f.substitution()
    comp_diffs = [
        DifferentialForm(
            src, 1, {(k,): comp.diff(c) for k, c in enumerate(src.coords)}
        )
        for comp in f.components
    ]
    total = zero_form(src, a.degree)
    for idx, c in a.coeffs.items():
        term = function_form(src, c.substitute(subs))
        pulled = term if a.degree == 0 else wedge_all(term, *(comp_diffs[i] for i in idx))
        total = total + pulled
    return total


def interior_product(x: VectorField, a: DifferentialForm) -> DifferentialForm:
    if x.chart.coords != a.chart.coords:
        raise ChartMismatchError(
            f"vector field on {x.chart.name!r}, form on {a.chart.name!r}"
        )
    if a.degree < 1:
        raise ValueError("interior product needs a form of degree >= 1")
    out: Dict[Index, list] = {}
    for idx, c in a.coeffs.items():
        for slot, i in enumerate(idx):
            rest = idx[:slot] + idx[slot + 1 :]
            sign = -1 if slot % 2 else 1
            out.setdefault(rest, []).append(mul(as_expr(sign), x.components[i], c))
    coeffs = {idx: add(*terms).simplified() for idx, terms in out.items()}
    return DifferentialForm(a.chart, a.degree - 1, coeffs)


def form_power(a: DifferentialForm, k: int) -> DifferentialForm:
    if k < 0:
        raise ValueError("form power needs k >= 0")
    if k == 0:
        return function_form(a.chart, ONE)
    result = a
    for _ in range(k - 1):
        result = wedge(result, a)
    return result


def top_density(a: DifferentialForm) -> Expr:
    """The coefficient of the full coordinate volume element, times the
    chart's orientation sign."""
    if a.degree != a.chart.dim:
        raise ValueError(
            f"top_density needs a top-degree form (got degree {a.degree} on "
            f"{a.chart.dim}-dim chart {a.chart.name!r})"
        )
    full = tuple(range(a.chart.dim))
    c = a.coeffs.get(full, ZERO)
    return mul(as_expr(a.chart.orientation_sign), c).simplified()


# -- product-chart helpers -----------------------------------------------------


def inject_form(form: DifferentialForm, product: Chart) -> DifferentialForm:
    """Pull a form on a factor chart up to a product chart containing the
    factor's coordinates (the pullback under the projection)."""
    offsets = [product.index(c) for c in form.chart.coords]
    reindexed = {}
    for idx, c in form.coeffs.items():
        new = tuple(offsets[i] for i in idx)
        sign, key = sort_index(new)
        reindexed[key] = mul(as_expr(sign), c)
    return DifferentialForm(product, form.degree, reindexed)


def restrict_to_fiber(
    form: DifferentialForm,
    fiber: Chart,
    base_point: Mapping[str, float],
) -> DifferentialForm:
    """Restrict a form on a product chart to a fiber slice.

    Differentials of non-fiber coordinates are dropped and the base-point
    values are substituted into the coefficients.
    """
    product = form.chart
    fiber_pos = {product.index(c): k for k, c in enumerate(fiber.coords)}
    subs = {c: as_expr(v) for c, v in base_point.items()}
    coeffs: Dict[Index, Expr] = {}
    for idx, c in form.coeffs.items():
        if any(i not in fiber_pos for i in idx):
            continue
        new = tuple(fiber_pos[i] for i in idx)
        sign, key = sort_index(new)
        restricted = mul(as_expr(sign), c.substitute(subs))
        coeffs[key] = add(coeffs[key], restricted) if key in coeffs else restricted
    return DifferentialForm(fiber, form.degree, coeffs)
