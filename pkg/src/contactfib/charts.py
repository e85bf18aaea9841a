"""Coordinate charts: named coordinate boxes with orientation data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

_PERIOD_TOL = 1e-12


@dataclass(frozen=True)
class Chart:
    """A coordinate domain: ordered coordinates with closed interval bounds.

    ``periodic`` marks angle coordinates (interval length 2*pi); they wrap at
    grid-generation time only, never inside expressions.  ``orientation_sign``
    is +1 or -1 relative to the listed coordinate order.
    """

    name: str
    coords: Tuple[str, ...]
    bounds: Tuple[Tuple[float, float], ...]
    periodic: Tuple[bool, ...] = ()
    orientation_sign: int = 1

    def __post_init__(self):
        coords = tuple(self.coords)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        periodic = tuple(self.periodic) if self.periodic else (False,) * len(coords)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "periodic", periodic)
        if len(set(coords)) != len(coords):
            raise ValueError(f"chart {self.name!r}: duplicate coordinate names")
        if not (len(coords) == len(bounds) == len(periodic)):
            raise ValueError(f"chart {self.name!r}: coords/bounds/periodic lengths differ")
        if self.orientation_sign not in (1, -1):
            raise ValueError(f"chart {self.name!r}: orientation_sign must be +1 or -1")
        for c, (lo, hi), per in zip(coords, bounds, periodic):
            if not lo < hi:
                raise ValueError(f"chart {self.name!r}: empty interval for {c!r}")
            if per and abs((hi - lo) - 2 * math.pi) > _PERIOD_TOL:
                raise ValueError(
                    f"chart {self.name!r}: periodic coordinate {c!r} must span 2*pi"
                )

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, coord: str) -> int:
        try:
            return self.coords.index(coord)
        except ValueError:
            raise ValueError(f"chart {self.name!r} has no coordinate {coord!r}") from None

    def with_bounds(self, new_bounds: Sequence[Tuple[float, float]], name: Optional[str] = None) -> "Chart":
        """Copy of this chart restricted to sub-intervals (periodicity dropped
        for any coordinate that no longer spans a full period)."""
        nb = tuple((float(lo), float(hi)) for lo, hi in new_bounds)
        per = tuple(
            p and abs((hi - lo) - 2 * math.pi) <= _PERIOD_TOL
            for p, (lo, hi) in zip(self.periodic, nb)
        )
        return replace(self, name=name or self.name, bounds=nb, periodic=per)

    def restrict(self, coord: str, lo: float, hi: float, name: Optional[str] = None) -> "Chart":
        i = self.index(coord)
        nb = list(self.bounds)
        nb[i] = (lo, hi)
        return self.with_bounds(nb, name=name)


def product_chart(a: Chart, b: Chart, name: Optional[str] = None) -> Chart:
    """Concatenate two charts; coordinate names must be disjoint.

    The product orientation is the block order (a-coordinates first), so the
    sign multiplies.
    """
    clash = set(a.coords) & set(b.coords)
    if clash:
        raise ValueError(f"product chart {a.name!r} x {b.name!r}: shared coordinates {sorted(clash)}")
    return Chart(
        name=name or f"{a.name}*{b.name}",
        coords=a.coords + b.coords,
        bounds=a.bounds + b.bounds,
        periodic=a.periodic + b.periodic,
        orientation_sign=a.orientation_sign * b.orientation_sign,
    )
