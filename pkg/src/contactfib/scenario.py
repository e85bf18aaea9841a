"""Scenario documents: TOML files declaring charts, forms, maps, fibrations,
families, and sums, plus an ordered run list of verification tasks.

Loading resolves every cross-reference and parses every expression; errors
carry the section and name they come from.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .charts import Chart
from .expressions import Expr, as_expr
from .forms import DifferentialForm, SmoothMap, identity_map
from .parsing import ParseError, parse_form, parse_number, parse_scalar
from .bundles import BasePiece, Collar, FibrationSpec
from .families import ContactFamily
from .sums import DarbouxChart, SumSpec, darboux_chart
from .verify import Exclusion, OutwardBoundary

BUILTIN_PACKAGE = "contactfib.builtins"


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioDocument:
    title: str
    path: Optional[Path]
    seed: int
    charts: Dict[str, Chart]
    forms: Dict[str, DifferentialForm]
    maps: Dict[str, SmoothMap]
    fibrations: Dict[str, FibrationSpec]
    families: Dict[str, ContactFamily]
    sums: Dict[str, SumSpec]
    run: List[dict]
    digest: str
    raw: dict = field(repr=False, default_factory=dict)


def canonical_digest(data: dict) -> str:
    """Digest of the parsed document; whitespace-only edits do not change it."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def builtin_scenarios() -> Dict[str, Path]:
    from importlib import resources

    out = {}
    root = resources.files(BUILTIN_PACKAGE)
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".scn"):
            out[entry.name[: -len(".scn")]] = Path(str(entry))
    return out


def resolve_scenario_path(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    builtins = builtin_scenarios()
    stem = name_or_path[:-4] if name_or_path.endswith(".scn") else name_or_path
    if stem in builtins:
        return builtins[stem]
    raise ScenarioError(
        f"no such scenario {name_or_path!r} (builtins: {', '.join(sorted(builtins))})"
    )


def load_scenario(path: str | Path) -> ScenarioDocument:
    path = resolve_scenario_path(str(path))
    text = path.read_bytes()
    try:
        data = tomllib.loads(text.decode("utf-8"))
    except tomllib.TOMLDecodeError as e:
        message = str(e)
        if "Cannot overwrite a value" in message or "Cannot declare" in message:
            raise ScenarioError(f"{path.name}: duplicate name: {message}") from None
        raise ScenarioError(f"{path.name}: parse error: {message}") from None
    return build_document(data, path)


def build_document(data: dict, path: Optional[Path] = None) -> ScenarioDocument:
    digest = canonical_digest(data)
    title = str(data.get("title", path.stem if path else "scenario"))
    seed = int(data.get("seed", 42))
    charts = {
        name: _build_chart(name, section)
        for name, section in _section(data, "charts").items()
    }
    builder = _Builder(charts)
    forms = {
        name: builder.form(name, section)
        for name, section in _section(data, "forms").items()
    }
    maps = {
        name: builder.map(name, section)
        for name, section in _section(data, "maps").items()
    }
    builder.forms = forms
    builder.maps = maps
    fibrations = {
        name: builder.fibration(name, section)
        for name, section in _section(data, "fibrations").items()
    }
    builder.fibrations = fibrations
    families = {
        name: builder.family(name, section)
        for name, section in _section(data, "families").items()
    }
    sums = {
        name: builder.sum(name, section)
        for name, section in _section(data, "sums").items()
    }
    run = data.get("run", [])
    if not isinstance(run, list):
        raise ScenarioError("'run' must be an array of task tables")
    known = {
        "verify_contact": ("form",),
        "verify_exact_symplectic": ("form",),
        "potential": ("map", "form"),
        "assemble": ("fibration",),
        "find_K": ("fibration",),
        "family": ("family",),
        "fiber_sum": ("sum",),
    }
    names = {
        "form": forms,
        "map": maps,
        "fibration": fibrations,
        "family": families,
        "sum": sums,
    }
    for i, task in enumerate(run):
        kind = task.get("task")
        if kind not in known:
            raise ScenarioError(
                f"run[{i}]: unknown task {kind!r} (expected one of {sorted(known)})"
            )
        for ref in known[kind]:
            target = task.get(ref)
            if target is None:
                raise ScenarioError(f"run[{i}] ({kind}): missing {ref!r} reference")
            if target not in names[ref]:
                raise ScenarioError(
                    f"run[{i}] ({kind}): dangling reference {ref}={target!r}"
                )
    return ScenarioDocument(
        title=title,
        path=path,
        seed=seed,
        charts=charts,
        forms=forms,
        maps=maps,
        fibrations=fibrations,
        families=families,
        sums=sums,
        run=list(run),
        digest=digest,
        raw=data,
    )


def _section(data: dict, key: str) -> dict:
    section = data.get(key, {})
    if not isinstance(section, dict):
        raise ScenarioError(f"section {key!r} must be a table of named entries")
    return section


def _build_chart(name: str, section: dict) -> Chart:
    try:
        coords = tuple(section["coords"])
        bounds = tuple(
            (parse_number(lo), parse_number(hi)) for lo, hi in section["bounds"]
        )
        periodic = tuple(section.get("periodic", (False,) * len(coords)))
        sign = int(section.get("orientation", 1))
        return Chart(name, coords, bounds, periodic, sign)
    except (KeyError, ParseError, ValueError, TypeError) as e:
        raise ScenarioError(f"charts.{name}: {e}") from None


class _Builder:
    def __init__(self, charts: Dict[str, Chart]):
        self.charts = charts
        self.forms: Dict[str, DifferentialForm] = {}
        self.maps: Dict[str, SmoothMap] = {}
        self.fibrations: Dict[str, FibrationSpec] = {}

    def chart(self, where: str, name: str) -> Chart:
        try:
            return self.charts[name]
        except KeyError:
            raise ScenarioError(f"{where}: dangling reference to chart {name!r}") from None

    def form(self, name: str, section: dict) -> DifferentialForm:
        where = f"forms.{name}"
        chart = self.chart(where, section.get("chart", ""))
        try:
            return parse_form(str(section["expr"]), chart)
        except (KeyError, ParseError, ValueError) as e:
            raise ScenarioError(f"{where}: {e}") from None

    def map(self, name: str, section: dict) -> SmoothMap:
        where = f"maps.{name}"
        source = self.chart(where, section.get("source", ""))
        target = self.chart(where, section.get("target", ""))
        try:
            comps = tuple(parse_scalar(str(c)) for c in section["components"])
            return SmoothMap(source, target, comps)
        except (KeyError, ParseError, ValueError) as e:
            raise ScenarioError(f"{where}: {e}") from None

    def named_form(self, where: str, name: str) -> DifferentialForm:
        try:
            return self.forms[name]
        except KeyError:
            raise ScenarioError(f"{where}: dangling reference to form {name!r}") from None

    def named_map(self, where: str, name: str) -> SmoothMap:
        try:
            return self.maps[name]
        except KeyError:
            raise ScenarioError(f"{where}: dangling reference to map {name!r}") from None

    def _exclusions(self, entries) -> Tuple[Exclusion, ...]:
        out = []
        for coord, lo, hi in entries or ():
            out.append(Exclusion(str(coord), parse_number(lo), parse_number(hi)))
        return tuple(out)

    def _boundaries(self, entries) -> Tuple[OutwardBoundary, ...]:
        out = []
        for entry in entries or ():
            kind = entry.get("kind")
            if kind == "face":
                out.append(
                    OutwardBoundary(kind="face", coord=entry["coord"], side=entry.get("side", "upper"))
                )
            elif kind == "sphere":
                out.append(
                    OutwardBoundary(
                        kind="sphere",
                        coords=tuple(entry["coords"]),
                        radius=parse_number(entry.get("radius", 1.0)),
                    )
                )
            else:
                raise ScenarioError(f"unknown boundary kind {kind!r}")
        return tuple(out)

    def fibration(self, name: str, section: dict) -> FibrationSpec:
        where = f"fibrations.{name}"
        try:
            fiber = self.chart(where, section["fiber"])
            beta = self.named_form(where, section["beta"])
            pieces = []
            for entry in section["pieces"]:
                chart = self.chart(where, entry["chart"])
                if "bounds" in entry:
                    bounds = [
                        (parse_number(lo), parse_number(hi)) for lo, hi in entry["bounds"]
                    ]
                    chart = chart.with_bounds(bounds, name=entry["name"])
                mu = self.named_form(where, entry["mu"])
                mu = DifferentialForm(chart, 1, mu.coeffs)
                keep = parse_scalar(entry["keep"]) if "keep" in entry else None
                pieces.append(
                    BasePiece(
                        name=entry["name"],
                        chart=chart,
                        mu=mu,
                        keep=keep,
                        exclusions=self._exclusions(entry.get("exclusions")),
                    )
                )
            collars = []
            for entry in section.get("collars", []):
                chart = self.chart(where, entry["chart"])
                collars.append(
                    Collar(
                        name=entry["name"],
                        chart=chart,
                        transverse=entry["transverse"],
                        epsilon=parse_number(entry["epsilon"]),
                        delta=parse_number(entry["delta"]),
                        inner_piece=entry["inner"],
                        outer_piece=entry["outer"],
                        embed_inner=self.named_map(where, entry["embed_inner"]),
                        embed_outer=self.named_map(where, entry["embed_outer"]),
                        potential=parse_scalar(str(entry.get("potential", "0"))),
                        profile_kind=entry.get("profile", "two_sided"),
                        exclusions=self._exclusions(entry.get("exclusions")),
                    )
                )
            boundary_keep = (
                parse_scalar(section["boundary_keep"]) if "boundary_keep" in section else None
            )
            return FibrationSpec(
                name=name,
                fiber=fiber,
                beta=beta,
                pieces=tuple(pieces),
                collars=tuple(collars),
                fiber_boundaries=self._boundaries(section.get("fiber_boundaries")),
                fiber_exclusions=self._exclusions(section.get("fiber_exclusions")),
                horizontal_boundary_trivial=bool(
                    section.get("horizontal_boundary_trivial", False)
                ),
                boundary_keep=boundary_keep,
            )
        except ScenarioError:
            raise
        except (KeyError, ParseError, ValueError, TypeError) as e:
            raise ScenarioError(f"{where}: {e}") from None

    def family(self, name: str, section: dict) -> ContactFamily:
        where = f"families.{name}"
        chart = self.chart(where, section.get("chart", ""))
        try:
            form = parse_form(str(section["expr"]), chart)
            return ContactFamily(chart, form, label=section.get("label", name))
        except (KeyError, ParseError, ValueError) as e:
            raise ScenarioError(f"{where}: {e}") from None

    def sum(self, name: str, section: dict) -> SumSpec:
        where = f"sums.{name}"
        try:
            left = self.fibrations[section["left"]]
            right = self.fibrations[section["right"]]
        except KeyError as e:
            raise ScenarioError(f"{where}: dangling reference to fibration {e}") from None
        try:
            n = int(section["n"])
            epsilon = parse_number(section["epsilon"])
            left_piece = section.get("left_piece", left.pieces[0].name)
            right_piece = section.get("right_piece", right.pieces[0].name)
            fid = None
            if "fiber_identification" in section:
                fid = self.named_map(where, section["fiber_identification"])
            left_dc = DarbouxChart(n, epsilon, left.piece(left_piece).chart)
            right_dc = DarbouxChart(n, epsilon, right.piece(right_piece).chart)
            return SumSpec(
                left=left,
                right=right,
                left_piece=left_piece,
                right_piece=right_piece,
                left_darboux=left_dc,
                right_darboux=right_dc,
                epsilon=epsilon,
                left_center=tuple(section.get("left_center", ())),
                right_center=tuple(section.get("right_center", ())),
                fiber_identification=fid,
            )
        except ScenarioError:
            raise
        except (KeyError, ParseError, ValueError, TypeError) as e:
            raise ScenarioError(f"{where}: {e}") from None
