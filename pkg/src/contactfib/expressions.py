"""Closed-form scalar expressions over chart coordinates.

Expression trees support exact symbolic partial differentiation, vectorized
numeric evaluation with numpy, substitution, and a canonical expanded normal
form used for structural equality and exact cancellation.  Coefficient
arithmetic in the normal form runs over ``fractions.Fraction`` (every float is
an exact rational), so purely rational computations cancel exactly.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Real
from typing import Mapping, Union

import numpy as np

Number = Union[int, float, Fraction]
ExprLike = Union["Expr", int, float, Fraction]

# Function kinds closed under differentiation.  "grecip" is the guarded
# reciprocal 1/x for x > 0, 0 otherwise; it makes derivatives of "bump"
# expressible without unguarded division at the gluing point.
_FUNC_KINDS = ("sin", "cos", "exp", "sqrt", "bump", "grecip")


def as_expr(x: ExprLike) -> "Expr":
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, Fraction)):
        return Const(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to Expr")


class Expr:
    __slots__ = ("_hash",)

    # -- arithmetic sugar ---------------------------------------------------

    def __add__(self, other: ExprLike) -> "Expr":
        return add(self, as_expr(other))

    def __radd__(self, other: ExprLike) -> "Expr":
        return add(as_expr(other), self)

    def __sub__(self, other: ExprLike) -> "Expr":
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other: ExprLike) -> "Expr":
        return add(as_expr(other), neg(self))

    def __mul__(self, other: ExprLike) -> "Expr":
        return mul(self, as_expr(other))

    def __rmul__(self, other: ExprLike) -> "Expr":
        return mul(as_expr(other), self)

    def __truediv__(self, other: ExprLike) -> "Expr":
        return div(self, as_expr(other))

    def __rtruediv__(self, other: ExprLike) -> "Expr":
        return div(as_expr(other), self)

    def __pow__(self, k: int) -> "Expr":
        return power(self, k)

    def __neg__(self) -> "Expr":
        return neg(self)

    # -- core protocol (overridden per node) ---------------------------------

    def diff(self, coord: str) -> "Expr":
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, object]):
        raise NotImplementedError

    def substitute(self, mapping: Mapping[str, "Expr"]) -> "Expr":
        raise NotImplementedError

    def variables(self) -> frozenset:
        raise NotImplementedError

    def sort_key(self) -> tuple:
        raise NotImplementedError

    def children(self) -> tuple:
        return ()

    def simplified(self) -> "Expr":
        return _rebuild(_normalize(self))

    def is_zero(self) -> bool:
        """True iff the canonical normal form is the zero constant."""
        return not _normalize(self)

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return type(self) is type(other) and self._payload() == other._payload()

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash((type(self).__name__, self._payload()))
            self._hash = h
        return h

    def _payload(self) -> tuple:
        raise NotImplementedError


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Number):
        self._hash = None
        if isinstance(value, Fraction):
            self.value = value
        elif isinstance(value, int):
            self.value = Fraction(value)
        elif isinstance(value, float):
            if not math.isfinite(value):
                raise ValueError(f"non-finite constant {value!r}")
            self.value = Fraction(value)
        else:
            raise TypeError(f"bad constant {value!r}")

    def diff(self, coord: str) -> Expr:
        return ZERO

    def evaluate(self, env):
        return float(self.value)

    def substitute(self, mapping):
        return self

    def variables(self):
        return frozenset()

    def sort_key(self):
        return (0, float(self.value), str(self.value))

    def _payload(self):
        return (self.value,)

    def __repr__(self):
        return format_number(self.value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self._hash = None
        if not name or not isinstance(name, str):
            raise ValueError(f"bad variable name {name!r}")
        self.name = name

    def diff(self, coord: str) -> Expr:
        return ONE if coord == self.name else ZERO

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise ValueError(f"no value bound for variable {self.name!r}") from None

    def substitute(self, mapping):
        return mapping.get(self.name, self)

    def variables(self):
        return frozenset((self.name,))

    def sort_key(self):
        return (1, self.name)

    def _payload(self):
        return (self.name,)

    def __repr__(self):
        return self.name


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: tuple):
        self._hash = None
        self.terms = terms

    def diff(self, coord):
        return add(*(t.diff(coord) for t in self.terms))

    def evaluate(self, env):
        total = self.terms[0].evaluate(env)
        for t in self.terms[1:]:
            total = total + t.evaluate(env)
        return total

    def substitute(self, mapping):
        return add(*(t.substitute(mapping) for t in self.terms))

    def variables(self):
        return frozenset().union(*(t.variables() for t in self.terms))

    def sort_key(self):
        return (2, tuple(t.sort_key() for t in self.terms))

    def children(self):
        return self.terms

    def _payload(self):
        return self.terms

    def __repr__(self):
        return "(" + " + ".join(map(repr, self.terms)) + ")"


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: tuple):
        self._hash = None
        self.factors = factors

    def diff(self, coord):
        terms = []
        for i, f in enumerate(self.factors):
            rest = self.factors[:i] + self.factors[i + 1 :]
            terms.append(mul(f.diff(coord), *rest))
        return add(*terms)

    def evaluate(self, env):
        total = self.factors[0].evaluate(env)
        for f in self.factors[1:]:
            total = total * f.evaluate(env)
        return total

    def substitute(self, mapping):
        return mul(*(f.substitute(mapping) for f in self.factors))

    def variables(self):
        return frozenset().union(*(f.variables() for f in self.factors))

    def sort_key(self):
        return (3, tuple(f.sort_key() for f in self.factors))

    def children(self):
        return self.factors

    def _payload(self):
        return self.factors

    def __repr__(self):
        return "*".join(f"({f!r})" if isinstance(f, Add) else repr(f) for f in self.factors)


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: int):
        self._hash = None
        if not isinstance(exponent, int):
            raise TypeError("Pow exponent must be an integer")
        self.base = base
        self.exponent = exponent

    def diff(self, coord):
        k = self.exponent
        return mul(Const(k), power(self.base, k - 1), self.base.diff(coord))

    def evaluate(self, env):
        base = self.base.evaluate(env)
        if self.exponent < 0:
            return np.asarray(base, dtype=float) ** self.exponent
        return base ** self.exponent

    def substitute(self, mapping):
        return power(self.base.substitute(mapping), self.exponent)

    def variables(self):
        return self.base.variables()

    def sort_key(self):
        return (4, self.base.sort_key(), self.exponent)

    def children(self):
        return (self.base,)

    def _payload(self):
        return (self.base, self.exponent)

    def __repr__(self):
        base = f"({self.base!r})" if isinstance(self.base, (Add, Mul)) else repr(self.base)
        if self.exponent < 0:
            return f"{base}^({self.exponent})"
        return f"{base}^{self.exponent}"


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num: Expr, den: Expr):
        self._hash = None
        self.num = num
        self.den = den

    def diff(self, coord):
        u, v = self.num, self.den
        return div(u.diff(coord) * v - u * v.diff(coord), power(v, 2))

    def evaluate(self, env):
        return self.num.evaluate(env) / self.den.evaluate(env)

    def substitute(self, mapping):
        return div(self.num.substitute(mapping), self.den.substitute(mapping))

    def variables(self):
        return self.num.variables() | self.den.variables()

    def sort_key(self):
        return (5, self.num.sort_key(), self.den.sort_key())

    def children(self):
        return (self.num, self.den)

    def _payload(self):
        return (self.num, self.den)

    def __repr__(self):
        num = f"({self.num!r})" if isinstance(self.num, (Add, Mul)) else repr(self.num)
        den = f"({self.den!r})" if not isinstance(self.den, (Const, Var)) else repr(self.den)
        return f"{num}/{den}"


class Func(Expr):
    __slots__ = ("kind", "arg")

    def __init__(self, kind: str, arg: Expr):
        self._hash = None
        if kind not in _FUNC_KINDS:
            raise ValueError(f"unknown function {kind!r}")
        self.kind = kind
        self.arg = arg

    def diff(self, coord):
        u = self.arg
        du = u.diff(coord)
        if self.kind == "sin":
            outer = Func("cos", u)
        elif self.kind == "cos":
            outer = neg(Func("sin", u))
        elif self.kind == "exp":
            outer = self
        elif self.kind == "sqrt":
            outer = div(Const(Fraction(1, 2)), self)
        elif self.kind == "bump":
            # bump(u) = exp(-1/u) for u > 0, 0 otherwise; all one-sided
            # derivatives at 0 vanish, matching the guarded evaluation.
            outer = mul(self, power(Func("grecip", u), 2))
        else:  # grecip
            outer = neg(power(Func("grecip", u), 2))
        return mul(outer, du)

    def evaluate(self, env):
        x = self.arg.evaluate(env)
        if self.kind == "sin":
            return np.sin(x)
        if self.kind == "cos":
            return np.cos(x)
        if self.kind == "exp":
            return np.exp(x)
        if self.kind == "sqrt":
            return np.sqrt(x)
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            if self.kind == "bump":
                raw = np.exp(-1.0 / x)
            else:  # grecip
                raw = 1.0 / x
        out = np.where(x > 0.0, raw, 0.0)
        return out if out.ndim else float(out)

    def substitute(self, mapping):
        return Func(self.kind, self.arg.substitute(mapping))

    def variables(self):
        return self.arg.variables()

    def sort_key(self):
        return (6, self.kind, self.arg.sort_key())

    def children(self):
        return (self.arg,)

    def _payload(self):
        return (self.kind, self.arg)

    def __repr__(self):
        return f"{self.kind}({self.arg!r})"


ZERO = Const(0)
ONE = Const(1)
PI = Const(math.pi)


# -- smart constructors (light folding, canonical flattening) ----------------


def add(*terms: Expr) -> Expr:
    flat: list = []
    const = Fraction(0)
    for t in terms:
        if isinstance(t, Const):
            const += t.value
        elif isinstance(t, Add):
            for s in t.terms:
                if isinstance(s, Const):
                    const += s.value
                else:
                    flat.append(s)
        else:
            flat.append(t)
    if const != 0:
        flat.append(Const(const))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def mul(*factors: Expr) -> Expr:
    flat: list = []
    const = Fraction(1)
    for f in factors:
        if isinstance(f, Const):
            const *= f.value
        elif isinstance(f, Mul):
            for g in f.factors:
                if isinstance(g, Const):
                    const *= g.value
                else:
                    flat.append(g)
        else:
            flat.append(f)
    if const == 0:
        return ZERO
    if const != 1:
        flat.insert(0, Const(const))
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    return Mul(tuple(flat))


def neg(e: Expr) -> Expr:
    return mul(Const(-1), e)


def power(base: Expr, k: int) -> Expr:
    if not isinstance(k, int):
        raise TypeError("exponent must be an integer")
    if k == 0:
        return ONE
    if k == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value ** k)
    if isinstance(base, Pow):
        return power(base.base, base.exponent * k)
    return Pow(base, k)


def div(num: Expr, den: Expr) -> Expr:
    if isinstance(den, Const):
        if den.value == 0:
            raise ZeroDivisionError("division by constant zero")
        return mul(Const(1 / den.value), num)
    if isinstance(num, Const) and num.value == 0:
        return ZERO
    return Div(num, den)


def sin(x: ExprLike) -> Expr:
    return _fold_func("sin", as_expr(x))


def cos(x: ExprLike) -> Expr:
    return _fold_func("cos", as_expr(x))


def exp(x: ExprLike) -> Expr:
    return _fold_func("exp", as_expr(x))


def sqrt(x: ExprLike) -> Expr:
    return _fold_func("sqrt", as_expr(x))


def bump(x: ExprLike) -> Expr:
    return _fold_func("bump", as_expr(x))


def grecip(x: ExprLike) -> Expr:
    return _fold_func("grecip", as_expr(x))


def _fold_func(kind: str, arg: Expr) -> Expr:
    if isinstance(arg, Const):
        v = arg.value
        if kind == "sin" and v == 0:
            return ZERO
        if kind == "cos" and v == 0:
            return ONE
        if kind == "exp" and v == 0:
            return ONE
        if kind == "sqrt":
            if v < 0:
                raise ValueError("sqrt of negative constant")
            root = _exact_sqrt(v)
            if root is not None:
                return Const(root)
        if kind in ("bump", "grecip") and v <= 0:
            return ZERO
        if kind == "grecip" and v > 0:
            return Const(1 / v)
    return Func(kind, arg)


def _exact_sqrt(v: Fraction):
    if v < 0:
        return None
    pn, pd = math.isqrt(v.numerator), math.isqrt(v.denominator)
    if pn * pn == v.numerator and pd * pd == v.denominator:
        return Fraction(pn, pd)
    return None


# -- canonical normal form ----------------------------------------------------
#
# A polynomial over "atoms": dict mapping a monomial (sorted tuple of
# (atom, integer exponent)) to a Fraction coefficient.  Atoms are variables,
# function applications with normalized arguments, or irreducible rebuilt
# subexpressions (e.g. a sum appearing in a denominator).

_Poly = dict


def _poly_const(c: Fraction) -> _Poly:
    return {(): c} if c != 0 else {}


def _poly_add(a: _Poly, b: _Poly) -> _Poly:
    out = dict(a)
    for m, c in b.items():
        s = out.get(m, Fraction(0)) + c
        if s:
            out[m] = s
        else:
            out.pop(m, None)
    return out


def _poly_mul(a: _Poly, b: _Poly) -> _Poly:
    out: _Poly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m, extra = _mono_mul(m1, m2)
            c = c1 * c2
            if extra:
                for m3, c3 in _poly_mul({m: c}, extra).items():
                    s = out.get(m3, Fraction(0)) + c3
                    if s:
                        out[m3] = s
                    else:
                        out.pop(m3, None)
                continue
            s = out.get(m, Fraction(0)) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
    return out


def _mono_mul(m1, m2):
    """Merge two monomials; sqrt atoms with even exponents reduce to their
    argument, which can reintroduce a polynomial factor (returned separately)."""
    exps: dict = {}
    for atom, k in m1 + m2:
        exps[atom] = exps.get(atom, 0) + k
    parts = []
    extra: _Poly | None = None
    for atom, k in exps.items():
        if k == 0:
            continue
        if isinstance(atom, Func) and atom.kind == "sqrt" and abs(k) >= 2:
            q, r = divmod(k, 2)
            inner = _poly_pow_signed(_normalize(atom.arg), q)
            extra = inner if extra is None else _poly_mul(extra, inner)
            if r:
                parts.append((atom, r))
        else:
            parts.append((atom, k))
    mono = tuple(sorted(parts, key=lambda p: (p[0].sort_key(), p[1])))
    return mono, extra


def _poly_pow_signed(p: _Poly, k: int) -> _Poly:
    if k == 0:
        return _poly_const(Fraction(1))
    if k > 0:
        out = _poly_const(Fraction(1))
        for _ in range(k):
            out = _poly_mul(out, p)
        return out
    # negative power: invertible only for a single monomial
    if len(p) == 1:
        (mono, coeff), = p.items()
        inv_mono = tuple((atom, -e) for atom, e in mono)
        out = {inv_mono: Fraction(1) / coeff}
        return _poly_pow_signed(out, -k)
    atom = _rebuild(p)
    return {((atom, k),): Fraction(1)}


def _atom_poly(atom: Expr) -> _Poly:
    return {((atom, 1),): Fraction(1)}


def _normalize(e: Expr) -> _Poly:
    cached = _NORMAL_CACHE.get(e)
    if cached is not None:
        return cached
    if isinstance(e, Const):
        out = _poly_const(e.value)
    elif isinstance(e, Var):
        out = _atom_poly(e)
    elif isinstance(e, Add):
        out = {}
        for t in e.terms:
            out = _poly_add(out, _normalize(t))
    elif isinstance(e, Mul):
        out = _poly_const(Fraction(1))
        for f in e.factors:
            out = _poly_mul(out, _normalize(f))
    elif isinstance(e, Pow):
        out = _poly_pow_signed(_normalize(e.base), e.exponent)
    elif isinstance(e, Div):
        den = _poly_pow_signed(_normalize(e.den), -1)
        out = _poly_mul(_normalize(e.num), den)
    elif isinstance(e, Func):
        folded = _fold_func(e.kind, _rebuild(_normalize(e.arg)))
        out = _normalize(folded) if not isinstance(folded, Func) else _atom_poly(folded)
    else:
        raise TypeError(f"cannot normalize {type(e).__name__}")
    _NORMAL_CACHE[e] = out
    return out


_NORMAL_CACHE: dict = {}


def _rebuild(p: _Poly) -> Expr:
    if not p:
        return ZERO
    terms = []
    for mono in sorted(p, key=lambda m: tuple((a.sort_key(), k) for a, k in m)):
        coeff = p[mono]
        factors = [] if coeff == 1 and mono else [Const(coeff)]
        for atom, k in mono:
            factors.append(atom if k == 1 else Pow(atom, k))
        terms.append(mul(*factors) if factors else ONE)
    return add(*terms)


# -- helpers ------------------------------------------------------------------


def format_number(v) -> str:
    """Render a Fraction/float compactly (ints without decimal point)."""
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        f = float(v)
        return repr(f)
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v)


def exprs_equal(a: Expr, b: Expr) -> bool:
    """Exact structural equality of canonical normal forms."""
    return (a - b).is_zero()


def evaluate_many(exprs, env):
    """Evaluate a sequence of expressions in one shared environment."""
    return [e.evaluate(env) for e in exprs]
