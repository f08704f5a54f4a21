"""Polynomial normal form and symbolic differentiation over the term language.

Monomials range over named symbols plus opaque trig generators (sin/cos of a
term are treated as fresh generators, so like-term collection works without any
trigonometric rewriting).  Coefficients are exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .syntax import (
    Add, Cos, Div, Mul, Neg, Norm, Parameter, Pow, RationalConst, Sin, Sub,
    Term, Variable, print_term, _rat_str,
)


@dataclass(frozen=True)
class Gen:
    """A monomial generator: a plain name or a trig atom."""
    kind: str            # "sym" | "sin" | "cos"
    name: str = ""
    arg: Optional[Term] = None

    def key(self):
        return (self.kind, self.name, print_term(self.arg) if self.arg is not None else "")

    def to_term(self) -> Term:
        if self.kind == "sym":
            # Symbol class is irrelevant for evaluation; re-created as needed.
            return Parameter(self.name)
        if self.kind == "sin":
            return Sin(self.arg)
        return Cos(self.arg)


Monomial = tuple[tuple[Gen, int], ...]   # sorted by generator key


class NotPolynomial(Exception):
    pass


class Poly:
    """Sparse polynomial: mapping monomial -> nonzero rational coefficient."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Optional[dict[Monomial, Fraction]] = None):
        self.coeffs: dict[Monomial, Fraction] = {}
        if coeffs:
            for m, c in coeffs.items():
                if c != 0:
                    self.coeffs[m] = Fraction(c)

    # -- constructors

    @staticmethod
    def const(c) -> "Poly":
        c = Fraction(c)
        return Poly({(): c} if c else {})

    @staticmethod
    def gen(g: Gen) -> "Poly":
        return Poly({((g, 1),): Fraction(1)})

    @staticmethod
    def symbol(name: str) -> "Poly":
        return Poly.gen(Gen("sym", name))

    # -- ring operations

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out.get(m, Fraction(0)) + c
        return Poly(out)

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.coeffs.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other: "Poly") -> "Poly":
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.coeffs.items():
            for m2, c2 in other.coeffs.items():
                m = _mul_monomials(m1, m2)
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return Poly(out)

    def scale(self, c) -> "Poly":
        c = Fraction(c)
        return Poly({m: cc * c for m, cc in self.coeffs.items()})

    def power(self, n: int) -> "Poly":
        out = Poly.const(1)
        for _ in range(n):
            out = out * self
        return out

    # -- queries

    def is_zero(self) -> bool:
        return not self.coeffs

    def constant_value(self) -> Optional[Fraction]:
        if not self.coeffs:
            return Fraction(0)
        if len(self.coeffs) == 1 and () in self.coeffs:
            return self.coeffs[()]
        return None

    def symbols(self) -> frozenset[str]:
        out = set()
        for m in self.coeffs:
            for g, _ in m:
                if g.kind == "sym":
                    out.add(g.name)
                else:
                    out |= {s for s in _term_syms(g.arg)}
        return frozenset(out)

    def has_trig(self) -> bool:
        return any(g.kind != "sym" for m in self.coeffs for g, _ in m)

    def coefficient(self, powers: dict[str, int]) -> Fraction:
        """Coefficient of the pure-symbol monomial with the given exponents."""
        target = tuple(sorted(((Gen("sym", n), e) for n, e in powers.items() if e),
                              key=lambda p: p[0].key()))
        return self.coeffs.get(target, Fraction(0))

    def total_degree(self) -> int:
        return max((sum(e for _, e in m) for m in self.coeffs), default=0)

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def __repr__(self):
        return f"Poly({self.pretty()})"

    # -- back to terms / display

    def _ordered(self) -> list[tuple[Monomial, Fraction]]:
        def rank(item):
            m, _ = item
            deg = sum(e for _, e in m)
            # graded order, highest degree first; within a degree, earlier
            # generators (e.g. th before w) carry higher exponents first
            exps = tuple(-e for _, e in m)
            keys = tuple(g.key() for g, _ in m)
            return (-deg, keys, exps)
        return sorted(self.coeffs.items(), key=rank)

    def to_term(self, variables: Iterable[str] = ()) -> Term:
        """Canonical AST (sum of coefficient*monomial in canonical order)."""
        vs = frozenset(variables)

        def sym_term(g: Gen) -> Term:
            if g.kind == "sym":
                return Variable(g.name) if g.name in vs else Parameter(g.name)
            return g.to_term()

        def mono_term(m: Monomial, c: Fraction) -> Term:
            factors: list[Term] = []
            for g, e in m:
                base = sym_term(g)
                factors.append(Pow(base, e) if e > 1 else base)
            if not factors:
                return RationalConst(c)
            t: Term = factors[0]
            for fct in factors[1:]:
                t = Mul(t, fct)
            if c == 1:
                return t
            return Mul(RationalConst(c), t)

        items = self._ordered()
        if not items:
            return RationalConst(Fraction(0))
        out = mono_term(*items[0])
        for m, c in items[1:]:
            if c < 0:
                out = Sub(out, mono_term(m, -c))
            else:
                out = Add(out, mono_term(m, c))
        return out

    def pretty(self) -> str:
        """Human-oriented normalized rendering, e.g. '-13.8*th^2 - 1.5*w^2'."""
        items = self._ordered()
        if not items:
            return "0"
        parts: list[str] = []
        for i, (m, c) in enumerate(items):
            mono = "*".join(
                (g.name if g.kind == "sym" else print_term(g.to_term())) +
                (f"^{e}" if e > 1 else "")
                for g, e in m)
            mag = abs(c)
            if not mono:
                body = _rat_str(mag)
            elif mag == 1:
                body = mono
            else:
                body = f"{_rat_str(mag)}*{mono}"
            if i == 0:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)


def _mul_monomials(a: Monomial, b: Monomial) -> Monomial:
    exps: dict[tuple, tuple[Gen, int]] = {}
    for g, e in a + b:
        k = g.key()
        if k in exps:
            exps[k] = (g, exps[k][1] + e)
        else:
            exps[k] = (g, e)
    return tuple(sorted(exps.values(), key=lambda p: p[0].key()))


def _term_syms(t: Term) -> frozenset[str]:
    from .syntax import term_symbols
    return term_symbols(t)


def term_to_poly(t: Term) -> Poly:
    """Expand + collect like terms; sin/cos become opaque generators.
    Norm is not polynomial and raises."""
    if isinstance(t, (Variable, Parameter)):
        return Poly.symbol(t.name)
    if isinstance(t, RationalConst):
        return Poly.const(t.value)
    if isinstance(t, Neg):
        return -term_to_poly(t.arg)
    if isinstance(t, Add):
        return term_to_poly(t.left) + term_to_poly(t.right)
    if isinstance(t, Sub):
        return term_to_poly(t.left) - term_to_poly(t.right)
    if isinstance(t, Mul):
        return term_to_poly(t.left) * term_to_poly(t.right)
    if isinstance(t, Div):
        return term_to_poly(t.left).scale(Fraction(1) / t.right.value)
    if isinstance(t, Pow):
        return term_to_poly(t.base).power(t.exponent)
    if isinstance(t, Sin):
        return Poly.gen(Gen("sin", arg=t.arg))
    if isinstance(t, Cos):
        return Poly.gen(Gen("cos", arg=t.arg))
    if isinstance(t, Norm):
        raise NotPolynomial("norm is not a polynomial term")
    raise TypeError(f"not a term: {t!r}")


def normalize(t: Term, variables: Iterable[str] = ()) -> Term:
    return term_to_poly(t).to_term(variables)


def diff_term(t: Term, var: str) -> Term:
    """Symbolic partial derivative d t / d var (sin/cos by chain rule)."""
    zero = RationalConst(Fraction(0))
    if isinstance(t, (Variable, Parameter)):
        return RationalConst(Fraction(1)) if t.name == var else zero
    if isinstance(t, RationalConst):
        return zero
    if isinstance(t, Neg):
        return Neg(diff_term(t.arg, var))
    if isinstance(t, Add):
        return Add(diff_term(t.left, var), diff_term(t.right, var))
    if isinstance(t, Sub):
        return Sub(diff_term(t.left, var), diff_term(t.right, var))
    if isinstance(t, Mul):
        return Add(Mul(diff_term(t.left, var), t.right),
                   Mul(t.left, diff_term(t.right, var)))
    if isinstance(t, Div):
        return Div(diff_term(t.left, var), t.right)
    if isinstance(t, Pow):
        if t.exponent == 0:
            return zero
        return Mul(Mul(RationalConst(Fraction(t.exponent)), Pow(t.base, t.exponent - 1)),
                   diff_term(t.base, var))
    if isinstance(t, Sin):
        return Mul(Cos(t.arg), diff_term(t.arg, var))
    if isinstance(t, Cos):
        return Neg(Mul(Sin(t.arg), diff_term(t.arg, var)))
    if isinstance(t, Norm):
        raise NotPolynomial("norm is not differentiable in this fragment")
    raise TypeError(f"not a term: {t!r}")


def quadratic_form_coeffs(p: Poly, x: str, y: str) -> Optional[tuple[Fraction, Fraction, Fraction]]:
    """If p is a homogeneous quadratic c_xx*x^2 + c_xy*x*y + c_yy*y^2 with
    constant rational coefficients, return (c_xx, c_xy, c_yy); else None."""
    if p.has_trig():
        return None
    cxx = cxy = cyy = Fraction(0)
    for m, c in p.coeffs.items():
        powers = {g.name: e for g, e in m}
        if set(powers) - {x, y}:
            return None
        ex, ey = powers.get(x, 0), powers.get(y, 0)
        if (ex, ey) == (2, 0):
            cxx = c
        elif (ex, ey) == (1, 1):
            cxy = c
        elif (ex, ey) == (0, 2):
            cyy = c
        else:
            return None
    return (cxx, cxy, cyy)
