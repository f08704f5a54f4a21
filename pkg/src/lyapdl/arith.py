"""Arithmetic oracle: 2x2 quadratic-form analysis, witness synthesis for the
obligation patterns the stability proof generates, a seeded numeric falsifier,
and SMT-LIB export for anything unrecognized.

The trusted path is exact: rational Sylvester tests, eigenvalue bounds via
integer square roots with directed rounding, and witnesses validated both by
exact semidefiniteness checks and a 10^4-point sampling grid.  The falsifier is
a sanity layer, never a validity proof.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence, Union

from .syntax import (
    And, Box, Cmp, Cos, Diamond, Div, Exists, FalseF, Forall, Formula,
    HybridProgram, Implies, Mul, Neg, Norm, Not, Or, Parameter, Pow,
    RationalConst, Sequent, Sin, Sub, Term, TrueF, Variable, Add,
    free_symbols, print_formula, print_term, term_symbols,
)
from .polys import Poly, quadratic_form_coeffs, term_to_poly, NotPolynomial


# ---------------------------------------------------------------------------
# Quadratic forms


class Definiteness(Enum):
    POSITIVE_DEFINITE = "positive-definite"
    POSITIVE_SEMIDEFINITE = "positive-semidefinite"
    NEGATIVE_DEFINITE = "negative-definite"
    NEGATIVE_SEMIDEFINITE = "negative-semidefinite"
    INDEFINITE = "indefinite"
    ZERO = "zero"


@dataclass(frozen=True)
class QuadForm2:
    """Symmetric 2x2 form a11*x^2 + 2*a12*x*y + a22*y^2, exact rationals."""
    a11: Fraction
    a12: Fraction
    a22: Fraction

    def __post_init__(self):
        for f in ("a11", "a12", "a22"):
            object.__setattr__(self, f, Fraction(getattr(self, f)))

    @property
    def det(self) -> Fraction:
        return self.a11 * self.a22 - self.a12 * self.a12

    @property
    def trace(self) -> Fraction:
        return self.a11 + self.a22

    def value(self, x, y):
        return self.a11 * x * x + 2 * self.a12 * x * y + self.a22 * y * y

    def shifted(self, lam: Fraction) -> "QuadForm2":
        return QuadForm2(self.a11 - lam, self.a12, self.a22 - lam)

    @staticmethod
    def from_poly(p: Poly, x: str, y: str) -> Optional["QuadForm2"]:
        coeffs = quadratic_form_coeffs(p, x, y)
        if coeffs is None:
            return None
        cxx, cxy, cyy = coeffs
        return QuadForm2(cxx, cxy / 2, cyy)

    @staticmethod
    def from_term(t: Term, x: str, y: str) -> Optional["QuadForm2"]:
        try:
            p = term_to_poly(t)
        except NotPolynomial:
            return None
        if not (p.symbols() <= {x, y}):
            return None
        return QuadForm2.from_poly(p, x, y)


def sylvester_definiteness(q: QuadForm2) -> Definiteness:
    """Classify by leading entry and determinant (exact)."""
    det = q.det
    if det > 0:
        return (Definiteness.POSITIVE_DEFINITE if q.a11 > 0
                else Definiteness.NEGATIVE_DEFINITE)
    if det < 0:
        return Definiteness.INDEFINITE
    # det == 0: rank <= 1
    if q.a11 == 0 and q.a12 == 0 and q.a22 == 0:
        return Definiteness.ZERO
    if q.a11 > 0 or q.a22 > 0:
        return Definiteness.POSITIVE_SEMIDEFINITE
    return Definiteness.NEGATIVE_SEMIDEFINITE


def sqrt_bounds(x: Fraction, bits: int = 64) -> tuple[Fraction, Fraction]:
    """Rationals lo <= sqrt(x) <= hi with hi - lo <= 2^-bits * max(1, sqrt(x));
    exact (lo == hi) for perfect squares of rationals."""
    if x < 0:
        raise ValueError("sqrt of negative rational")
    if x == 0:
        return Fraction(0), Fraction(0)
    n, d = x.numerator, x.denominator
    r = math.isqrt(n * d)
    if r * r == n * d:
        s = Fraction(r, d)
        return s, s
    scale = 1 << bits
    lo_int = math.isqrt(n * d * scale * scale)
    lo = Fraction(lo_int, d * scale)
    hi = Fraction(lo_int + 1, d * scale)
    return lo, hi


def eigen_bounds(q: QuadForm2, bits: int = 64) -> tuple[Fraction, Fraction]:
    """(lam_lo, lam_hi) with lam_lo <= lambda_min and lambda_max <= lam_hi,
    certified by exact semidefiniteness of q - lam_lo*I and lam_hi*I - q."""
    disc = q.trace * q.trace - 4 * q.det    # (a11-a22)^2 + 4 a12^2 >= 0
    s_lo, s_hi = sqrt_bounds(disc, bits)
    lam_lo = (q.trace - s_hi) / 2
    lam_hi = (q.trace + s_hi) / 2
    shifted = q.shifted(lam_lo)
    assert shifted.a11 >= 0 and shifted.a22 >= 0 and shifted.det >= 0, \
        "eigen lower bound failed exact PSD certificate"
    shifted = QuadForm2(lam_hi - q.a11, -q.a12, lam_hi - q.a22)
    assert shifted.a11 >= 0 and shifted.a22 >= 0 and shifted.det >= 0, \
        "eigen upper bound failed exact PSD certificate"
    return lam_lo, lam_hi


def extremal_on_sphere(q: QuadForm2, r: Fraction) -> tuple[Fraction, Fraction]:
    """(min, max) of the form on the circle of radius r: lambda_min*r^2 and
    lambda_max*r^2, as certified rational bounds (min from below, max from
    above, within 2^-64 relative)."""
    r = Fraction(r)
    if r <= 0:
        raise ValueError("radius must be positive")
    lam_lo, lam_hi = eigen_bounds(q)
    return lam_lo * r * r, lam_hi * r * r


# ---------------------------------------------------------------------------
# Parameter boxes


@dataclass
class ParamBox:
    """Bounds per symbol, plus reference values used to report numeric
    certificate witnesses."""
    ranges: dict[str, tuple[Fraction, Fraction]] = field(default_factory=dict)
    refs: dict[str, Fraction] = field(default_factory=dict)

    def with_defaults(self, names: Sequence[str],
                      default: tuple[Fraction, Fraction]) -> "ParamBox":
        out = ParamBox(dict(self.ranges), dict(self.refs))
        for n in names:
            out.ranges.setdefault(n, default)
        return out

    def ref(self, name: str) -> Optional[Fraction]:
        if name in self.refs:
            return self.refs[name]
        if name in self.ranges:
            lo, hi = self.ranges[name]
            if lo == hi:
                return Fraction(lo)
        return None

    def range_of(self, name: str) -> Optional[tuple[Fraction, Fraction]]:
        return self.ranges.get(name)


class UnboundedQuantifierError(Exception):
    pass


class NotFirstOrderError(Exception):
    pass


class TrigNotSupportedError(Exception):
    pass


# ---------------------------------------------------------------------------
# Numeric evaluation


def eval_term(t: Term, env: dict[str, float]) -> float:
    if isinstance(t, (Variable, Parameter)):
        return env[t.name]
    if isinstance(t, RationalConst):
        return float(t.value)
    if isinstance(t, Neg):
        return -eval_term(t.arg, env)
    if isinstance(t, Add):
        return eval_term(t.left, env) + eval_term(t.right, env)
    if isinstance(t, Sub):
        return eval_term(t.left, env) - eval_term(t.right, env)
    if isinstance(t, Mul):
        return eval_term(t.left, env) * eval_term(t.right, env)
    if isinstance(t, Div):
        return eval_term(t.left, env) / float(t.right.value)
    if isinstance(t, Pow):
        return eval_term(t.base, env) ** t.exponent
    if isinstance(t, Sin):
        return math.sin(eval_term(t.arg, env))
    if isinstance(t, Cos):
        return math.cos(eval_term(t.arg, env))
    if isinstance(t, Norm):
        return math.hypot(*(eval_term(a, env) for a in t.args))
    raise TypeError(f"not a term: {t!r}")


_CMP_FUN = {
    "<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b, "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b, ">": lambda a, b: a > b,
}


def _quant_samples(lo: float, hi: float, rng: random.Random, n: int) -> list[float]:
    pts = [lo, hi, (lo + hi) / 2]
    if lo < 0 < hi:
        pts.append(0.0)
    pts += [rng.uniform(lo, hi) for _ in range(max(0, n - len(pts)))]
    return pts


def _norm_region_view(f: Forall):
    """Detect forall v1 forall v2: (norm(v1,v2) op r [and norm(v1,v2) op2 r2]
    [and other...]) -> body, so the pair can be sampled on the region instead
    of hoping box samples hit a measure-zero guard."""
    if not isinstance(f.body, Forall):
        return None
    v1, v2 = f.var, f.body.var
    hyps, concl = split_implications(f.body.body)
    if not hyps:
        return None
    norm_atoms: list[tuple[str, Term]] = []
    others: list[Formula] = []
    for h in hyps:
        na = _norm_atom(h, (v1, v2))
        if na is not None:
            norm_atoms.append(na)
        else:
            others.append(h)
    if not norm_atoms:
        return None
    return v1, v2, norm_atoms, others, concl


def _region_radii(norm_atoms, env, rng: random.Random, n: int) -> Optional[list[float]]:
    lo, hi = 0.0, None
    exact = None
    for op, r in norm_atoms:
        rv = eval_term(r, env)
        if op == "=":
            exact = rv
        elif op in ("<=", "<"):
            hi = rv if hi is None else min(hi, rv)
        elif op in (">", ">="):
            lo = max(lo, rv)
        else:
            return None
    if exact is not None:
        return [exact]
    if hi is None:
        hi = max(lo * 2, lo + 1.0)
    if hi < lo:
        return []
    return [lo + (hi - lo) * (i + 0.5) / n for i in range(n)] + \
           [lo + (hi - lo) * rng.random() for _ in range(n)]


def eval_formula(f: Formula, env: dict[str, float], box: ParamBox,
                 rng: random.Random, inner: int = 24) -> bool:
    """Approximate truth under an assignment; bounded quantifiers are sampled
    (forall may report true spuriously, so this is a falsifier, not a decision
    procedure).  Universal pairs guarded by norm constraints are sampled on the
    constraint region itself."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Cmp):
        return _CMP_FUN[f.op](eval_term(f.left, env), eval_term(f.right, env))
    if isinstance(f, Not):
        return not eval_formula(f.arg, env, box, rng, inner)
    if isinstance(f, And):
        return (eval_formula(f.left, env, box, rng, inner)
                and eval_formula(f.right, env, box, rng, inner))
    if isinstance(f, Or):
        return (eval_formula(f.left, env, box, rng, inner)
                or eval_formula(f.right, env, box, rng, inner))
    if isinstance(f, Implies):
        return (not eval_formula(f.left, env, box, rng, inner)
                or eval_formula(f.right, env, box, rng, inner))
    if isinstance(f, Forall):
        view = _norm_region_view(f)
        if view is not None:
            v1, v2, norm_atoms, others, concl = view
            radii = _region_radii(norm_atoms, env, rng, max(4, inner // 3))
            if radii is None:
                pass  # fall through to box sampling
            else:
                sub = dict(env)
                for r in radii:
                    for cx, cy in _circle_grid(max(8, inner)):
                        sub[v1], sub[v2] = r * cx, r * cy
                        if all(eval_formula(o, sub, box, rng, max(4, inner // 2))
                               for o in others):
                            if not eval_formula(concl, sub, box, rng,
                                                max(4, inner // 2)):
                                return False
                return True
    if isinstance(f, (Forall, Exists)):
        rng_ = box.range_of(f.var)
        if rng_ is None:
            raise UnboundedQuantifierError(
                f"quantified variable {f.var!r} has no declared box")
        lo, hi = float(rng_[0]), float(rng_[1])
        sub = dict(env)
        for s in _quant_samples(lo, hi, rng, inner):
            sub[f.var] = s
            ok = eval_formula(f.body, sub, box, rng, max(4, inner // 2))
            if isinstance(f, Forall) and not ok:
                return False
            if isinstance(f, Exists) and ok:
                return True
        return isinstance(f, Forall)
    if isinstance(f, (Box, Diamond)):
        raise NotFirstOrderError("modal formula is not first-order")
    raise TypeError(f"cannot evaluate {f!r}")


def falsify(f: Formula, bounds: ParamBox, n: int = 10_000,
            seed: int = 0) -> Optional[dict[str, float]]:
    """Search n pseudo-random assignments for a violation of f.  Returns a
    violating assignment or None; absence of a counterexample is NOT validity."""
    rng = random.Random(seed)
    free = sorted(free_symbols(f))
    for name in free:
        if bounds.range_of(name) is None:
            raise UnboundedQuantifierError(f"free symbol {name!r} has no declared box")
    if not free:
        return None if eval_formula(f, {}, bounds, rng) else {}
    for _ in range(n):
        env = {}
        for name in free:
            lo, hi = bounds.range_of(name)
            env[name] = rng.uniform(float(lo), float(hi))
        if not eval_formula(f, env, bounds, rng):
            return env
    return None


def sequent_formula(goal: Sequent) -> Formula:
    """The sequent's truth condition as one formula."""
    concl: Formula = FalseF()
    if goal.succ:
        concl = goal.succ[0]
        for s in goal.succ[1:]:
            concl = Or(concl, s)
    if not goal.ante:
        return concl
    hyp = goal.ante[0]
    for a in goal.ante[1:]:
        hyp = And(hyp, a)
    return Implies(hyp, concl)


# ---------------------------------------------------------------------------
# Exact ground evaluation (rational-only terms)


class _NotGround(Exception):
    pass


def eval_term_exact(t: Term, env: dict[str, Fraction]) -> Fraction:
    if isinstance(t, (Variable, Parameter)):
        if t.name not in env:
            raise _NotGround(t.name)
        return env[t.name]
    if isinstance(t, RationalConst):
        return t.value
    if isinstance(t, Neg):
        return -eval_term_exact(t.arg, env)
    if isinstance(t, Add):
        return eval_term_exact(t.left, env) + eval_term_exact(t.right, env)
    if isinstance(t, Sub):
        return eval_term_exact(t.left, env) - eval_term_exact(t.right, env)
    if isinstance(t, Mul):
        return eval_term_exact(t.left, env) * eval_term_exact(t.right, env)
    if isinstance(t, Div):
        return eval_term_exact(t.left, env) / t.right.value
    if isinstance(t, Pow):
        return eval_term_exact(t.base, env) ** t.exponent
    if isinstance(t, (Sin, Cos)):
        v = eval_term_exact(t.arg, env)
        if v == 0:
            return Fraction(0) if isinstance(t, Sin) else Fraction(1)
        raise _NotGround("trig")
    if isinstance(t, Norm):
        total = sum(eval_term_exact(a, env) ** 2 for a in t.args)
        lo, hi = sqrt_bounds(total)
        if lo == hi:
            return lo
        raise _NotGround("irrational norm")
    raise TypeError(f"not a term: {t!r}")


def eval_atom_exact(f: Cmp, env: dict[str, Fraction]) -> bool:
    return _CMP_FUN[f.op](eval_term_exact(f.left, env), eval_term_exact(f.right, env))


# ---------------------------------------------------------------------------
# Formula views used by the pattern matchers


def flatten_and(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return flatten_and(f.left) + flatten_and(f.right)
    return [f]


def strip_foralls(f: Formula) -> tuple[list[str], Formula]:
    names: list[str] = []
    while isinstance(f, Forall):
        names.append(f.var)
        f = f.body
    return names, f


def split_implications(f: Formula) -> tuple[list[Formula], Formula]:
    hyps: list[Formula] = []
    while isinstance(f, Implies):
        hyps.extend(flatten_and(f.left))
        f = f.right
    return hyps, f


def _symbol_name(t: Term) -> Optional[str]:
    return t.name if isinstance(t, (Variable, Parameter)) else None


def _norm_atom(f: Formula, vars2: Sequence[str]) -> Optional[tuple[str, Term]]:
    """Match Cmp(op, norm(v1, v2), radius) over exactly the given variables."""
    if isinstance(f, Cmp) and isinstance(f.left, Norm) and len(f.left.args) == len(vars2):
        names = [_symbol_name(a) for a in f.left.args]
        if names == list(vars2):
            return f.op, f.right
    return None


def _positive_in_context(t: Term, hyps: Sequence[Formula], box: ParamBox) -> bool:
    if isinstance(t, RationalConst):
        return t.value > 0
    name = _symbol_name(t)
    if name is None:
        return False
    for h in hyps:
        if (isinstance(h, Cmp) and h.op == ">" and _symbol_name(h.left) == name
                and isinstance(h.right, RationalConst) and h.right.value == 0):
            return True
        if (isinstance(h, Cmp) and h.op == "<" and _symbol_name(h.right) == name
                and isinstance(h.left, RationalConst) and h.left.value == 0):
            return True
    r = box.range_of(name)
    return r is not None and r[0] > 0


def _ref_value(t: Term, box: ParamBox, fallback: Fraction) -> Fraction:
    if isinstance(t, RationalConst):
        return t.value
    name = _symbol_name(t)
    if name is not None:
        r = box.ref(name)
        if r is not None:
            return r
    return fallback


# ---------------------------------------------------------------------------
# Witness certificates and decisions


@dataclass(frozen=True)
class WitnessCertificate:
    pattern: str                      # LevelsetK | DeltaBall | AnnulusMin | ProgressP | ...
    witness: Optional[Fraction]       # numeric witness at the reference point
    witness_term: str                 # symbolic witness, human-readable
    evidence: dict
    check: Optional[Formula] = None   # witness-instantiated obligation to falsify

    def describe(self) -> str:
        w = "" if self.witness is None else f" = {float(self.witness):.6g}"
        return f"{self.pattern}: witness {self.witness_term}{w}"


@dataclass(frozen=True)
class Decision:
    status: str                       # valid | counterexample | unknown
    certificate: Optional[WitnessCertificate] = None
    assignment: Optional[dict[str, float]] = None
    note: str = ""

    @property
    def is_valid(self) -> bool:
        return self.status == "valid"


GRID_N = 10_000
_SHRINK = Fraction(1023, 1024)        # (1 - 2^-10), keeps strict inequalities strict


def _circle_grid(n: int) -> list[tuple[float, float]]:
    return [(math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n))
            for i in range(n)]


_UNIT_CIRCLE = _circle_grid(GRID_N)


def _grid_check_sphere(q: QuadForm2, r: float, bound: float, op) -> int:
    """Count of grid points on the r-sphere where op(q(x), bound) fails."""
    bad = 0
    a11, a12, a22 = float(q.a11), float(q.a12), float(q.a22)
    for cx, cy in _UNIT_CIRCLE:
        x, y = r * cx, r * cy
        v = a11 * x * x + 2 * a12 * x * y + a22 * y * y
        if not op(v, bound):
            bad += 1
    return bad


def _form_of_quantified(body_vars: list[str], t: Term) -> Optional[QuadForm2]:
    if len(body_vars) != 2:
        return None
    return QuadForm2.from_term(t, body_vars[0], body_vars[1])


def decide(goal: Sequent, bounds: Optional[ParamBox] = None, seed: int = 0,
           falsifier_n: int = 2_000) -> Decision:
    """Decide a first-order sequent by the recognized obligation patterns,
    ground/interval evaluation and structural entailment; Unknown otherwise.
    Every Valid answer is re-checked by sampling before being returned."""
    box = bounds or ParamBox()
    for f in goal.ante + goal.succ:
        if _contains_modality(f):
            raise NotFirstOrderError("sequent contains a modality")

    hyps: list[Formula] = []
    for a in goal.ante:
        hyps.extend(flatten_and(a))

    decision = _decide_core(goal, hyps, box, seed)
    if decision is not None and decision.is_valid:
        _confirm(goal, box, seed, falsifier_n, decision)
        return decision
    if decision is not None:
        return decision

    # last resort: look for a counterexample
    try:
        cex = falsify(sequent_formula(goal), _with_state_defaults(goal, box),
                      n=falsifier_n, seed=seed)
    except UnboundedQuantifierError:
        return Decision("unknown", note="unbounded symbol; cannot sample")
    if cex is not None:
        return Decision("counterexample", assignment=cex)
    return Decision("unknown", note="no pattern matched; falsifier found nothing")


def _contains_modality(f: Formula) -> bool:
    if isinstance(f, (Box, Diamond)):
        return True
    if isinstance(f, (And, Or, Implies)):
        return _contains_modality(f.left) or _contains_modality(f.right)
    if isinstance(f, Not):
        return _contains_modality(f.arg)
    if isinstance(f, (Forall, Exists)):
        return _contains_modality(f.body)
    return False


def _with_state_defaults(goal: Sequent, box: ParamBox) -> ParamBox:
    names = set()
    for f in goal.ante + goal.succ:
        names |= free_symbols(f)
        names |= _quantified_names(f)
    return box.with_defaults(sorted(names), (Fraction(-1), Fraction(1)))


def _quantified_names(f: Formula) -> set[str]:
    if isinstance(f, (Forall, Exists)):
        return {f.var} | _quantified_names(f.body)
    if isinstance(f, (And, Or, Implies)):
        return _quantified_names(f.left) | _quantified_names(f.right)
    if isinstance(f, Not):
        return _quantified_names(f.arg)
    return set()


def _confirm(goal: Sequent, box: ParamBox, seed: int, n: int, decision: Decision):
    """Falsifier sanity pass under every Valid verdict.  Certificates carrying
    a witness supply their instantiated obligation; otherwise the sequent
    itself is sampled."""
    cert = decision.certificate
    target = cert.check if (cert and cert.check is not None) else sequent_formula(goal)
    try:
        cex = falsify(target, _with_state_defaults(goal, box), n=n, seed=seed)
    except UnboundedQuantifierError:
        return
    if cex is not None:
        raise AssertionError(
            f"oracle soundness violation: {cert} refuted at {cex} for {goal}")


def confirmation_formula(goal: Sequent, cert: Optional[WitnessCertificate]) -> Formula:
    """What the honesty audit should falsify for a leaf closed by `cert`."""
    if cert is not None and cert.check is not None:
        return cert.check
    return sequent_formula(goal)


def _decide_core(goal: Sequent, hyps: list[Formula], box: ParamBox,
                 seed: int) -> Optional[Decision]:
    # identity: goal formula appears among the hypotheses
    for s in goal.succ:
        if s in hyps:
            return Decision("valid", WitnessCertificate(
                "Identity", None, "hypothesis repeats the goal", {}))

    # contradictory hypotheses over identical terms (e.g. A < B and A >= B)
    d = _hypothesis_contradiction(hyps)
    if d:
        return d

    # complementary succedent pair (total order: |- A <= B, A > B)
    d = _succedent_totality(goal.succ)
    if d:
        return d

    # relation weakening: hypothesis A op1 B entails goal A op2 B
    d = _relaxation(hyps, goal.succ)
    if d:
        return d

    # ground or interval evaluation of a succedent atom
    d = _ground_or_interval(goal, hyps, box, seed)
    if d:
        return d

    # obligation patterns; AnnulusMin and ProgressP share a shape, so the
    # quantified name breaks the tie for reporting purposes
    for i, s in enumerate(goal.succ):
        matchers = [_match_levelset_k, _match_delta_ball, _match_annulus_min,
                    _match_progress_p]
        if isinstance(s, Exists) and s.var.startswith("p"):
            matchers = [_match_levelset_k, _match_delta_ball, _match_progress_p,
                        _match_annulus_min]
        for matcher in matchers:
            d = matcher(s, hyps, box)
            if d:
                return d
    d = _match_containment(goal, hyps, box)
    if d:
        return d
    d = _match_global_form_sign(goal.succ, hyps)
    if d:
        return d
    return None


def _poly_key(t: Term) -> Optional[tuple]:
    try:
        p = term_to_poly(t)
    except (NotPolynomial, TypeError):
        return None
    return tuple(sorted(((m, c) for m, c in p.coeffs.items()),
                        key=lambda it: repr(it)))


def _diff_key(a: Term, b: Term) -> Optional[tuple]:
    try:
        p = term_to_poly(a) - term_to_poly(b)
    except (NotPolynomial, TypeError):
        return None
    return tuple(sorted(((m, c) for m, c in p.coeffs.items()),
                        key=lambda it: repr(it)))


# Each comparison constrains the sign of (left - right); entailment, totality
# and contradiction are subset/union/empty-intersection over these sign sets.
_SIGNS = {"<": {-1}, "<=": {-1, 0}, "=": {0}, "!=": {-1, 1}, ">=": {0, 1}, ">": {1}}


def _hypothesis_contradiction(hyps: list[Formula]) -> Optional[Decision]:
    atoms = [(h, _diff_key(h.left, h.right)) for h in hyps if isinstance(h, Cmp)]
    for i, (h1, k1) in enumerate(atoms):
        if k1 is None:
            continue
        for h2, k2 in atoms[i + 1:]:
            if k2 == k1 and not (_SIGNS[h1.op] & _SIGNS[h2.op]):
                return Decision("valid", WitnessCertificate(
                    "Contradiction", None,
                    f"hypotheses contradict: {print_formula(h1)} vs {print_formula(h2)}",
                    {}))
    return None


def _succedent_totality(succ: Sequence[Formula]) -> Optional[Decision]:
    atoms = [(s, _diff_key(s.left, s.right)) for s in succ if isinstance(s, Cmp)]
    for i, (s1, k1) in enumerate(atoms):
        if k1 is None:
            continue
        for s2, k2 in atoms[i + 1:]:
            if k2 == k1 and _SIGNS[s1.op] | _SIGNS[s2.op] == {-1, 0, 1}:
                return Decision("valid", WitnessCertificate(
                    "Totality", None,
                    f"succedents cover the order: {print_formula(s1)} | {print_formula(s2)}",
                    {}))
    return None


def _relaxation(hyps: list[Formula], succ: Sequence[Formula]) -> Optional[Decision]:
    hyp_atoms = [(h, _diff_key(h.left, h.right)) for h in hyps if isinstance(h, Cmp)]
    for s in succ:
        if not isinstance(s, Cmp):
            continue
        ks = _diff_key(s.left, s.right)
        if ks is None:
            continue
        for h, kh in hyp_atoms:
            if kh == ks and _SIGNS[h.op] <= _SIGNS[s.op]:
                return Decision("valid", WitnessCertificate(
                    "Relaxation", None,
                    f"{print_formula(h)} entails {print_formula(s)}", {}))
    return None


def _ground_or_interval(goal: Sequent, hyps: list[Formula], box: ParamBox,
                        seed: int) -> Optional[Decision]:
    point_env = {n: box.ref(n) for n in box.ranges if box.ref(n) is not None}
    for s in goal.succ:
        if not isinstance(s, Cmp):
            continue
        syms = term_symbols(s.left) | term_symbols(s.right)
        try:
            if syms <= set(point_env):
                env = {n: point_env[n] for n in syms}
                if eval_atom_exact(s, env):
                    return Decision("valid", WitnessCertificate(
                        "Ground", None,
                        f"{print_formula(s)} holds at the declared parameter point",
                        {"point": {k: str(v) for k, v in env.items()}}))
                if len(goal.succ) == 1 and not hyps:
                    return Decision("counterexample",
                                    assignment={k: float(v) for k, v in env.items()})
                continue
        except _NotGround:
            pass
        iv = _interval_atom(s, box)
        if iv is True:
            return Decision("valid", WitnessCertificate(
                "Interval", None,
                f"{print_formula(s)} holds on the whole bounds box", {}))
        if iv is False and len(goal.succ) == 1 and not hyps:
            mid = {n: float(sum(box.ranges[n]) / 2) for n in syms if n in box.ranges}
            return Decision("counterexample", assignment=mid)
    return None


def _interval_term(t: Term, box: ParamBox) -> Optional[tuple[Fraction, Fraction]]:
    if isinstance(t, RationalConst):
        return t.value, t.value
    if isinstance(t, (Variable, Parameter)):
        r = box.range_of(t.name)
        return (Fraction(r[0]), Fraction(r[1])) if r else None
    if isinstance(t, Neg):
        r = _interval_term(t.arg, box)
        return (-r[1], -r[0]) if r else None
    if isinstance(t, (Add, Sub)):
        a, b = _interval_term(t.left, box), _interval_term(t.right, box)
        if not a or not b:
            return None
        if isinstance(t, Sub):
            b = (-b[1], -b[0])
        return a[0] + b[0], a[1] + b[1]
    if isinstance(t, Mul):
        a, b = _interval_term(t.left, box), _interval_term(t.right, box)
        if not a or not b:
            return None
        prods = [x * y for x in a for y in b]
        return min(prods), max(prods)
    if isinstance(t, Div):
        a = _interval_term(t.left, box)
        if not a:
            return None
        c = t.right.value
        vals = (a[0] / c, a[1] / c)
        return min(vals), max(vals)
    if isinstance(t, Pow):
        r = _interval_term(t.base, box)
        if not r:
            return None
        out = (Fraction(1), Fraction(1))
        for _ in range(t.exponent):
            prods = [x * y for x in out for y in r]
            out = (min(prods), max(prods))
        return out
    return None


def _interval_atom(f: Cmp, box: ParamBox) -> Optional[bool]:
    l = _interval_term(f.left, box)
    r = _interval_term(f.right, box)
    if l is None or r is None:
        return None
    lo_l, hi_l = l
    lo_r, hi_r = r
    if f.op in ("<", "<="):
        if (hi_l < lo_r) or (f.op == "<=" and hi_l <= lo_r):
            return True
        if (lo_l > hi_r) or (f.op == "<" and lo_l >= hi_r):
            return False
    if f.op in (">", ">="):
        if (lo_l > hi_r) or (f.op == ">=" and lo_l >= hi_r):
            return True
        if (hi_l < lo_r) or (f.op == ">" and hi_l <= lo_r):
            return False
    if f.op == "=" and lo_l == hi_l == lo_r == hi_r:
        return True
    if f.op == "!=" and (hi_l < lo_r or lo_l > hi_r):
        return True
    return None


# -- the four obligation patterns


def _match_levelset_k(s: Formula, hyps: list[Formula], box: ParamBox) -> Optional[Decision]:
    """Exists k > 0 forall x on the eps-sphere: V(x) >= k.
    Witness: k = lambda_min(V) * eps^2 (largest levelset inside the ball)."""
    if not isinstance(s, Exists):
        return None
    k = s.var
    parts = flatten_and(s.body)
    if len(parts) < 2:
        return None
    if not (isinstance(parts[0], Cmp) and parts[0].op == ">"
            and _symbol_name(parts[0].left) == k
            and isinstance(parts[0].right, RationalConst) and parts[0].right.value == 0):
        return None
    rest = parts[1] if len(parts) == 2 else None
    if rest is None or not isinstance(rest, Forall):
        return None
    qvars, body = strip_foralls(rest)
    bh, concl = split_implications(body)
    if len(bh) != 1 or len(qvars) != 2:
        return None
    na = _norm_atom(bh[0], qvars)
    if na is None or na[0] != "=":
        return None
    radius = na[1]
    if not (isinstance(concl, Cmp) and concl.op == ">=" and _symbol_name(concl.right) == k):
        return None
    q = _form_of_quantified(qvars, concl.left)
    if q is None or sylvester_definiteness(q) != Definiteness.POSITIVE_DEFINITE:
        return None
    if not _positive_in_context(radius, hyps, box):
        return None
    lam_lo, lam_hi = eigen_bounds(q)
    r_ref = _ref_value(radius, box, Fraction(1, 10))
    k_ref = lam_lo * r_ref * r_ref
    bad = _grid_check_sphere(q, float(r_ref), float(k_ref) * (1 - 1e-12),
                             lambda v, b: v >= b)
    if bad:
        return None
    rname = print_term(radius)
    return Decision("valid", WitnessCertificate(
        "LevelsetK", k_ref, f"lambda_min(V) * {rname}^2",
        {"lambda_min_lower": str(lam_lo), "lambda_max_upper": str(lam_hi),
         "radius_ref": str(r_ref), "grid": GRID_N}))


def _match_delta_ball(s: Formula, hyps: list[Formula], box: ParamBox) -> Optional[Decision]:
    """Exists d (d>0 and d<eps and forall x in B_d: V(x) < k): witness
    d = (1 - 2^-10) * min(eps, sqrt(k / lambda_max))."""
    if not isinstance(s, Exists):
        return None
    d = s.var
    parts = flatten_and(s.body)
    if len(parts) != 3:
        return None
    c0, c1, c2 = parts
    if not (isinstance(c0, Cmp) and c0.op == ">" and _symbol_name(c0.left) == d
            and isinstance(c0.right, RationalConst) and c0.right.value == 0):
        return None
    if not (isinstance(c1, Cmp) and c1.op == "<" and _symbol_name(c1.left) == d):
        return None
    eps_t = c1.right
    if not isinstance(c2, Forall):
        return None
    qvars, body = strip_foralls(c2)
    bh, concl = split_implications(body)
    if len(bh) != 1 or len(qvars) != 2:
        return None
    na = _norm_atom(bh[0], qvars)
    if na is None or na[0] != "<=" or _symbol_name(na[1]) != d:
        return None
    if not (isinstance(concl, Cmp) and concl.op == "<"):
        return None
    k_t = concl.right
    q = _form_of_quantified(qvars, concl.left)
    if q is None or sylvester_definiteness(q) != Definiteness.POSITIVE_DEFINITE:
        return None
    if not (_positive_in_context(eps_t, hyps, box) and _positive_in_context(k_t, hyps, box)):
        return None
    lam_lo, lam_hi = eigen_bounds(q)
    eps_ref = _ref_value(eps_t, box, Fraction(1, 10))
    k_ref = _ref_value(k_t, box, lam_lo * eps_ref * eps_ref)
    s_lo, _ = sqrt_bounds(k_ref / lam_hi)
    d_ref = _SHRINK * min(eps_ref, s_lo)
    # exact check of the witness at the reference point: lam_hi*d^2 < k
    assert lam_hi * d_ref * d_ref < k_ref and d_ref < eps_ref and d_ref > 0
    bad = 0
    a11, a12, a22 = float(q.a11), float(q.a12), float(q.a22)
    n_r = 100
    for i in range(n_r):
        r = float(d_ref) * (i + 1) / n_r
        for cx, cy in _UNIT_CIRCLE[:: GRID_N // 100]:
            x, y = r * cx, r * cy
            if not a11 * x * x + 2 * a12 * x * y + a22 * y * y < float(k_ref):
                bad += 1
    if bad:
        return None
    return Decision("valid", WitnessCertificate(
        "DeltaBall", d_ref,
        f"(1 - 2^-10) * min({print_term(eps_t)}, sqrt({print_term(k_t)}/lambda_max(V)))",
        {"lambda_max_upper": str(lam_hi), "eps_ref": str(eps_ref),
         "k_ref": str(k_ref), "grid": GRID_N}))


def _match_annulus_min(s: Formula, hyps: list[Formula], box: ParamBox) -> Optional[Decision]:
    """V's minimum over B_1 (literal reading, witness 0 for PD forms) or over
    the annulus co-B_eps inter B_1 (witness lambda_min * eps^2)."""
    if not isinstance(s, Exists):
        return None
    b = s.var
    parts = flatten_and(s.body)
    annulus = False
    if (len(parts) >= 2 and isinstance(parts[0], Cmp) and parts[0].op == ">"
            and _symbol_name(parts[0].left) == b
            and isinstance(parts[0].right, RationalConst) and parts[0].right.value == 0):
        annulus = True
        parts = parts[1:]
    if len(parts) != 1 or not isinstance(parts[0], Forall):
        return None
    qvars, body = strip_foralls(parts[0])
    bh, concl = split_implications(body)
    if len(qvars) != 2:
        return None
    if not (isinstance(concl, Cmp) and concl.op == ">=" and _symbol_name(concl.right) == b):
        return None
    q = _form_of_quantified(qvars, concl.left)
    if q is None:
        return None
    definiteness = sylvester_definiteness(q)
    if definiteness not in (Definiteness.POSITIVE_DEFINITE,
                            Definiteness.POSITIVE_SEMIDEFINITE):
        return None
    inner = None
    outer_ok = False
    for h in bh:
        na = _norm_atom(h, qvars)
        if na is None:
            return None
        if na[0] == ">":
            inner = na[1]
        elif na[0] == "<=":
            outer_ok = True
        else:
            return None
    if not annulus:
        if inner is not None:
            return None
        # minimum over a ball of a PSD form is attained at the origin
        return Decision("valid", WitnessCertificate(
            "AnnulusMin", Fraction(0), "0 (positive-definite V has minimum at origin)",
            {"reading": "literal"}))
    if inner is None or not outer_ok:
        return None
    if definiteness != Definiteness.POSITIVE_DEFINITE:
        return None
    if not _positive_in_context(inner, hyps, box):
        return None
    lam_lo, lam_hi = eigen_bounds(q)
    r_ref = _ref_value(inner, box, Fraction(1, 10))
    b_ref = lam_lo * r_ref * r_ref
    bad = _grid_check_sphere(q, float(r_ref), float(b_ref) * (1 - 1e-12),
                             lambda v, bd: v >= bd)
    if bad:
        return None
    return Decision("valid", WitnessCertificate(
        "AnnulusMin", b_ref, f"lambda_min(V) * {print_term(inner)}^2",
        {"reading": "annulus", "lambda_min_lower": str(lam_lo), "grid": GRID_N}))


def _match_progress_p(s: Formula, hyps: list[Formula], box: ParamBox) -> Optional[Decision]:
    """Exists p > 0 forall x in co-B_eps (inter B_1): -Vdot(x) >= p.
    Witness: p = lambda_min(-Vdot form) * eps^2."""
    if not isinstance(s, Exists):
        return None
    p = s.var
    parts = flatten_and(s.body)
    if len(parts) < 2:
        return None
    if not (isinstance(parts[0], Cmp) and parts[0].op == ">"
            and _symbol_name(parts[0].left) == p
            and isinstance(parts[0].right, RationalConst) and parts[0].right.value == 0):
        return None
    if len(parts) != 2 or not isinstance(parts[1], Forall):
        return None
    qvars, body = strip_foralls(parts[1])
    bh, concl = split_implications(body)
    if len(qvars) != 2:
        return None
    if not (isinstance(concl, Cmp) and concl.op == ">=" and _symbol_name(concl.right) == p):
        return None
    q = _form_of_quantified(qvars, concl.left)
    if q is None or sylvester_definiteness(q) != Definiteness.POSITIVE_DEFINITE:
        return None
    inner = None
    for h in bh:
        na = _norm_atom(h, qvars)
        if na is not None and na[0] == ">":
            inner = na[1]
    if inner is None or not _positive_in_context(inner, hyps, box):
        return None
    lam_lo, lam_hi = eigen_bounds(q)
    r_ref = _ref_value(inner, box, Fraction(1, 10))
    p_ref = lam_lo * r_ref * r_ref
    bad = _grid_check_sphere(q, float(r_ref), float(p_ref) * (1 - 1e-12),
                             lambda v, bd: v >= bd)
    if bad:
        return None
    return Decision("valid", WitnessCertificate(
        "ProgressP", p_ref, f"lambda_min(-Vdot) * {print_term(inner)}^2",
        {"lambda_min_lower": str(lam_lo), "radius_ref": str(r_ref), "grid": GRID_N}))


def _match_containment(goal: Sequent, hyps: list[Formula],
                       box: ParamBox) -> Optional[Decision]:
    """From forall y on the eps-sphere V(y) >= k, V(x) <= k, k > 0 conclude
    norm(x) <= eps for positive-definite quadratic V (levelset containment:
    scaling x to the sphere strictly decreases a PD homogeneous quadratic)."""
    target = None
    for s in goal.succ:
        if isinstance(s, Cmp) and s.op == "<=" and isinstance(s.left, Norm) \
                and len(s.left.args) == 2:
            names = [_symbol_name(a) for a in s.left.args]
            if all(names):
                target = (names, s.right)
                break
    if target is None:
        return None
    (x1, x2), radius = target
    if not _positive_in_context(radius, hyps, box):
        return None
    sphere_form = None
    k_name = None
    for h in hyps:
        if not isinstance(h, Forall):
            continue
        qvars, body = strip_foralls(h)
        bh, concl = split_implications(body)
        if len(qvars) != 2 or len(bh) != 1:
            continue
        na = _norm_atom(bh[0], qvars)
        if na is None or na[0] != "=" or na[1] != radius:
            continue
        if not (isinstance(concl, Cmp) and concl.op == ">="):
            continue
        q = _form_of_quantified(qvars, concl.left)
        kn = _symbol_name(concl.right)
        if q is not None and kn:
            sphere_form, k_name = q, kn
            break
    if sphere_form is None:
        return None
    if sylvester_definiteness(sphere_form) != Definiteness.POSITIVE_DEFINITE:
        return None
    # the pointwise bound V(x) <= k over the same form
    found_level = False
    for h in hyps:
        if isinstance(h, Cmp) and h.op == "<=" and _symbol_name(h.right) == k_name:
            q2 = QuadForm2.from_term(h.left, x1, x2)
            if q2 == sphere_form:
                found_level = True
                break
    if not found_level:
        return None
    if not _positive_in_context(Parameter(k_name), hyps, box):
        return None
    return Decision("valid", WitnessCertificate(
        "Containment", None,
        f"levelset of V below {k_name} is inside the ball of radius {print_term(radius)}",
        {"lambda_min_lower": str(eigen_bounds(sphere_form)[0])}))


def _match_global_form_sign(succ: Sequence[Formula],
                            hyps: list[Formula]) -> Optional[Decision]:
    """Vdot <= 0 (globally) for negative semidefinite quadratic forms; dually
    for >= 0."""
    for s in succ:
        if not isinstance(s, Cmp) or s.op not in ("<=", ">="):
            continue
        if not (isinstance(s.right, RationalConst) and s.right.value == 0):
            continue
        try:
            p = term_to_poly(s.left)
        except NotPolynomial:
            continue
        syms = sorted(p.symbols())
        if len(syms) != 2:
            continue
        q = QuadForm2.from_poly(p, syms[0], syms[1])
        if q is None:
            continue
        kind = sylvester_definiteness(q)
        ok_le = kind in (Definiteness.NEGATIVE_DEFINITE,
                         Definiteness.NEGATIVE_SEMIDEFINITE, Definiteness.ZERO)
        ok_ge = kind in (Definiteness.POSITIVE_DEFINITE,
                         Definiteness.POSITIVE_SEMIDEFINITE, Definiteness.ZERO)
        if (s.op == "<=" and ok_le) or (s.op == ">=" and ok_ge):
            return Decision("valid", WitnessCertificate(
                "FormSign", None,
                f"{print_formula(s)} holds globally ({kind.value} form)",
                {"definiteness": kind.value}))
    return None


# ---------------------------------------------------------------------------
# SMT-LIB export


def _norm_free(f: Formula) -> Formula:
    """Rewrite norm comparisons to squared polynomials (with the sign guard on
    the radius), so the export stays in nonlinear real arithmetic."""
    if isinstance(f, Cmp):
        if isinstance(f.left, Norm):
            sq = None
            for a in f.left.args:
                term = Mul(a, a)
                sq = term if sq is None else Add(sq, term)
            r2 = Mul(f.right, f.right)
            nonneg = Cmp(">=", f.right, RationalConst(Fraction(0)))
            if f.op in ("<=", "<", "="):
                return And(nonneg, Cmp(f.op, sq, r2))
            if f.op in (">", ">="):
                return Or(Cmp("<", f.right, RationalConst(Fraction(0))),
                          Cmp(f.op, sq, r2))
            return Or(Cmp("<", f.right, RationalConst(Fraction(0))),
                      Cmp("!=", sq, r2))
        return f
    if isinstance(f, Not):
        return Not(_norm_free(f.arg))
    if isinstance(f, And):
        return And(_norm_free(f.left), _norm_free(f.right))
    if isinstance(f, Or):
        return Or(_norm_free(f.left), _norm_free(f.right))
    if isinstance(f, Implies):
        return Implies(_norm_free(f.left), _norm_free(f.right))
    if isinstance(f, Forall):
        return Forall(f.var, _norm_free(f.body))
    if isinstance(f, Exists):
        return Exists(f.var, _norm_free(f.body))
    return f


def _smt_term(t: Term) -> str:
    if isinstance(t, (Variable, Parameter)):
        return t.name
    if isinstance(t, RationalConst):
        v = t.value
        if v < 0:
            return f"(- {_smt_term(RationalConst(-v))})"
        if v.denominator == 1:
            return f"{v.numerator}.0"
        return f"(/ {v.numerator}.0 {v.denominator}.0)"
    if isinstance(t, Neg):
        return f"(- {_smt_term(t.arg)})"
    if isinstance(t, Add):
        return f"(+ {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Sub):
        return f"(- {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Mul):
        return f"(* {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Div):
        return f"(/ {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Pow):
        if t.exponent == 0:
            return "1.0"
        out = _smt_term(t.base)
        for _ in range(t.exponent - 1):
            out = f"(* {out} {_smt_term(t.base)})"
        return out
    if isinstance(t, (Sin, Cos)):
        raise TrigNotSupportedError("trigonometric term in export")
    raise TrigNotSupportedError(f"cannot export term {print_term(t)}")


def _smt_formula(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Cmp):
        op = {"<": "<", "<=": "<=", "=": "=", ">=": ">=", ">": ">"}.get(f.op)
        if f.op == "!=":
            return f"(not (= {_smt_term(f.left)} {_smt_term(f.right)}))"
        return f"({op} {_smt_term(f.left)} {_smt_term(f.right)})"
    if isinstance(f, Not):
        return f"(not {_smt_formula(f.arg)})"
    if isinstance(f, And):
        return f"(and {_smt_formula(f.left)} {_smt_formula(f.right)})"
    if isinstance(f, Or):
        return f"(or {_smt_formula(f.left)} {_smt_formula(f.right)})"
    if isinstance(f, Implies):
        return f"(=> {_smt_formula(f.left)} {_smt_formula(f.right)})"
    if isinstance(f, Forall):
        return f"(forall (({f.var} Real)) {_smt_formula(f.body)})"
    if isinstance(f, Exists):
        return f"(exists (({f.var} Real)) {_smt_formula(f.body)})"
    raise NotFirstOrderError("modal formula in export")


def export_obligation(goal: Sequent, goal_id: Union[int, str] = 0) -> str:
    """Emit the sequent's validity problem as SMT-LIB 2 text (negated goal,
    check-sat; unsat means valid)."""
    for f in goal.ante + goal.succ:
        if _contains_modality(f):
            raise NotFirstOrderError("sequent contains a modality")
    ante = [_norm_free(a) for a in goal.ante]
    succ = [_norm_free(s) for s in goal.succ]
    has_quant = any(_quantified_names(f) for f in ante + succ)
    free = set()
    for f in ante + succ:
        free |= free_symbols(f)
    lines = [
        f"(set-info :source |lyapdl obligation {goal_id}|)",
        f"(set-logic {'NRA' if has_quant else 'QF_NRA'})",
    ]
    for name in sorted(free):
        lines.append(f"(declare-const {name} Real)")
    for a in ante:
        lines.append(f"(assert {_smt_formula(a)})")
    if succ:
        disj = _smt_formula(succ[0])
        for s in succ[1:]:
            disj = f"(or {disj} {_smt_formula(s)})"
        lines.append(f"(assert (not {disj}))")
    else:
        lines.append("(assert true)")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"
