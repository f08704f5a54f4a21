"""Abstract syntax, parser, printer and substitution for the continuous dL fragment.

Terms are polynomials over exact rationals extended with sin/cos and a norm
primitive; formulas are first-order real arithmetic plus box/diamond modalities
over one ODE system.  All values are immutable; structural equality is dataclass
equality.  No floating point enters this layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence, Union


# ---------------------------------------------------------------------------
# Terms


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Variable(Term):
    """A state variable (evolves under the ODE)."""
    name: str


@dataclass(frozen=True)
class Parameter(Term):
    """A rigid symbol: physical constant, gain, radius, witness name."""
    name: str


@dataclass(frozen=True)
class RationalConst(Term):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Neg(Term):
    arg: Term


@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Sub(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Mul(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Div(Term):
    left: Term
    right: Term  # syntactic restriction: nonzero rational constant

    def __post_init__(self):
        if not isinstance(self.right, RationalConst) or self.right.value == 0:
            raise ValueError("division is only by a nonzero rational constant")


@dataclass(frozen=True)
class Pow(Term):
    base: Term
    exponent: int  # natural number

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent < 0:
            raise ValueError("exponent must be a nonnegative integer")


@dataclass(frozen=True)
class Sin(Term):
    arg: Term


@dataclass(frozen=True)
class Cos(Term):
    arg: Term


@dataclass(frozen=True)
class Norm(Term):
    """Euclidean norm of a state vector; kept primitive (rewritten to squares
    only when a rule needs a polynomial)."""
    args: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


def rat(x: Union[int, str, Fraction]) -> RationalConst:
    return RationalConst(Fraction(x))


# ---------------------------------------------------------------------------
# Programs and formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class HybridProgram:
    """A purely continuous program: one ODE system with an evolution domain."""
    odes: tuple[tuple[str, Term], ...]
    domain: "Formula"

    def __post_init__(self):
        object.__setattr__(self, "odes", tuple((n, t) for n, t in self.odes))
        names = [n for n, _ in self.odes]
        if len(set(names)) != len(names):
            raise ValueError("each state variable may appear once on a left-hand side")

    @property
    def state_vars(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.odes)


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


TRUE = TrueF()
FALSE = FalseF()

CMP_OPS = ("<", "<=", "=", "!=", ">=", ">")


@dataclass(frozen=True)
class Cmp(Formula):
    op: str
    left: Term
    right: Term

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Box(Formula):
    program: HybridProgram
    post: Formula


@dataclass(frozen=True)
class Diamond(Formula):
    program: HybridProgram
    post: Formula


# Ball-notation sugar (removed by expand_ball_notation).

@dataclass(frozen=True)
class InBall(Formula):
    """`x in B_p` / `x in dB_p` / `x in coB_p` membership sugar."""
    point: tuple[Term, ...]
    radius: Term
    region: str  # ball | boundary | complement

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(self.point))
        if self.region not in ("ball", "boundary", "complement"):
            raise ValueError(f"unknown ball region {self.region!r}")


@dataclass(frozen=True)
class BallModality(Formula):
    """`_p[P]_q` / `_p<P>_q`: initialized in B_p, remains in / can reach B_q."""
    diamond: bool
    pre_radius: Term
    program: HybridProgram
    post_radius: Term


# ---------------------------------------------------------------------------
# Sequents


@dataclass(frozen=True)
class Sequent:
    ante: tuple[Formula, ...]
    succ: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "ante", tuple(self.ante))
        object.__setattr__(self, "succ", tuple(self.succ))

    def __str__(self) -> str:
        return "{} |- {}".format(
            ", ".join(print_formula(f) for f in self.ante),
            ", ".join(print_formula(f) for f in self.succ),
        )


# ---------------------------------------------------------------------------
# Errors


class SyntaxErrorDL(Exception):
    """Parse failure with position and the token set that would have advanced."""

    def __init__(self, message: str, line: int, col: int, expected: Sequence[str] = ()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        loc = f"line {line}, column {col}"
        if expected:
            message = f"{message} at {loc} (expected one of: {', '.join(expected)})"
        else:
            message = f"{message} at {loc}"
        super().__init__(message)


class UnknownIdentifierError(Exception):
    pass


class CaptureError(Exception):
    def __init__(self, message: str, binder: str):
        self.binder = binder
        super().__init__(message)


# ---------------------------------------------------------------------------
# Lexer

_PUNCT = [
    "->", "<=", ">=", "!=", "(", ")", "{", "}", "[", "]", "<", ">", "=",
    "&", "|", "!", "+", "-", "*", "/", "^", ",", ":", "'", "_",
]


@dataclass(frozen=True)
class _Tok:
    kind: str  # NUM | IDENT | QUANT | PUNCT | EOF
    text: str
    line: int
    col: int


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            if c == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1
            continue
        if c == "\\":
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            word = text[i + 1:j]
            if word not in ("forall", "exists"):
                raise SyntaxErrorDL(f"unknown quantifier \\{word}", line, col,
                                    ["\\forall", "\\exists"])
            toks.append(_Tok("QUANT", word, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                if text[j] == ".":
                    seen_dot = True
                j += 1
            toks.append(_Tok("NUM", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and text[j].isalnum():
                j += 1
            toks.append(_Tok("IDENT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(_Tok("PUNCT", p, line, col))
                col += len(p)
                i += len(p)
                break
        else:
            raise SyntaxErrorDL(f"unexpected character {c!r}", line, col)
    toks.append(_Tok("EOF", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser (recursive descent, one bounded backtrack point at '(')


class _Parser:
    def __init__(self, toks: list[_Tok], variables: frozenset[str],
                 declared: Optional[frozenset[str]]):
        self.toks = toks
        self.pos = 0
        self.variables = variables
        self.declared = declared
        self.bound: list[str] = []       # quantifier binders in scope
        self.ode_vars: list[str] = []    # ODE-bound variables in scope

    # -- token helpers

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "PUNCT" and t.text == text

    def eat(self, text: str) -> _Tok:
        t = self.peek()
        if t.kind != "PUNCT" or t.text != text:
            found = t.text or "end of input"
            raise SyntaxErrorDL(f"unexpected {found!r}", t.line, t.col, [text])
        self.pos += 1
        return t

    def eat_ident(self) -> _Tok:
        t = self.peek()
        if t.kind != "IDENT":
            found = t.text or "end of input"
            raise SyntaxErrorDL(f"unexpected {found!r}", t.line, t.col, ["identifier"])
        self.pos += 1
        return t

    # -- identifiers

    def mk_symbol(self, tok: _Tok) -> Term:
        name = tok.text
        if name in self.ode_vars or name in self.variables:
            return Variable(name)
        if name in self.bound:
            return Parameter(name)
        if self.declared is not None and name not in self.declared:
            raise UnknownIdentifierError(
                f"unknown identifier {name!r} at line {tok.line}, column {tok.col}")
        return Parameter(name)

    # -- terms

    def term(self) -> Term:
        t = self.term_mul()
        while self.at("+") or self.at("-"):
            op = self.peek().text
            self.pos += 1
            rhs = self.term_mul()
            t = Add(t, rhs) if op == "+" else Sub(t, rhs)
        return t

    def term_mul(self) -> Term:
        t = self.term_unary()
        while self.at("*") or self.at("/"):
            op = self.peek().text
            tok = self.peek()
            self.pos += 1
            rhs = self.term_unary()
            if op == "*":
                t = Mul(t, rhs)
            else:
                if not isinstance(rhs, RationalConst) or rhs.value == 0:
                    raise SyntaxErrorDL("denominator must be a nonzero rational constant",
                                        tok.line, tok.col)
                if isinstance(t, RationalConst):
                    t = RationalConst(t.value / rhs.value)
                else:
                    t = Div(t, rhs)
        return t

    def term_unary(self) -> Term:
        if self.at("-"):
            self.pos += 1
            arg = self.term_unary()
            if isinstance(arg, RationalConst):
                return RationalConst(-arg.value)
            return Neg(arg)
        return self.term_pow()

    def term_pow(self) -> Term:
        base = self.term_atom()
        if self.at("^"):
            tok = self.eat("^")
            num = self.peek()
            if num.kind != "NUM" or "." in num.text:
                raise SyntaxErrorDL("exponent must be a natural number",
                                    tok.line, tok.col, ["natural number"])
            self.pos += 1
            return Pow(base, int(num.text))
        return base

    def term_atom(self) -> Term:
        t = self.peek()
        if t.kind == "NUM":
            self.pos += 1
            if "." in t.text:
                whole, frac = t.text.split(".")
                den = 10 ** len(frac)
                return RationalConst(Fraction(int(whole or "0") * den + int(frac or "0"), den))
            return RationalConst(Fraction(int(t.text)))
        if t.kind == "IDENT":
            if self.peek(1).kind == "PUNCT" and self.peek(1).text == "(":
                name = t.text
                if name not in ("sin", "cos", "norm"):
                    raise SyntaxErrorDL(f"unknown function {name!r}", t.line, t.col,
                                        ["sin", "cos", "norm"])
                self.pos += 1
                self.eat("(")
                args = [self.term()]
                while self.at(","):
                    self.pos += 1
                    args.append(self.term())
                self.eat(")")
                if name == "sin":
                    if len(args) != 1:
                        raise SyntaxErrorDL("sin takes one argument", t.line, t.col)
                    return Sin(args[0])
                if name == "cos":
                    if len(args) != 1:
                        raise SyntaxErrorDL("cos takes one argument", t.line, t.col)
                    return Cos(args[0])
                return Norm(tuple(args))
            self.pos += 1
            return self.mk_symbol(t)
        if self.at("("):
            self.pos += 1
            inner = self.term()
            self.eat(")")
            return inner
        found = t.text or "end of input"
        raise SyntaxErrorDL(f"unexpected {found!r}", t.line, t.col,
                            ["number", "identifier", "("])

    # -- programs

    def program(self) -> HybridProgram:
        self.eat("{")
        odes: list[tuple[str, Term]] = []
        names: list[str] = []
        first = self.eat_ident()
        names.append(first.text)
        self.eat("'")
        self.eat("=")
        seen = len(self.ode_vars)
        # LHS names are in scope for every RHS; collect names first.
        save = self.pos
        depth = 1
        probe = self.pos
        while depth > 0:
            t = self.toks[probe]
            if t.kind == "EOF":
                raise SyntaxErrorDL("unterminated program", t.line, t.col, ["}"])
            if t.kind == "PUNCT" and t.text == "{":
                depth += 1
            elif t.kind == "PUNCT" and t.text == "}":
                depth -= 1
            elif (depth == 1 and t.kind == "IDENT"
                  and self.toks[probe + 1].kind == "PUNCT"
                  and self.toks[probe + 1].text == "'"):
                names.append(t.text)
            probe += 1
        self.ode_vars.extend(dict.fromkeys(names))
        try:
            self.pos = save
            rhs = self.term()
            odes.append((first.text, rhs))
            while self.at(","):
                self.pos += 1
                ident = self.eat_ident()
                self.eat("'")
                self.eat("=")
                odes.append((ident.text, self.term()))
            domain: Formula = TRUE
            if self.at("&"):
                self.pos += 1
                domain = self.formula()
            self.eat("}")
        finally:
            del self.ode_vars[seen:]
        return HybridProgram(tuple(odes), domain)

    # -- formulas

    def formula(self) -> Formula:
        f = self.formula_or()
        if self.at("->"):
            self.pos += 1
            return Implies(f, self.formula())
        return f

    def formula_or(self) -> Formula:
        f = self.formula_and()
        while self.at("|"):
            self.pos += 1
            f = Or(f, self.formula_and())
        return f

    def formula_and(self) -> Formula:
        f = self.formula_unary()
        while self.at("&"):
            self.pos += 1
            f = And(f, self.formula_unary())
        return f

    def formula_unary(self) -> Formula:
        t = self.peek()
        if t.kind == "QUANT":
            self.pos += 1
            ident = self.eat_ident()
            self.eat(":")
            self.bound.append(ident.text)
            try:
                body = self.formula()
            finally:
                self.bound.pop()
            return Forall(ident.text, body) if t.text == "forall" else Exists(ident.text, body)
        if self.at("!"):
            self.pos += 1
            return Not(self.formula_unary())
        if self.at("["):
            self.pos += 1
            prog = self.program()
            self.eat("]")
            self.ode_vars.extend(prog.state_vars)
            try:
                post = self.formula_unary()
            finally:
                del self.ode_vars[len(self.ode_vars) - len(prog.state_vars):]
            return Box(prog, post)
        if self.at("<") and self.peek(1).kind == "PUNCT" and self.peek(1).text == "{":
            self.pos += 1
            prog = self.program()
            self.eat(">")
            self.ode_vars.extend(prog.state_vars)
            try:
                post = self.formula_unary()
            finally:
                del self.ode_vars[len(self.ode_vars) - len(prog.state_vars):]
            return Diamond(prog, post)
        if self.at("_"):
            return self.ball_modality()
        if t.kind == "IDENT" and t.text == "true" and not self._ident_starts_term_tail():
            self.pos += 1
            return TRUE
        if t.kind == "IDENT" and t.text == "false" and not self._ident_starts_term_tail():
            self.pos += 1
            return FALSE
        if self.at("("):
            save = self.pos
            try:
                return self.comparison_or_membership()
            except SyntaxErrorDL:
                self.pos = save
            self.pos += 1
            inner = self.formula()
            self.eat(")")
            return inner
        return self.comparison_or_membership()

    def _ident_starts_term_tail(self) -> bool:
        nxt = self.peek(1)
        return nxt.kind == "PUNCT" and nxt.text in ("<", "<=", ">=", ">", "=", "!=",
                                                    "+", "-", "*", "/", "^")

    def comparison_or_membership(self) -> Formula:
        # tuple membership: "(" term "," term ")" "in" ...
        if self.at("("):
            save = self.pos
            self.pos += 1
            try:
                first = self.term()
                if self.at(","):
                    pts = [first]
                    while self.at(","):
                        self.pos += 1
                        pts.append(self.term())
                    self.eat(")")
                    return self.membership(tuple(pts))
            except SyntaxErrorDL:
                pass
            self.pos = save  # not a tuple; reparse "(" as part of a term
        left = self.term()
        t = self.peek()
        if t.kind == "IDENT" and t.text == "in":
            return self.membership((left,))
        for op in ("<=", ">=", "!=", "=", "<", ">"):
            if self.at(op):
                self.pos += 1
                return Cmp(op, left, self.term())
        found = t.text or "end of input"
        raise SyntaxErrorDL(f"unexpected {found!r}", t.line, t.col,
                            ["<", "<=", "=", "!=", ">=", ">", "in"])

    def membership(self, point: tuple[Term, ...]) -> Formula:
        t = self.eat_ident()
        if t.text != "in":
            raise SyntaxErrorDL(f"unexpected {t.text!r}", t.line, t.col, ["in"])
        kind = self.eat_ident()
        regions = {"B": "ball", "dB": "boundary", "coB": "complement"}
        if kind.text not in regions:
            raise SyntaxErrorDL(f"unknown ball form {kind.text!r}", kind.line, kind.col,
                                ["B", "dB", "coB"])
        self.eat("_")
        radius = self.term_atom()
        return InBall(point, radius, regions[kind.text])

    def ball_modality(self) -> Formula:
        self.eat("_")
        pre = self.term_atom()
        if self.at("["):
            self.pos += 1
            prog = self.program()
            self.eat("]")
            diamond = False
        elif self.at("<"):
            self.pos += 1
            prog = self.program()
            self.eat(">")
            diamond = True
        else:
            t = self.peek()
            raise SyntaxErrorDL(f"unexpected {t.text!r}", t.line, t.col, ["[", "<"])
        self.eat("_")
        post = self.term_atom()
        return BallModality(diamond, pre, prog, post)


def parse_formula(text: str, variables: Sequence[str] = (),
                  parameters: Optional[Sequence[str]] = None) -> Formula:
    """Parse a formula.

    `variables` names the problem's state variables (parsed as Variable leaves);
    every other identifier becomes a Parameter.  When `parameters` is supplied,
    identifiers outside both sets (and not quantifier/ODE bound) are rejected.
    """
    toks = _lex(text)
    declared = None if parameters is None else frozenset(parameters) | frozenset(variables)
    p = _Parser(toks, frozenset(variables), declared)
    f = p.formula()
    t = p.peek()
    if t.kind != "EOF":
        raise SyntaxErrorDL(f"unexpected {t.text!r}", t.line, t.col, ["end of input"])
    return f


def parse_term(text: str, variables: Sequence[str] = (),
               parameters: Optional[Sequence[str]] = None) -> Term:
    toks = _lex(text)
    declared = None if parameters is None else frozenset(parameters) | frozenset(variables)
    p = _Parser(toks, frozenset(variables), declared)
    t = p.term()
    tok = p.peek()
    if tok.kind != "EOF":
        raise SyntaxErrorDL(f"unexpected {tok.text!r}", tok.line, tok.col, ["end of input"])
    return t


# ---------------------------------------------------------------------------
# Printer (minimal parentheses; output reparses to a structurally equal AST)

_TERM_ADD, _TERM_MUL, _TERM_NEG, _TERM_POW, _TERM_ATOM = 1, 2, 3, 4, 5


def _rat_str(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    den = v.denominator
    two = five = 0
    while den % 2 == 0:
        den //= 2
        two += 1
    while den % 5 == 0:
        den //= 5
        five += 1
    if den == 1:
        shift = max(two, five)
        scaled = abs(v.numerator) * 10 ** shift // v.denominator
        digits = str(scaled).rjust(shift + 1, "0")
        sign = "-" if v < 0 else ""
        return f"{sign}{digits[:-shift]}.{digits[-shift:]}"
    return f"{v.numerator}/{v.denominator}"


def print_term(t: Term, level: int = 0) -> str:
    def go(t: Term, ctx: int) -> str:
        if isinstance(t, (Variable, Parameter)):
            return t.name
        if isinstance(t, RationalConst):
            s = _rat_str(t.value)
            own = _TERM_ATOM
            if t.value < 0:
                own = _TERM_NEG
            if "/" in s:
                own = _TERM_MUL
            return f"({s})" if own < ctx else s
        if isinstance(t, Neg):
            s = "-" + go(t.arg, _TERM_NEG)
            return f"({s})" if _TERM_NEG < ctx else s
        if isinstance(t, Add):
            s = f"{go(t.left, _TERM_ADD)} + {go(t.right, _TERM_ADD + 1)}"
            return f"({s})" if _TERM_ADD < ctx else s
        if isinstance(t, Sub):
            s = f"{go(t.left, _TERM_ADD)} - {go(t.right, _TERM_ADD + 1)}"
            return f"({s})" if _TERM_ADD < ctx else s
        if isinstance(t, Mul):
            s = f"{go(t.left, _TERM_MUL)}*{go(t.right, _TERM_MUL + 1)}"
            return f"({s})" if _TERM_MUL < ctx else s
        if isinstance(t, Div):
            s = f"{go(t.left, _TERM_MUL)}/{go(t.right, _TERM_MUL + 1)}"
            return f"({s})" if _TERM_MUL < ctx else s
        if isinstance(t, Pow):
            s = f"{go(t.base, _TERM_ATOM)}^{t.exponent}"
            return f"({s})" if _TERM_POW < ctx else s
        if isinstance(t, Sin):
            return f"sin({go(t.arg, 0)})"
        if isinstance(t, Cos):
            return f"cos({go(t.arg, 0)})"
        if isinstance(t, Norm):
            return "norm({})".format(", ".join(go(a, 0) for a in t.args))
        raise TypeError(f"not a term: {t!r}")

    return go(t, level)


_F_IMP, _F_OR, _F_AND, _F_UNARY = 1, 2, 3, 4


def print_program(p: HybridProgram) -> str:
    body = ", ".join(f"{n}' = {print_term(t)}" for n, t in p.odes)
    if p.domain != TRUE:
        body += f" & {print_formula(p.domain)}"
    return "{" + body + "}"


def print_formula(f: Formula, level: int = 0) -> str:
    def go(f: Formula, ctx: int) -> str:
        if isinstance(f, TrueF):
            return "true"
        if isinstance(f, FalseF):
            return "false"
        if isinstance(f, Cmp):
            return f"{print_term(f.left)} {f.op} {print_term(f.right)}"
        if isinstance(f, Not):
            return "!" + go(f.arg, _F_UNARY)
        if isinstance(f, And):
            s = f"{go(f.left, _F_AND)} & {go(f.right, _F_AND + 1)}"
            return f"({s})" if _F_AND < ctx else s
        if isinstance(f, Or):
            s = f"{go(f.left, _F_OR)} | {go(f.right, _F_OR + 1)}"
            return f"({s})" if _F_OR < ctx else s
        if isinstance(f, Implies):
            s = f"{go(f.left, _F_IMP + 1)} -> {go(f.right, _F_IMP)}"
            return f"({s})" if _F_IMP < ctx else s
        if isinstance(f, Forall):
            s = f"\\forall {f.var}: {go(f.body, _F_IMP)}"
            return f"({s})" if _F_IMP < ctx else s
        if isinstance(f, Exists):
            s = f"\\exists {f.var}: {go(f.body, _F_IMP)}"
            return f"({s})" if _F_IMP < ctx else s
        if isinstance(f, Box):
            return f"[{print_program(f.program)}] {go(f.post, _F_UNARY)}"
        if isinstance(f, Diamond):
            return f"<{print_program(f.program)}> {go(f.post, _F_UNARY)}"
        if isinstance(f, InBall):
            kind = {"ball": "B", "boundary": "dB", "complement": "coB"}[f.region]
            if len(f.point) == 1:
                pt = print_term(f.point[0], _TERM_ATOM)
            else:
                pt = "({})".format(", ".join(print_term(a) for a in f.point))
            return f"{pt} in {kind}_{print_term(f.radius, _TERM_ATOM)}"
        if isinstance(f, BallModality):
            open_, close = ("<", ">") if f.diamond else ("[", "]")
            return (f"_{print_term(f.pre_radius, _TERM_ATOM)}"
                    f"{open_}{print_program(f.program)}{close}"
                    f"_{print_term(f.post_radius, _TERM_ATOM)}")
        raise TypeError(f"not a formula: {f!r}")

    return go(f, level)


# ---------------------------------------------------------------------------
# Free variables, substitution


def term_symbols(t: Term) -> frozenset[str]:
    if isinstance(t, (Variable, Parameter)):
        return frozenset((t.name,))
    if isinstance(t, RationalConst):
        return frozenset()
    if isinstance(t, (Neg, Sin, Cos)):
        return term_symbols(t.arg)
    if isinstance(t, (Add, Sub, Mul, Div)):
        return term_symbols(t.left) | term_symbols(t.right)
    if isinstance(t, Pow):
        return term_symbols(t.base)
    if isinstance(t, Norm):
        out: frozenset[str] = frozenset()
        for a in t.args:
            out |= term_symbols(a)
        return out
    raise TypeError(f"not a term: {t!r}")


def free_symbols(f: Formula) -> frozenset[str]:
    """All names with a free occurrence (ODE state variables count as free:
    the initial state is part of a modal formula's meaning)."""
    if isinstance(f, (TrueF, FalseF)):
        return frozenset()
    if isinstance(f, Cmp):
        return term_symbols(f.left) | term_symbols(f.right)
    if isinstance(f, Not):
        return free_symbols(f.arg)
    if isinstance(f, (And, Or, Implies)):
        return free_symbols(f.left) | free_symbols(f.right)
    if isinstance(f, (Forall, Exists)):
        return free_symbols(f.body) - {f.var}
    if isinstance(f, (Box, Diamond)):
        out = free_symbols(f.post) | free_symbols(f.program.domain)
        for _, rhs in f.program.odes:
            out |= term_symbols(rhs)
        return out | frozenset(f.program.state_vars)
    if isinstance(f, InBall):
        out = term_symbols(f.radius)
        for a in f.point:
            out |= term_symbols(a)
        return out
    if isinstance(f, BallModality):
        out = term_symbols(f.pre_radius) | term_symbols(f.post_radius)
        out |= free_symbols(f.program.domain) | frozenset(f.program.state_vars)
        for _, rhs in f.program.odes:
            out |= term_symbols(rhs)
        return out
    raise TypeError(f"not a formula: {f!r}")


def substitute_term(t: Term, var: str, rep: Term) -> Term:
    if isinstance(t, (Variable, Parameter)):
        return rep if t.name == var else t
    if isinstance(t, RationalConst):
        return t
    if isinstance(t, Neg):
        return Neg(substitute_term(t.arg, var, rep))
    if isinstance(t, Add):
        return Add(substitute_term(t.left, var, rep), substitute_term(t.right, var, rep))
    if isinstance(t, Sub):
        return Sub(substitute_term(t.left, var, rep), substitute_term(t.right, var, rep))
    if isinstance(t, Mul):
        return Mul(substitute_term(t.left, var, rep), substitute_term(t.right, var, rep))
    if isinstance(t, Div):
        return Div(substitute_term(t.left, var, rep), t.right)
    if isinstance(t, Pow):
        return Pow(substitute_term(t.base, var, rep), t.exponent)
    if isinstance(t, Sin):
        return Sin(substitute_term(t.arg, var, rep))
    if isinstance(t, Cos):
        return Cos(substitute_term(t.arg, var, rep))
    if isinstance(t, Norm):
        return Norm(tuple(substitute_term(a, var, rep) for a in t.args))
    raise TypeError(f"not a term: {t!r}")


def substitute(f: Formula, var: str, rep: Term) -> Formula:
    """Replace free occurrences of `var` by `rep`.  Capture raises, it is never
    silently renamed."""
    if isinstance(rep, (Variable, Parameter)) and rep.name == var:
        return f
    rep_syms = term_symbols(rep)

    def go(f: Formula) -> Formula:
        if isinstance(f, (TrueF, FalseF)):
            return f
        if isinstance(f, Cmp):
            return Cmp(f.op, substitute_term(f.left, var, rep),
                       substitute_term(f.right, var, rep))
        if isinstance(f, Not):
            return Not(go(f.arg))
        if isinstance(f, And):
            return And(go(f.left), go(f.right))
        if isinstance(f, Or):
            return Or(go(f.left), go(f.right))
        if isinstance(f, Implies):
            return Implies(go(f.left), go(f.right))
        if isinstance(f, (Forall, Exists)):
            if f.var == var:
                return f
            if f.var in rep_syms and var in free_symbols(f.body):
                raise CaptureError(
                    f"substituting {var} would capture {f.var!r} under its binder",
                    binder=f.var)
            body = go(f.body)
            return Forall(f.var, body) if isinstance(f, Forall) else Exists(f.var, body)
        if isinstance(f, (Box, Diamond)):
            sv = set(f.program.state_vars)
            if var in sv:
                raise CaptureError(
                    f"cannot substitute ODE-bound variable {var!r}", binder=var)
            if rep_syms & sv and var in free_symbols(f):
                offender = sorted(rep_syms & sv)[0]
                raise CaptureError(
                    f"substituting {var} would capture state variable {offender!r}",
                    binder=offender)
            prog = HybridProgram(
                tuple((n, substitute_term(rhs, var, rep)) for n, rhs in f.program.odes),
                go(f.program.domain))
            post = go(f.post)
            return Box(prog, post) if isinstance(f, Box) else Diamond(prog, post)
        if isinstance(f, InBall):
            return InBall(tuple(substitute_term(a, var, rep) for a in f.point),
                          substitute_term(f.radius, var, rep), f.region)
        if isinstance(f, BallModality):
            sv = set(f.program.state_vars)
            if var in sv or (rep_syms & sv):
                raise CaptureError(
                    f"cannot substitute across ball-modality state variables", binder=var)
            prog = HybridProgram(
                tuple((n, substitute_term(rhs, var, rep)) for n, rhs in f.program.odes),
                go(f.program.domain))
            return BallModality(f.diamond, substitute_term(f.pre_radius, var, rep),
                                prog, substitute_term(f.post_radius, var, rep))
        raise TypeError(f"not a formula: {f!r}")

    return go(f)


# ---------------------------------------------------------------------------
# Ball-notation expansion


def norm_cmp(op: str, point: Sequence[Term], radius: Term) -> Cmp:
    return Cmp(op, Norm(tuple(point)), radius)


def expand_ball_notation(f: Formula) -> Formula:
    """Desugar ball membership and ball modalities; idempotent."""
    if isinstance(f, InBall):
        op = {"ball": "<=", "boundary": "=", "complement": ">"}[f.region]
        return norm_cmp(op, f.point, f.radius)
    if isinstance(f, BallModality):
        prog = HybridProgram(f.program.odes, expand_ball_notation(f.program.domain))
        point = tuple(Variable(n) for n in prog.state_vars)
        inner: Formula = Diamond(prog, norm_cmp("<=", point, f.post_radius)) \
            if f.diamond else Box(prog, norm_cmp("<=", point, f.post_radius))
        body: Formula = Implies(norm_cmp("<=", point, f.pre_radius), inner)
        for name in reversed(prog.state_vars):
            body = Forall(name, body)
        return body
    if isinstance(f, (TrueF, FalseF, Cmp)):
        return f
    if isinstance(f, Not):
        return Not(expand_ball_notation(f.arg))
    if isinstance(f, And):
        return And(expand_ball_notation(f.left), expand_ball_notation(f.right))
    if isinstance(f, Or):
        return Or(expand_ball_notation(f.left), expand_ball_notation(f.right))
    if isinstance(f, Implies):
        return Implies(expand_ball_notation(f.left), expand_ball_notation(f.right))
    if isinstance(f, Forall):
        return Forall(f.var, expand_ball_notation(f.body))
    if isinstance(f, Exists):
        return Exists(f.var, expand_ball_notation(f.body))
    if isinstance(f, Box):
        return Box(HybridProgram(f.program.odes, expand_ball_notation(f.program.domain)),
                   expand_ball_notation(f.post))
    if isinstance(f, Diamond):
        return Diamond(HybridProgram(f.program.odes, expand_ball_notation(f.program.domain)),
                       expand_ball_notation(f.post))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Comparison negation (negation normal at the atom level)

_NEG_OP = {"<": ">=", "<=": ">", "=": "!=", "!=": "=", ">=": "<", ">": "<="}


def negate_atom(f: Formula) -> Formula:
    """Push one negation into a comparison/constant; wrap anything else in Not."""
    if isinstance(f, Cmp):
        return Cmp(_NEG_OP[f.op], f.left, f.right)
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Not):
        return f.arg
    return Not(f)


# Convenience builders used across the package.

def conj(*fs: Formula) -> Formula:
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def forall_vars(names: Sequence[str], body: Formula) -> Formula:
    for n in reversed(names):
        body = Forall(n, body)
    return body
