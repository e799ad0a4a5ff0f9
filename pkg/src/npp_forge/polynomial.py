"""Multivariate polynomials, polynomial systems and rational maps.

Polynomials are sparse ``{exponent tuple: coefficient}`` dictionaries over an
ordered variable registry. Parsed systems carry integer coefficients; the
rational maps built by the reductions may carry rational ones.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .exact_geometry import format_rational, parse_rational


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class EvaluationError(ValueError):
    """A denominator vanished or an assignment was incomplete."""


def _norm(c):
    if isinstance(c, Fraction) and c.denominator == 1:
        return c.numerator
    return c


def _merge(e1: tuple, e2: tuple) -> tuple:
    """Multiply two sparse monomials ``((index, power), ...)``."""
    if not e1:
        return e2
    if not e2:
        return e1
    d = dict(e1)
    for i, k in e2:
        d[i] = d.get(i, 0) + k
    return tuple(sorted(d.items()))


def _sparse(exp) -> tuple:
    return tuple((i, k) for i, k in enumerate(exp) if k)


class Polynomial:
    """Sparse polynomial; monomials are tuples of ``(variable index, power)``."""

    __slots__ = ("variables", "terms")

    def __init__(self, variables: Sequence[str], terms: Mapping[tuple, object] | None = None, dense: bool = False):
        self.variables = tuple(variables) if not isinstance(variables, tuple) else variables
        clean = {}
        for exp, c in (terms or {}).items():
            if dense:
                if len(exp) != len(self.variables):
                    raise ValueError(f"exponent {exp} does not match {len(self.variables)} variables")
                exp = _sparse(exp)
            if c:
                clean[exp] = _norm(c)
        self.terms = clean

    # constructors
    @classmethod
    def constant(cls, value, variables: Sequence[str]) -> "Polynomial":
        return cls(variables, {(): value})

    @classmethod
    def var(cls, name: str, variables: Sequence[str]) -> "Polynomial":
        variables = tuple(variables)
        try:
            idx = variables.index(name)
        except ValueError:
            raise ValueError(f"{name!r} is not in the registry") from None
        return cls(variables, {((idx, 1),): 1})

    # structure
    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not e for e in self.terms)

    def constant_term(self):
        return self.terms.get((), 0)

    def degree(self) -> int:
        return max((sum(k for _, k in e) for e in self.terms), default=0)

    def var_degrees(self) -> dict:
        degs: dict = {}
        for e in self.terms:
            for i, k in e:
                if k > degs.get(i, 0):
                    degs[i] = k
        return degs

    def dense_terms(self) -> dict:
        n = len(self.variables)
        out = {}
        for e, c in self.terms.items():
            d = [0] * n
            for i, k in e:
                d[i] = k
            out[tuple(d)] = c
        return out

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.variables == other.variables and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == ({(): _norm(Fraction(other))} if other else {})
        return NotImplemented

    def __hash__(self):
        return hash((self.variables, frozenset(self.terms.items())))

    def __repr__(self):
        return f"Polynomial({format_polynomial(self)!r})"

    # arithmetic
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.variables != self.variables:
                raise ValueError("polynomials over different registries")
            return other
        return Polynomial.constant(other, self.variables)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Polynomial(self.variables, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            if not other:
                return Polynomial(self.variables)
            return Polynomial(self.variables, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = _merge(e1, e2)
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial(self.variables, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative exponent")
        result = Polynomial.constant(1, self.variables)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # evaluation
    def evaluate(self, values: Sequence):
        """Evaluate at a point given in registry order (Fractions or floats)."""
        if len(values) != len(self.variables):
            raise EvaluationError("assignment does not match the registry")
        total = 0
        for e, c in self.terms.items():
            t = c
            for i, k in e:
                t = t * (values[i] if k == 1 else values[i] ** k)
            total = total + t
        if isinstance(total, int):
            return Fraction(total)
        return total

    def substitute(self, comps: Sequence[tuple], variables: Sequence[str]):
        """Substitute rational functions ``comps[i] = (num, den)`` for variable i.

        Returns ``(numerator, degrees)``; the value is the numerator divided by
        ``prod(den_i ** degrees[i])``.
        """
        degs = self.var_degrees()
        num_pows = {i: _powers(comps[i][0], d) for i, d in degs.items()}
        den_pows = {i: _powers(comps[i][1], d) for i, d in degs.items()}
        out = Polynomial(variables)
        for e, c in self.terms.items():
            t = Polynomial.constant(c, variables)
            present = dict(e)
            for i, d in degs.items():
                k = present.get(i, 0)
                if k:
                    t = t * num_pows[i][k]
                if d - k and comps[i][1] != 1:
                    t = t * den_pows[i][d - k]
            out = out + t
        return out, degs


def _powers(p: Polynomial, d: int) -> list:
    out = [Polynomial.constant(1, p.variables)]
    for _ in range(d):
        out.append(out[-1] * p)
    return out


def _term_key(exp):
    return (-sum(k for _, k in exp), tuple((i, -k) for i, k in exp))


def format_polynomial(p: Polynomial) -> str:
    if p.is_zero():
        return "0"
    pieces = []
    for exp in sorted(p.terms, key=_term_key):
        c = Fraction(p.terms[exp])
        mono = "*".join(
            p.variables[i] if k == 1 else f"{p.variables[i]}^{k}" for i, k in exp
        )
        mag = abs(c)
        if mono and mag == 1:
            body = mono
        elif mono:
            body = f"{format_rational(mag)}*{mono}"
        else:
            body = format_rational(mag)
        sign = "-" if c < 0 else "+"
        if not pieces:
            pieces.append(("-" if c < 0 else "") + body)
        else:
            pieces.append(f" {sign} {body}")
    return "".join(pieces)


@dataclass
class PolySystem:
    """Polynomial equations ``f = 0`` with a declared bounding radius."""

    polynomials: list
    bound: Fraction
    variables: tuple = ()

    def __post_init__(self):
        self.bound = Fraction(self.bound)
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        self.variables = tuple(self.variables)
        for p in self.polynomials:
            if p.variables != self.variables:
                raise ValueError("all polynomials must share the registry")

    def __eq__(self, other):
        return (
            isinstance(other, PolySystem)
            and self.variables == other.variables
            and self.bound == other.bound
            and self.polynomials == other.polynomials
        )


def evaluate(system: PolySystem, assignment: Mapping[str, object]) -> list:
    missing = [v for v in system.variables if v not in assignment]
    if missing:
        raise EvaluationError(f"missing variable(s): {', '.join(missing)}")
    vals = [assignment[v] for v in system.variables]
    vals = [Fraction(v) if isinstance(v, (int, str)) else v for v in vals]
    return [p.evaluate(vals) for p in system.polynomials]


def format_system(system: PolySystem) -> str:
    lines = [f"bound {format_rational(system.bound)}"]
    lines += [f"{format_polynomial(p)} = 0" for p in system.polynomials]
    return "\n".join(lines) + "\n"


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)|(?P<op>[-+*^()=])|(?P<bad>\S))")


def _tokenize(line: str, lineno: int):
    pos = 0
    out = []
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m or m.end() == pos:
            break
        col = m.start(m.lastgroup) + 1
        kind = m.lastgroup
        text = m.group(kind)
        if kind == "bad":
            if text in "./":
                raise ParseError("non-integer coefficient (only integer literals are allowed)", lineno, col)
            raise ParseError(f"unexpected character {text!r}", lineno, col)
        out.append((kind, text, col))
        pos = m.end()
    out.append(("end", "", len(line) + 1))
    return out


class _Parser:
    def __init__(self, tokens, lineno):
        self.toks = tokens
        self.i = 0
        self.lineno = lineno

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.lineno, tok[2])

    def expect(self, text):
        t = self.peek()
        if t[1] != text or t[0] != "op":
            self.fail(f"expected {text!r}, found {t[1] or 'end of line'!r}")
        return self.take()

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = ("+" if op == "+" else "-", node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            node = ("*", node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return ("neg", self.unary())
        if self.peek()[0] == "op" and self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[0] != "num":
                self.fail("exponent must be a nonnegative integer literal")
            self.take()
            return ("^", base, int(tok[1]))
        return base

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            nxt = self.peek()
            if nxt[0] in ("ident", "num") or (nxt[0] == "op" and nxt[1] == "("):
                self.fail("missing operator (use '*' for multiplication)", nxt)
            return ("num", int(tok[1]))
        if tok[0] == "ident":
            self.take()
            return ("var", tok[1])
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected {tok[1] or 'end of line'!r}")


def _collect_vars(node, acc):
    kind = node[0]
    if kind == "var":
        acc.add(node[1])
    elif kind in ("+", "-", "*"):
        _collect_vars(node[1], acc)
        _collect_vars(node[2], acc)
    elif kind in ("neg", "^"):
        _collect_vars(node[1], acc)


def _to_poly(node, variables) -> Polynomial:
    kind = node[0]
    if kind == "num":
        return Polynomial.constant(node[1], variables)
    if kind == "var":
        return Polynomial.var(node[1], variables)
    if kind == "neg":
        return -_to_poly(node[1], variables)
    if kind == "^":
        return _to_poly(node[1], variables) ** node[2]
    a, b = _to_poly(node[1], variables), _to_poly(node[2], variables)
    return a + b if kind == "+" else a - b if kind == "-" else a * b


def parse_system(text: str) -> PolySystem:
    """Parse ``bound <L>`` followed by ``<polynomial> = <polynomial>`` lines."""
    bound = None
    equations = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if bound is None:
            m = re.match(r"\s*bound\s+(\S+)\s*$", line)
            if not m:
                raise ParseError("missing bound declaration ('bound <positive rational>')", lineno, 1)
            try:
                bound = parse_rational(m.group(1))
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"invalid bound {m.group(1)!r}", lineno, m.start(1) + 1) from None
            if bound <= 0:
                raise ParseError("bound must be positive", lineno, m.start(1) + 1)
            continue
        parser = _Parser(_tokenize(line, lineno), lineno)
        lhs = parser.expr()
        parser.expect("=")
        rhs = parser.expr()
        if parser.peek()[0] != "end":
            parser.fail(f"unexpected {parser.peek()[1]!r}")
        equations.append(("-", lhs, rhs))
    if bound is None:
        raise ParseError("missing bound declaration ('bound <positive rational>')", 1, 1)
    names: set = set()
    for eq in equations:
        _collect_vars(eq, names)
    variables = tuple(sorted(names))
    return PolySystem([_to_poly(eq, variables) for eq in equations], bound, variables)


# --- rational maps -----------------------------------------------------------

@dataclass
class RationalMap:
    """Vector of rational functions ``num_i / den_i`` over ``source``."""

    source: tuple
    target: tuple
    components: list = field(default_factory=list)

    def __post_init__(self):
        self.source = tuple(self.source)
        self.target = tuple(self.target)
        if len(self.components) != len(self.target):
            raise ValueError("component count must equal target arity")
        for num, den in self.components:
            if den.is_zero():
                raise ValueError("denominator is identically zero")
            if num.variables != self.source or den.variables != self.source:
                raise ValueError("component registry differs from the source registry")

    @classmethod
    def identity(cls, names: Sequence[str]) -> "RationalMap":
        names = tuple(names)
        one = Polynomial.constant(1, names)
        return cls(names, names, [(Polynomial.var(v, names), one) for v in names])

    @classmethod
    def from_polynomials(cls, source, target, polys) -> "RationalMap":
        one = Polynomial.constant(1, source)
        return cls(source, target, [(p, one) for p in polys])


def apply_map(fmap: RationalMap, assignment) -> dict:
    """Evaluate componentwise; raises :class:`EvaluationError` on a zero denominator."""
    if isinstance(assignment, Mapping):
        missing = [v for v in fmap.source if v not in assignment]
        if missing:
            raise EvaluationError(f"missing variable(s): {', '.join(missing)}")
        vals = [assignment[v] for v in fmap.source]
    else:
        vals = list(assignment)
    vals = [Fraction(v) if isinstance(v, (int, str)) else v for v in vals]
    out = {}
    cache: dict = {}
    for name, (num, den) in zip(fmap.target, fmap.components):
        key = id(den)
        if key not in cache:
            cache[key] = den.evaluate(vals)
        d = cache[key]
        if d == 0:
            raise EvaluationError(f"denominator of component {name!r} vanishes at the point")
        n = num.evaluate(vals)
        out[name] = n / d
    return out


def compose_maps(g: RationalMap, f: RationalMap) -> RationalMap:
    """``g o f``; requires ``g.source == f.target``."""
    if g.source != f.target:
        raise ValueError("registries do not chain: g.source must equal f.target")
    comps = list(f.components)
    src = f.source
    out = []
    for num, den in g.components:
        n_poly, n_degs = num.substitute(comps, src)
        d_poly, d_degs = den.substitute(comps, src)
        n_extra = Polynomial.constant(1, src)
        d_extra = Polynomial.constant(1, src)
        for i in sorted(set(n_degs) | set(d_degs)):
            dn, dd = n_degs.get(i, 0), d_degs.get(i, 0)
            if dd > dn:
                n_extra = n_extra * comps[i][1] ** (dd - dn)
            elif dn > dd:
                d_extra = d_extra * comps[i][1] ** (dn - dd)
        out.append(_cancel_constant(n_poly * n_extra, d_poly * d_extra))
    return RationalMap(src, g.target, out)


def _cancel_constant(num: Polynomial, den: Polynomial):
    """Normalise a constant denominator to 1."""
    if den.is_constant():
        c = Fraction(den.constant_term())
        return num * (1 / c), Polynomial.constant(1, den.variables)
    return num, den


# --- JSON for witness maps -----------------------------------------------------

def polynomial_to_json(p: Polynomial) -> list:
    """Terms as ``[[[name, exponent], ...], "coefficient"]`` in canonical order."""
    return [
        [[[p.variables[i], k] for i, k in exp], format_rational(Fraction(p.terms[exp]))]
        for exp in sorted(p.terms, key=_term_key)
    ]


def polynomial_from_json(data, variables: Sequence[str]) -> Polynomial:
    variables = tuple(variables)
    pos = {v: i for i, v in enumerate(variables)}
    out = Polynomial.constant(0, variables)
    for mono, coef in data:
        term = Polynomial.constant(parse_rational(coef), variables)
        for name, k in mono:
            if name not in pos:
                raise ValueError(f"unknown variable {name!r} in witness term")
            term = term * Polynomial.var(name, variables) ** int(k)
        out = out + term
    return out


def map_to_json(fmap: RationalMap) -> dict:
    return {
        "source": list(fmap.source),
        "target": list(fmap.target),
        "components": [
            {"num": polynomial_to_json(n), "den": polynomial_to_json(d)} for n, d in fmap.components
        ],
    }


def map_from_json(data) -> RationalMap:
    src = tuple(data["source"])
    comps = [
        (polynomial_from_json(c["num"], src), polynomial_from_json(c["den"], src))
        for c in data["components"]
    ]
    return RationalMap(src, tuple(data["target"]), comps)
