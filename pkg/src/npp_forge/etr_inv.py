"""Reduction of bounded polynomial systems to ETR-INV systems.

An ETR-INV system has variables ranging over the closed interval [1/2, 2] and
two constraint kinds: ``Add(x, y, z)`` meaning ``x + y = z`` and ``Inv(x, y)``
meaning ``x * y = 1``.

The reduction encodes every real quantity ``Q`` that occurs while evaluating
the input polynomials as a variable whose value is ``9/8 + s*Q`` for a
power-of-two scale ``s`` chosen so the value stays in ``[1, 5/4]``. Sums,
negations and products of encodings are realised by small gadgets built from
Add/Inv constraints. Every introduced variable carries an exact rational
interval, and the builder refuses to emit a variable whose interval leaves
[1/2, 2].
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .exact_geometry import format_rational
from .polynomial import Polynomial, PolySystem, RationalMap

LOW, HIGH = Fraction(1, 2), Fraction(2)
CENTER = Fraction(9, 8)
DEV = Fraction(1, 8)  # encodings keep |s*Q| <= 1/8


class ConstructionError(RuntimeError):
    """A gadget would place a variable outside [1/2, 2]."""


class InvFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Add:
    x: str
    y: str
    z: str

    def names(self):
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Inv:
    x: str
    y: str

    def names(self):
        return (self.x, self.y)


@dataclass
class EtrInvSystem:
    variables: list
    constraints: list
    notes: list = field(default_factory=list)

    def __post_init__(self):
        declared = set(self.variables)
        if len(declared) != len(self.variables):
            raise ValueError("duplicate variable declaration")
        for c in self.constraints:
            for v in c.names():
                if v not in declared:
                    raise ValueError(f"constraint {c} references undeclared variable {v!r}")

    @property
    def n_add(self):
        return sum(isinstance(c, Add) for c in self.constraints)

    @property
    def n_inv(self):
        return sum(isinstance(c, Inv) for c in self.constraints)


@dataclass
class ReductionWitness:
    forward: RationalMap
    backward: RationalMap
    intervals: dict = field(default_factory=dict)  # variable -> enclosure over the source box


def check_inv_assignment(system: EtrInvSystem, assignment: Mapping[str, object], tol=None):
    """Return ``(ok, index)``; ``index`` is the first violated constraint.

    Exact when ``tol`` is None. A range violation is reported with index -1.
    """
    missing = [v for v in system.variables if v not in assignment]
    if missing:
        raise KeyError(f"missing variable(s): {', '.join(missing)}")
    slack = 0 if tol is None else tol
    for v in system.variables:
        val = assignment[v]
        if val < LOW - slack or val > HIGH + slack:
            return False, -1
    for idx, c in enumerate(system.constraints):
        if isinstance(c, Add):
            r = assignment[c.x] + assignment[c.y] - assignment[c.z]
        else:
            r = assignment[c.x] * assignment[c.y] - 1
        if (r != 0) if tol is None else abs(r) > tol:
            return False, idx
    return True, None


def format_inv_system(system: EtrInvSystem) -> str:
    lines = [f"var {v}" for v in system.variables]
    for c in system.constraints:
        if isinstance(c, Add):
            lines.append(f"add {c.x} {c.y} {c.z}")
        else:
            lines.append(f"inv {c.x} {c.y}")
    return "\n".join(lines) + "\n"


def parse_inv_system(text: str) -> EtrInvSystem:
    variables, constraints = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        kind, args = parts[0], parts[1:]
        if kind == "var" and len(args) == 1:
            variables.append(args[0])
        elif kind == "add" and len(args) == 3:
            constraints.append(Add(*args))
        elif kind == "inv" and len(args) == 2:
            constraints.append(Inv(*args))
        else:
            raise InvFormatError(f"line {lineno}: cannot parse {raw.strip()!r}")
    try:
        return EtrInvSystem(variables, constraints)
    except ValueError as exc:
        raise InvFormatError(str(exc)) from None


# --- interval helpers ---------------------------------------------------------

def _iadd(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _iscale(a, c):
    lo, hi = a[0] * c, a[1] * c
    return (lo, hi) if lo <= hi else (hi, lo)


def _imul(a, b):
    ps = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    return (min(ps), max(ps))


def _isq(a):
    lo, hi = a
    if lo >= 0:
        return (lo * lo, hi * hi)
    if hi <= 0:
        return (hi * hi, lo * lo)
    return (Fraction(0), max(lo * lo, hi * hi))


def _shift(a, c):
    return (a[0] + c, a[1] + c)


def _poly_interval(p: Polynomial, box):
    """Natural interval extension over ``box[i] = (lo, hi)``."""
    total = (Fraction(0), Fraction(0))
    for e, c in p.terms.items():
        t = (Fraction(c), Fraction(c))
        for i, k in e:
            f = box[i]
            pw = _isq(f) if k == 2 else f
            if k > 2:
                pw = f
                for _ in range(k - 1):
                    pw = _imul(pw, f)
            t = _imul(t, pw)
        total = _iadd(total, t)
    return total


@dataclass
class _Enc:
    """Variable ``var`` holds ``9/8 + scale*q``; ``dev`` bounds ``scale*q``."""

    var: str
    scale: Fraction
    q: Polynomial
    dev: tuple


class _Builder:
    def __init__(self, source: Sequence[str], radius: Fraction):
        self.source = tuple(source)
        self.radius = radius
        self.names: list = []
        self.exprs: dict = {}
        self.intervals: dict = {}
        self.cons: list = []
        self._counter: dict = {}
        self._consts: dict = {}
        self._halves: dict = {}
        self._invs: dict = {}
        self._squares: dict = {}
        self._negs: dict = {}
        self._one = Polynomial.constant(1, self.source)

    # -- variables
    def _fresh(self, prefix):
        k = self._counter.get(prefix, 0)
        self._counter[prefix] = k + 1
        return f"{prefix}{k}"

    def new_var(self, prefix, num, den, interval, gadget, name=None):
        lo, hi = interval
        if lo < LOW or hi > HIGH:
            raise ConstructionError(
                f"gadget {gadget!r}: interval [{format_rational(lo)}, {format_rational(hi)}] "
                "leaves [1/2, 2]"
            )
        name = name or self._fresh(prefix)
        self.names.append(name)
        self.exprs[name] = (num, den if den is not None else self._one)
        self.intervals[name] = (lo, hi)
        return name

    def _poly(self, name):
        num, den = self.exprs[name]
        if den != 1:
            raise AssertionError(f"{name} is not polynomial in the source")
        return num

    # -- primitive operations
    def const(self, c) -> str:
        c = Fraction(c)
        if c in self._consts:
            return self._consts[c]
        if not LOW <= c <= HIGH or c.denominator & (c.denominator - 1):
            raise ConstructionError(f"gadget 'constant': {c} is not a dyadic rational in [1/2, 2]")
        cname = "c" + format_rational(c).replace("/", "_")
        if c == 1:
            name = self.new_var("", Polynomial.constant(1, self.source), None, (c, c), "constant", name="one")
            self.cons.append(Inv(name, name))
        elif c > 1:
            p, k = c.numerator, c.denominator
            a, b = Fraction(p // 2, k), Fraction(p - p // 2, k)
            if c == 2:
                a = b = Fraction(1)
            an, bn = self.const(a), self.const(b)
            name = self.new_var("", Polynomial.constant(c, self.source), None, (c, c), "constant", name=cname)
            self.cons.append(Add(an, bn, name))
        else:
            dbl = self.const(2 * c)
            name = self.new_var("", Polynomial.constant(c, self.source), None, (c, c), "constant", name=cname)
            self.cons.append(Add(name, name, dbl))
        self._consts[c] = name
        return name

    def half(self, v, gadget="half") -> str:
        if v in self._halves:
            return self._halves[v]
        lo, hi = self.intervals[v]
        h = self.new_var("h", self._poly(v) * Fraction(1, 2), None, (lo / 2, hi / 2), gadget)
        self.cons.append(Add(h, h, v))
        self._halves[v] = h
        return h

    def add(self, a, b, gadget="add", interval=None) -> str:
        iv = interval or _iadd(self.intervals[a], self.intervals[b])
        z = self.new_var("s", self._poly(a) + self._poly(b), None, iv, gadget)
        self.cons.append(Add(a, b, z))
        return z

    def sub(self, a, b, gadget="sub", interval=None, expr=None) -> str:
        la, ha = self.intervals[a]
        lb, hb = self.intervals[b]
        iv = interval or (la - hb, ha - lb)
        num, den = expr if expr else (self._poly(a) - self._poly(b), None)
        d = self.new_var("d", num, den, iv, gadget)
        self.cons.append(Add(b, d, a))
        return d

    def inv(self, v, gadget="inv") -> str:
        if v in self._invs:
            return self._invs[v]
        lo, hi = self.intervals[v]
        num, den = self.exprs[v]
        w = self.new_var("r", den, num, (1 / hi, 1 / lo), gadget)
        self.cons.append(Inv(v, w))
        self._invs[v] = w
        self._invs[w] = v
        return w

    def shift(self, v, delta, gadget="shift") -> str:
        """New variable equal to ``v + delta`` (one or two Add steps)."""
        delta = Fraction(delta)
        if delta == 0:
            return v
        lo, hi = self.intervals[v]
        if LOW <= delta <= HIGH and _dyadic(delta) and hi + delta <= HIGH:
            return self.add(v, self.const(delta), gadget)
        if LOW <= -delta <= HIGH and _dyadic(delta) and lo + delta >= LOW:
            return self.sub(v, self.const(-delta), gadget)
        for k in (Fraction(j, 16) for j in range(8, 33)):
            # up by k then down by k - delta
            if hi + k <= HIGH and LOW <= k - delta <= HIGH and lo + delta >= LOW:
                return self.sub(self.add(v, self.const(k), gadget), self.const(k - delta), gadget)
            # down by k then up by k + delta
            if lo - k >= LOW and LOW <= k + delta <= HIGH and hi + delta <= HIGH:
                return self.add(self.sub(v, self.const(k), gadget), self.const(k + delta), gadget)
        raise ConstructionError(f"gadget {gadget!r}: cannot shift by {delta} within [1/2, 2]")

    def square_var(self, t) -> str:
        """``t^2`` for ``t`` in ``[1, 5/4]`` through reciprocal identities."""
        if t in self._squares:
            return self._squares[t]
        lo, hi = self.intervals[t]
        if lo < 1 or hi > Fraction(5, 4):
            raise ConstructionError(f"gadget 'square': input interval [{lo}, {hi}] not within [1, 5/4]")
        T = self._poly(t)
        a = self.shift(t, Fraction(-1, 2), "square")  # t - 1/2
        i1 = self.inv(a, "square")  # 1/(t - 1/2)
        i2 = self.inv(t, "square")  # 1/t
        e_poly = 2 * T * T - T
        d = self.sub(
            i1, i2, "square",
            interval=(1 / (2 * hi * hi - hi), 1 / (2 * lo * lo - lo)),
            expr=(self._one, e_poly),
        )  # 1/(2t^2 - t)
        e = self.inv(d, "square")  # 2t^2 - t
        h = self.half(e, "square")  # t^2 - t/2
        ht = self.half(t, "square")
        sq = self.add(h, ht, "square", interval=(lo * lo, hi * hi))
        self._squares[t] = sq
        return sq

    def neg_var(self, v) -> str:
        """``9/4 - v``; maps an encoding of ``Q`` to one of ``-Q``."""
        if v in self._negs:
            return self._negs[v]
        w = self.shift(self.sub(self.const(2), v, "negate"), Fraction(1, 4), "negate")
        self._negs[v] = w
        self._negs[w] = v
        return w

    def avg(self, a, b, gadget="average", interval=None) -> str:
        return self.add(self.half(a, gadget), self.half(b, gadget), gadget, interval=interval)

    # -- encodings
    def source_enc(self, i) -> _Enc:
        name = self.source[i]
        x = Polynomial.var(name, self.source)
        s = 1 / (8 * self.radius)
        t = self.new_var(
            "", CENTER + s * x, None, (Fraction(1), Fraction(5, 4)), "source", name=f"t_{name}"
        )
        return _Enc(t, s, x, (-DEV, DEV))

    def enc_rescale_down(self, A: _Enc) -> _Enc:
        w = self.shift(self.half(A.var, "rescale"), Fraction(9, 16), "rescale")
        return _Enc(w, A.scale / 2, A.q, _iscale(A.dev, Fraction(1, 2)))

    def enc_neg(self, A: _Enc) -> _Enc:
        return _Enc(self.neg_var(A.var), A.scale, -A.q, _iscale(A.dev, -1))

    def enc_add(self, A: _Enc, B: _Enc) -> _Enc:
        while A.scale > B.scale:
            A = self.enc_rescale_down(A)
        while B.scale > A.scale:
            B = self.enc_rescale_down(B)
        w = self.avg(A.var, B.var, "sum")
        return _Enc(w, A.scale / 2, A.q + B.q, _iscale(_iadd(A.dev, B.dev), Fraction(1, 2)))

    def enc_add_const(self, A: _Enc, c) -> _Enc:
        c = Fraction(c)
        if c == 0:
            return A
        while True:
            dev = _shift(A.dev, A.scale * c)
            if -DEV <= dev[0] and dev[1] <= DEV:
                break
            A = self.enc_rescale_down(A)
        w = self.shift(A.var, A.scale * c, "constant term")
        return _Enc(w, A.scale, A.q + c, dev)

    def enc_square(self, A: _Enc) -> _Enc:
        a2 = _isq(A.dev)
        s1 = self.avg(
            self.square_var(A.var), self.square_var(self.neg_var(A.var)), "product",
            interval=_shift(a2, Fraction(81, 64)),
        )  # 81/64 + a^2
        w = self.shift(self.half(s1, "product"), Fraction(63, 128), "product")
        return _Enc(w, A.scale * A.scale / 2, A.q * A.q, _iscale(a2, Fraction(1, 2)))

    def enc_mul(self, A: _Enc, B: _Enc) -> _Enc:
        if A.var == B.var:
            return self.enc_square(A)
        m = self.avg(A.var, B.var, "product")  # 9/8 + (a+b)/2
        p = self.avg(A.var, self.neg_var(B.var), "product")  # 9/8 + (a-b)/2
        u = _iscale(_iadd(A.dev, B.dev), Fraction(1, 2))
        v = _iscale(_iadd(A.dev, _iscale(B.dev, -1)), Fraction(1, 2))
        s1 = self.avg(
            self.square_var(m), self.square_var(self.neg_var(m)), "product",
            interval=_shift(_isq(u), Fraction(81, 64)),
        )
        s2 = self.avg(
            self.square_var(p), self.square_var(self.neg_var(p)), "product",
            interval=_shift(_isq(v), Fraction(81, 64)),
        )
        g = self.shift(self.half(s1, "product"), Fraction(5, 4), "product")
        ab = _imul(A.dev, B.dev)
        w0 = self.sub(g, self.half(s2, "product"), "product",
                      interval=_shift(_iscale(ab, Fraction(1, 2)), Fraction(5, 4)))
        w = self.shift(w0, Fraction(-1, 8), "product")
        return _Enc(w, A.scale * B.scale / 2, A.q * B.q, _iscale(ab, Fraction(1, 2)))

    def enc_sum(self, encs: list) -> _Enc:
        heap = [(-e.scale, k, e) for k, e in enumerate(encs)]
        heapq.heapify(heap)
        counter = len(encs)
        while len(heap) > 1:
            _, _, a = heapq.heappop(heap)
            _, _, b = heapq.heappop(heap)
            c = self.enc_add(a, b)
            heapq.heappush(heap, (-c.scale, counter, c))
            counter += 1
        return heap[0][2]


def _dyadic(q: Fraction) -> bool:
    d = q.denominator
    return d & (d - 1) == 0


def _power_of_two_at_least(x: Fraction) -> Fraction:
    p = Fraction(1)
    while p < x:
        p *= 2
    while p / 2 >= x:
        p /= 2
    return p


UNSAT_NOTE = "contradictory constant constraint; emitted canonical unsatisfiable system"


def reduce_poly_to_inv(system: PolySystem):
    """Build an ETR-INV system whose solutions correspond to ``V(F)`` in the box.

    Returns ``(EtrInvSystem, ReductionWitness)``. The box radius is the
    declared bound rounded up to a power of two.
    """
    src = tuple(system.variables)
    radius = _power_of_two_at_least(system.bound)
    polys = [p for p in system.polynomials if not p.is_zero()]
    if any(p.is_constant() for p in polys):
        return _unsat(src, radius)
    b = _Builder(src, radius)
    sources = [b.source_enc(i) for i in range(len(src))]
    if polys:
        b.const(Fraction(1))
    for s in sources:
        # restrict t to [1, 5/4], i.e. x to [-radius, radius]
        b.shift(s.var, Fraction(-1, 2), "box")
        b.sub(b.const(Fraction(7, 4)), s.var, "box")
    monos: dict = {}

    def mono(exp):
        if exp in monos:
            return monos[exp]
        if len(exp) == 1 and exp[0][1] == 1:
            enc = sources[exp[0][0]]
        else:
            d = dict(exp)
            lo = {i: k // 2 for i, k in d.items() if k // 2}
            if not lo:  # squarefree with several variables: peel one variable
                i0 = min(d)
                lo = {i0: 1}
            hi = {i: d[i] - lo.get(i, 0) for i in d if d[i] - lo.get(i, 0)}
            lo_t, hi_t = tuple(sorted(lo.items())), tuple(sorted(hi.items()))
            enc = b.enc_square(mono(lo_t)) if lo_t == hi_t else b.enc_mul(mono(lo_t), mono(hi_t))
        monos[exp] = enc
        return enc

    for p in polys:
        terms = []
        for exp in sorted(p.terms, key=lambda e: (sum(k for _, k in e), e)):
            if not exp:
                continue
            c = Fraction(p.terms[exp])
            base = mono(exp)
            if c < 0:
                base = b.enc_neg(base)
            mag = abs(c)
            if mag.denominator != 1:
                raise ConstructionError("coefficients must be integers")
            bit = 0
            n = mag.numerator
            while n:
                if n & 1:
                    f = Fraction(2) ** bit
                    terms.append(_Enc(base.var, base.scale / f, base.q * f, base.dev))
                n >>= 1
                bit += 1
        enc = b.enc_sum(terms)
        enc = b.enc_add_const(enc, p.constant_term())
        # pin the encoding at 9/8, i.e. p = 0
        b.cons.append(Add(enc.var, b.const(Fraction(1, 2)), b.const(Fraction(13, 8))))

    inv_system = EtrInvSystem(list(b.names), list(b.cons))
    forward = RationalMap(src, tuple(b.names), [b.exprs[v] for v in b.names])
    names = tuple(b.names)
    backward = RationalMap.from_polynomials(
        names, src,
        [8 * radius * (Polynomial.var(f"t_{x}", names) - CENTER) for x in src],
    )
    return inv_system, ReductionWitness(forward, backward, dict(b.intervals))


def _unsat(src, radius):
    w = "w"
    system = EtrInvSystem([w], [Inv(w, w), Add(w, w, w)], notes=[UNSAT_NOTE])
    one = Polynomial.constant(1, src)
    forward = RationalMap(src, (w,), [(one, one)])
    backward = RationalMap.from_polynomials((w,), src, [Polynomial((w,)) for _ in src])
    return system, ReductionWitness(forward, backward)
