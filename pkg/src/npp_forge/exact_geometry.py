"""Exact rational geometry: LP feasibility, hull membership, affine rank.

Everything here works on :class:`fractions.Fraction` scalars. Points are plain
tuples of Fractions. No floating point is used anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

Point = tuple  # tuple[Fraction, ...]

GE, LE, EQ = ">=", "<=", "="
_RELATIONS = (GE, LE, EQ)

# Shared zero; sparse helpers test identity with it before comparing values.
ZERO = Fraction(0)


class GeometryInputError(ValueError):
    """Raised on malformed geometric input (dimension mismatch, empty sets)."""


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value if value else ZERO
    if isinstance(value, float):
        raise TypeError("floats are not accepted in exact geometry; use Fraction or str")
    return Fraction(value)


def point(*coords) -> Point:
    """Build a point from ints, Fractions or ``"p/q"`` strings."""
    if len(coords) == 1 and not isinstance(coords[0], (int, Fraction, str)):
        coords = tuple(coords[0])
    return tuple(to_fraction(c) for c in coords)


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def parse_rational(text) -> Fraction:
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    text = str(text).strip()
    if not text:
        raise ValueError("empty rational")
    if "/" in text:
        num, den = text.split("/", 1)
        if int(den) == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return Fraction(int(num), int(den)) or ZERO
    return Fraction(int(text)) or ZERO


def dot(a: Sequence, b: Sequence) -> Fraction:
    return sum((x * y for x, y in zip(a, b) if x and y), Fraction(0))


def _check_dims(points: Iterable[Point], dim: int) -> None:
    for p in points:
        if len(p) != dim:
            raise GeometryInputError(f"dimension mismatch: expected {dim}, got {len(p)}")


@dataclass(frozen=True)
class Halfspace:
    """Affine constraint ``<normal, x> relation offset``."""

    normal: Point
    offset: Fraction
    relation: str = GE

    def __post_init__(self):
        if self.relation not in _RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if not any(self.normal):
            raise ValueError("halfspace normal must be nonzero")

    @cached_property
    def support(self) -> tuple:
        return tuple((i, c) for i, c in enumerate(self.normal) if c)

    def value(self, x: Sequence) -> Fraction:
        return sum((c * x[i] for i, c in self.support), Fraction(0))

    def holds(self, x: Sequence) -> bool:
        v = self.value(x)
        if self.relation == GE:
            return v >= self.offset
        if self.relation == LE:
            return v <= self.offset
        return v == self.offset

    def is_tight(self, x: Sequence) -> bool:
        return self.value(x) == self.offset


@dataclass(frozen=True)
class Certificate:
    """Witness for a hull-membership decision.

    ``inside`` lists ``(generator index, coefficient)`` pairs with positive
    coefficients; ``separator`` is a halfspace ``<a, x> <= c`` satisfied
    strictly by every generator and violated strictly by the query.
    """

    kind: str
    inside: tuple = ()
    separator: Halfspace | None = None

    @property
    def is_inside(self) -> bool:
        return self.kind == "Inside"


INSIDE, OUTSIDE = "Inside", "Outside"


@dataclass
class LPResult:
    feasible: bool
    x: list | None = None
    farkas: list | None = None
    pivots: int = 0


def lp_feasible(A: Sequence[Sequence], b: Sequence) -> LPResult:
    """Decide ``exists x >= 0 with A x = b`` exactly.

    Phase-one simplex with Bland's rule. On infeasibility returns a Farkas
    vector ``y`` with ``y^T A <= 0`` and ``y^T b > 0``.
    """
    rows = len(A)
    cols = len(A[0]) if rows else 0
    sign = [1] * rows
    T = []
    for r in range(rows):
        row = [Fraction(v) for v in A[r]]
        rhs = Fraction(b[r])
        if rhs < 0:
            sign[r] = -1
            row = [-v for v in row]
            rhs = -rhs
        art = [Fraction(0)] * rows
        art[r] = Fraction(1)
        T.append(row + art + [rhs])
    width = cols + rows
    basis = [cols + r for r in range(rows)]
    # reduced costs of phase one (minimise sum of artificials)
    cost = [Fraction(0)] * (width + 1)
    for r in range(rows):
        for j in range(cols):
            if T[r][j]:
                cost[j] -= T[r][j]
        cost[width] -= T[r][width]
    pivots = 0
    while True:
        enter = next((j for j in range(width) if cost[j] < 0), None)
        if enter is None:
            break
        leave = None
        best = None
        for r in range(rows):
            a = T[r][enter]
            if a > 0:
                ratio = T[r][width] / a
                if best is None or ratio < best or (ratio == best and basis[r] < basis[leave]):
                    best, leave = ratio, r
        if leave is None:  # cannot happen in phase one (objective bounded below)
            raise RuntimeError("unbounded phase-one LP")
        _pivot(T, cost, leave, enter)
        basis[leave] = enter
        pivots += 1
    if cost[width] == 0:
        x = [Fraction(0)] * cols
        for r, var in enumerate(basis):
            if var < cols:
                x[var] = T[r][width]
        return LPResult(True, x=x, pivots=pivots)
    y = [Fraction(0)] * rows
    for r, var in enumerate(basis):
        if var >= cols:
            for c in range(rows):
                y[c] += T[r][cols + c]
    y = [sign[c] * y[c] for c in range(rows)]
    return LPResult(False, farkas=y, pivots=pivots)


def _pivot(T, cost, leave, enter):
    prow = T[leave]
    piv = prow[enter]
    if piv != 1:
        prow[:] = [v / piv for v in prow]
    nz = [j for j, v in enumerate(prow) if v]
    for r, row in enumerate(T):
        if r != leave:
            f = row[enter]
            if f:
                for j in nz:
                    row[j] -= f * prow[j]
    f = cost[enter]
    if f:
        for j in nz:
            cost[j] -= f * prow[j]


def in_hull(query: Sequence, generators: Sequence[Sequence]) -> Certificate:
    """Exact decision of ``query in conv(generators)`` with a certificate."""
    if not generators:
        raise GeometryInputError("in_hull needs at least one generator")
    q = tuple(query)
    dim = len(q)
    _check_dims(generators, dim)
    for i, g in enumerate(generators):
        if tuple(g) == q:
            return Certificate(INSIDE, inside=((i, Fraction(1)),))
    k = len(generators)
    # rows where the query and every generator vanish read 0 = 0 and are dropped
    live = sorted({r for r, v in _nonzeros(q)} | {r for g in generators for r, v in _nonzeros(g)})
    A = [[generators[i][r] for i in range(k)] for r in live]
    A.append([Fraction(1)] * k)
    b = [q[r] for r in live] + [Fraction(1)]
    res = lp_feasible(A, b)
    if res.feasible:
        coeffs = tuple((i, c) for i, c in enumerate(res.x) if c)
        cert = Certificate(INSIDE, inside=coeffs)
    else:
        a = [ZERO] * dim
        for t, r in enumerate(live):
            a[r] = res.farkas[t]
        a = tuple(a)
        beta = res.farkas[len(live)]
        # generators satisfy <a,g> <= -beta, query has <a,q> > -beta
        offset = (dot(a, q) - beta) / 2
        cert = Certificate(OUTSIDE, separator=Halfspace(a, offset, LE))
    if not verify_certificate(q, generators, cert):  # pragma: no cover - defensive
        raise RuntimeError("internal error: hull certificate failed verification")
    return cert


def verify_certificate(query: Sequence, generators: Sequence[Sequence], cert: Certificate) -> bool:
    """Recheck a certificate by direct exact arithmetic."""
    dim = len(query)
    if cert.kind == INSIDE:
        if not cert.inside:
            return False
        total = Fraction(0)
        acc = {}
        for idx, c in cert.inside:
            if c < 0 or not 0 <= idx < len(generators) or len(generators[idx]) != dim:
                return False
            total += c
            for r, v in _nonzeros(generators[idx]):
                acc[r] = acc.get(r, 0) + c * v
        acc = {r: v for r, v in acc.items() if v}
        return total == 1 and acc == dict(_nonzeros(query))
    if cert.kind == OUTSIDE:
        h = cert.separator
        if h is None or h.relation != LE:
            return False
        if not all(h.value(g) < h.offset for g in generators):
            return False
        return h.value(query) > h.offset
    return False


def satisfies(x: Sequence, constraints: Sequence[Halfspace]):
    """Return ``(True, None)`` or ``(False, index of first violated constraint)``."""
    for idx, h in enumerate(constraints):
        if len(h.normal) != len(x):
            raise GeometryInputError(
                f"dimension mismatch: constraint {idx} has {len(h.normal)}, point has {len(x)}"
            )
        if not h.holds(x):
            return False, idx
    return True, None


def matrix_rank(rows: Iterable[Sequence]) -> int:
    """Exact rank by sparse incremental elimination."""
    return _sparse_rank({j: Fraction(v) for j, v in _nonzeros(row)} for row in rows)


def _sparse_rank(rows: Iterable[dict]) -> int:
    # Fully reduced basis: no basis row contains another row's pivot column,
    # so reducing a vector takes one step per pivot column it touches.
    basis: dict[int, dict[int, Fraction]] = {}
    holders: dict[int, set] = {}  # non-pivot column -> pivots whose row uses it
    for vec in rows:
        vec = dict(vec)
        for col in [c for c in vec if c in basis]:
            f = vec.get(col)
            if not f:
                continue
            for j, v in basis[col].items():
                nv = vec.get(j, 0) - f * v
                if nv:
                    vec[j] = nv
                else:
                    vec.pop(j, None)
        if not vec:
            continue
        # pivot on the column shared with the fewest basis rows to limit fill
        lead = min(vec, key=lambda c: (len(holders.get(c, ())), c))
        inv = 1 / vec[lead]
        row = {j: v * inv for j, v in vec.items()}
        for p in list(holders.pop(lead, ())):
            other = basis[p]
            f = other[lead]
            for j, v in row.items():
                nv = other.get(j, 0) - f * v
                if nv:
                    other[j] = nv
                    if j != p:
                        holders.setdefault(j, set()).add(p)
                else:
                    other.pop(j, None)
                    if j in holders:
                        holders[j].discard(p)
        basis[lead] = row
        for j in row:
            if j != lead:
                holders.setdefault(j, set()).add(lead)
    return len(basis)


def affine_rank(points: Sequence[Sequence]) -> int:
    """Dimension of the affine hull; 0 for a single point."""
    if not points:
        raise GeometryInputError("affine_rank of an empty set")
    base = points[0]
    _check_dims(points, len(base))
    b = dict(_nonzeros(base))
    rows = []
    for p in points[1:]:
        d = {i: -v for i, v in b.items()}
        for i, v in _nonzeros(p):
            nv = d.get(i, 0) + v
            if nv:
                d[i] = nv
            else:
                del d[i]
        rows.append(d)
    return _sparse_rank(rows)


def _bbox_corner(p: Sequence, points: Sequence[Sequence]) -> bool:
    dim = len(p)
    lo = list(p)
    hi = list(p)
    for q in points:
        for i in range(dim):
            v = q[i]
            if v < lo[i]:
                lo[i] = v
            elif v > hi[i]:
                hi[i] = v
    return all(p[i] == lo[i] or p[i] == hi[i] for i in range(dim))


def is_vertex(index: int, points: Sequence[Sequence], use_lp: bool = False) -> bool:
    """True iff ``points[index]`` is not in the hull of the other points.

    A corner of the bounding box is extreme in any subset containing it, so
    that case is answered without an LP unless ``use_lp`` is set.
    """
    if not 0 <= index < len(points):
        raise IndexError(f"candidate index {index} out of range")
    p = tuple(points[index])
    others = [tuple(q) for j, q in enumerate(points) if j != index]
    if not others:
        return True
    if any(q == p for q in others):
        return False
    if not use_lp and _bbox_corner(p, others):
        return True
    return in_hull(p, others).kind == OUTSIDE


def _nonzeros(x) -> list:
    return [(i, v) for i, v in enumerate(x) if v is not ZERO and v]


class _SparseFacets:
    """Evaluate many halfspaces on sparse points by touching only nonzeros."""

    def __init__(self, facets: Sequence[Halfspace]):
        self.facets = list(facets)
        self.by_coord: dict = {}
        for fi, h in enumerate(self.facets):
            for i, _ in h.support:
                self.by_coord.setdefault(i, []).append(fi)
        zero = [Fraction(0)] * (len(self.facets[0].normal) if self.facets else 0)
        self.fail_at_zero = [fi for fi, h in enumerate(self.facets) if not h.holds(zero)]
        self.tight_at_zero = [fi for fi, h in enumerate(self.facets) if h.offset == 0]

    def values(self, x) -> dict:
        """Values of the facets touched by nonzeros of ``x``; others are 0."""
        vals: dict = {}
        for i, v in _nonzeros(x):
            for fi in self.by_coord.get(i, ()):
                vals[fi] = vals.get(fi, 0) + self.facets[fi].normal[i] * v
        return vals

    def violated(self, x) -> list:
        vals = self.values(x)
        bad = []
        for fi in sorted(set(vals) | set(self.fail_at_zero)):
            h = self.facets[fi]
            v = vals.get(fi, Fraction(0))
            ok = v >= h.offset if h.relation == GE else v <= h.offset if h.relation == LE else v == h.offset
            if not ok:
                bad.append(fi)
        return bad


def violations(points: Sequence[Sequence], facets: Sequence[Halfspace], first_only: bool = False) -> list:
    """All ``(point index, facet index)`` pairs where a point violates a facet."""
    if not facets:
        return []
    sf = _SparseFacets(facets)
    out = []
    for pi, x in enumerate(points):
        if len(x) != len(facets[0].normal):
            raise GeometryInputError("dimension mismatch between point and facets")
        for fi in sf.violated(x):
            out.append((pi, fi))
            if first_only:
                return out
    return out


def bbox_extremal(points: Sequence[Sequence]) -> list:
    """Flags for points at a corner of the common bounding box (hence extreme).

    Duplicated points are never flagged.
    """
    if not points:
        return []
    dim = len(points[0])
    sparse = [_nonzeros(q) for q in points]
    lo: dict = {}
    hi: dict = {}
    count = [0] * dim
    for nz in sparse:
        for i, v in nz:
            count[i] += 1
            if i not in lo or v < lo[i]:
                lo[i] = v
            if i not in hi or v > hi[i]:
                hi[i] = v
    for i in range(dim):
        if count[i] < len(points):  # some point is zero here
            lo[i] = min(lo.get(i, ZERO), ZERO)
            hi[i] = max(hi.get(i, ZERO), ZERO)
    # coordinates where a zero entry is not extreme
    zero_inner = {i for i in range(dim) if lo[i] < 0 < hi[i]}
    seen: dict = {}
    keys = [tuple(nz) for nz in sparse]
    for key in keys:
        seen[key] = seen.get(key, 0) + 1
    flags = []
    for nz, key in zip(sparse, keys):
        ok = seen[key] == 1 and all(v == lo[i] or v == hi[i] for i, v in nz)
        if ok and zero_inner:
            ok = zero_inner <= {i for i, _ in nz}
        flags.append(ok)
    return flags


class FacetIndex:
    """Tight-facet bitmasks for generators lying in an H-polytope.

    If every generator lies in the polytope, any convex combination equal to
    ``q`` only uses generators tight on every inequality that is tight at
    ``q``. Filtering by that rule keeps membership LPs small.
    """

    def __init__(self, facets: Sequence[Halfspace], generators: Sequence[Sequence]):
        self.facets = [h for h in facets if h.relation != EQ]
        self._sparse = _SparseFacets(self.facets) if self.facets else None
        self._zero_mask = 0
        if self._sparse:
            for fi in self._sparse.tight_at_zero:
                self._zero_mask |= 1 << fi
        self.generators = generators
        self.masks = [self.mask(g) for g in generators]

    def mask(self, x) -> int:
        if not self._sparse:
            return 0
        m = self._zero_mask
        for fi, v in self._sparse.values(x).items():
            bit = 1 << fi
            if v == self.facets[fi].offset:
                m |= bit
            else:
                m &= ~bit
        return m

    def candidates(self, q) -> list:
        tq = self.mask(q)
        return [j for j, mg in enumerate(self.masks) if tq & ~mg == 0]


def in_hull_within(query, generators, index: FacetIndex) -> Certificate | None:
    """Membership using face filtering; indices in the result refer to ``generators``.

    Returns ``None`` when no generator shares the minimal face of ``query``,
    which (given all generators lie in the polytope) means ``query`` is outside.
    """
    cand = index.candidates(query)
    if not cand:
        return None
    cert = in_hull(query, [generators[j] for j in cand])
    if cert.kind == INSIDE:
        return Certificate(INSIDE, inside=tuple((cand[i], c) for i, c in cert.inside))
    return cert
