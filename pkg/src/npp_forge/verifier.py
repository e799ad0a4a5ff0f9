"""Lift, extract and verify intermediate polytopes for nested instances."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .construction import NestedInstance, segment_point
from .exact_geometry import (
    EQ, INSIDE, FacetIndex, GeometryInputError, format_rational, in_hull, in_hull_within,
    parse_rational, violations,
)

LOW, HIGH = Fraction(1, 2), Fraction(2)


class ExtractionError(ValueError):
    def __init__(self, message, label):
        super().__init__(f"{label}: {message}")
        self.label = label


@dataclass
class CandidateX:
    vertices: list  # [(label, point)]

    @property
    def points(self):
        return [p for _, p in self.vertices]


@dataclass
class Verdict:
    ok: bool
    failures: list = field(default_factory=list)

    def to_json(self):
        return {"ok": self.ok, "failures": self.failures}


def _frame_vertices(instance):
    return [(v.label, v.coords) for v in instance.outer_vertices if v.label.startswith("u_")]


def lift_assignment(instance: NestedInstance, alpha) -> CandidateX:
    """Frame points of ``U1, U2`` followed by ``x_{i,j}`` in row-major order."""
    m, n = instance.m, instance.n
    if len(alpha) != m or any(len(r) != n for r in alpha):
        raise GeometryInputError(f"alpha must be {m}x{n}")
    verts = list(_frame_vertices(instance))
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            a = alpha[i - 1][j - 1]
            if not LOW <= a <= HIGH:
                raise GeometryInputError(f"alpha[{i}][{j}] = {a} outside [1/2, 2]")
            verts.append((f"x_{i}_{j}", segment_point(instance, i, j, a)))
    return CandidateX(verts)


def extract_assignment(instance: NestedInstance, X: CandidateX) -> list:
    m, n = instance.m, instance.n
    present = {tuple(p) for p in X.points}
    for label, p in _frame_vertices(instance):
        if p not in present:
            raise ExtractionError("frame endpoint missing from X", label)
    hits = _segment_hits(instance, X)
    alpha = [[None] * n for _ in range(m)]
    for seg in instance.segments:
        i, j = seg.row, seg.col
        found = hits.get((i, j), [])
        if not found:
            raise ExtractionError("no vertex on segment", seg.label)
        if len(found) > 1:
            raise ExtractionError(f"{len(found)} vertices on segment", seg.label)
        label, g = found[0]
        if g < LOW:
            raise ExtractionError(f"vertex {label} lies on the first half (coordinate {g})", seg.label)
        alpha[i - 1][j - 1] = g
    return alpha


def _segment_hits(instance, X):
    """Map ``(i, j)`` to the vertices of X on segment ``sigma_{i,j}``.

    Points of that segment are ``f_j - J + s g_i`` with ``0 <= s <= 3``; the
    start point ``f_j - J`` lies on the segments of every row.
    """
    m, n = instance.m, instance.n
    hits: dict = {}
    for label, p in X.vertices:
        if p[0] or p[1]:
            continue
        fs = [j for j in range(1, n + 1) if p[1 + j]]
        if len(fs) != 1 or p[1 + fs[0]] != 1:
            continue
        j = fs[0]
        lifted = [i for i in range(1, m + 1) if p[1 + n + i] != -1]
        if not lifted:
            for i in range(1, m + 1):
                hits.setdefault((i, j), []).append((label, p[1 + n + i]))
        elif len(lifted) == 1:
            i = lifted[0]
            if 0 <= p[1 + n + i] + 1 <= 3:
                hits.setdefault((i, j), []).append((label, p[1 + n + i]))
    return hits


def _is_float(x):
    return isinstance(x, float)


def check_nested(instance: NestedInstance, X: CandidateX, tol=None, first_only=False) -> Verdict:
    """Decide ``A ⊆ conv(X) ⊆ B``.

    Exact unless ``tol`` is given, in which case facet tests allow ``tol``
    slack and hull membership is tested by least squares on the face-filtered
    generators.
    """
    pts = [tuple(p) for p in X.points]
    if not pts:
        return Verdict(False, [{"kind": "empty", "label": ""}])
    dim = instance.dim
    if any(len(p) != dim for p in pts):
        raise GeometryInputError("candidate dimension does not match the instance")
    failures = []
    if tol is None:
        hits = violations(pts, instance.outer_facets, first_only=first_only)
    else:
        hits = [(pi, fi) for pi, p in enumerate(pts) for fi, h in enumerate(instance.outer_facets)
                if not _holds_tol(h, p, tol)]
        hits = hits[:1] if first_only else hits
    for pi, fi in hits:
        failures.append({"kind": "outer_facet", "label": X.vertices[pi][0], "facet": fi})
    if failures:
        return Verdict(False, failures)
    facets = instance.outer_facets
    if tol is None:
        index = FacetIndex(facets, pts)
    else:
        index = _TolIndex(facets, pts, tol)
    for v in instance.inner_vertices:
        inside = _member(v.coords, pts, index, tol)
        if not inside:
            fail = {"kind": "inner_vertex", "label": v.label}
            if v.constraint_ref is not None:
                fail["constraint_ref"] = v.constraint_ref
                c = instance.constraints[v.constraint_ref] if instance.constraints else None
                if c is not None:
                    fail["constraint"] = repr(c)
            failures.append(fail)
            if first_only:
                break
    return Verdict(not failures, failures)


def _holds_tol(h, p, tol):
    v = sum(float(c) * float(p[i]) for i, c in h.support)
    off = float(h.offset)
    if h.relation == EQ:
        return abs(v - off) <= tol
    if h.relation == ">=":
        return v >= off - tol
    return v <= off + tol


class _TolIndex:
    def __init__(self, facets, gens, tol):
        self.facets = [h for h in facets if h.relation != EQ]
        self.tol = tol
        self.masks = [self.mask(g) for g in gens]

    def mask(self, x):
        m = 0
        for bit, h in enumerate(self.facets):
            v = sum(float(c) * float(x[i]) for i, c in h.support)
            if abs(v - float(h.offset)) <= self.tol:
                m |= 1 << bit
        return m

    def candidates(self, q):
        tq = self.mask(q)
        return [j for j, mg in enumerate(self.masks) if tq & ~mg == 0]


def _member(q, pts, index, tol):
    if tol is None:
        cert = in_hull_within(q, pts, index)
        return cert is not None and cert.kind == INSIDE
    cand = index.candidates(q)
    if not cand:
        return False
    import numpy as np
    from scipy.optimize import nnls

    G = np.array([[float(x) for x in pts[j]] for j in cand]).T
    weight = 1.0 + float(np.abs(G).max())
    A = np.vstack([G, weight * np.ones((1, len(cand)))])
    b = np.concatenate([np.array([float(x) for x in q]), [weight]])
    _, res = nnls(A, b)
    return res <= tol * weight


def candidate_to_json(X: CandidateX) -> dict:
    return {"vertices": [{"label": l, "coords": [_fmt(x) for x in p]} for l, p in X.vertices]}


def _fmt(x):
    return x if isinstance(x, float) else format_rational(x)


def candidate_from_json(data) -> CandidateX:
    verts = []
    for k, v in enumerate(data["vertices"]):
        coords = tuple(x if isinstance(x, float) else parse_rational(x) for x in v["coords"])
        verts.append((v.get("label", f"x{k}"), coords))
    return CandidateX(verts)


# --- the two gadget predicates ----------------------------------------------

def gadget_linear_predicate(lams, t) -> bool:
    """Membership of ``q_t`` in ``conv(p_1..p_k)`` for the prism over a simplex.

    ``v_0..v_k`` are the unit vectors of R^(k+1), ``p_i = v_i + lam_i v_0`` and
    ``q_t = (v_1 + ... + v_k)/k + t v_0``.
    """
    lams = [Fraction(x) for x in lams]
    t = Fraction(t)
    if any(not 0 <= x <= 1 for x in lams):
        raise ValueError("lambda values must lie in [0, 1]")
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    k = len(lams)
    if k < 1:
        raise ValueError("need at least one lambda")
    gens = []
    for i, lam in enumerate(lams, start=1):
        p = [Fraction(0)] * (k + 1)
        p[0] = lam
        p[i] = Fraction(1)
        gens.append(tuple(p))
    q = tuple([t] + [Fraction(1, k)] * k)
    return in_hull(q, gens).kind == INSIDE


def gadget_quadratic_predicate(a1, a2) -> bool:
    """Is the origin on the segment from ``(a1, -1)`` to ``(-1, a2)``?"""
    a1, a2 = Fraction(a1), Fraction(a2)
    if not (LOW <= a1 <= HIGH and LOW <= a2 <= HIGH):
        raise ValueError("arguments must lie in [1/2, 2]")
    return in_hull((Fraction(0), Fraction(0)), [(a1, Fraction(-1)), (Fraction(-1), a2)]).kind == INSIDE


def linear_gadget_plot(lams, t) -> dict:
    k = len(lams)
    pts = []
    for i, lam in enumerate(lams, start=1):
        p = [Fraction(0)] * (k + 1)
        p[0] = Fraction(lam)
        p[i] = Fraction(1)
        pts.append([format_rational(x) for x in p])
    q = [format_rational(Fraction(t))] + [format_rational(Fraction(1, k))] * k
    return {"points": pts, "query": q, "inside": gadget_linear_predicate(lams, t)}


def quadratic_gadget_plot(a1, a2) -> dict:
    a1, a2 = Fraction(a1), Fraction(a2)
    seg = [[format_rational(a1), "-1"], ["-1", format_rational(a2)]]
    return {
        "points": [["0", "0"]],
        "segments": [seg],
        "frame": [[["-1", "-1"], ["2", "-1"]], [["-1", "-1"], ["-1", "2"]]],
        "inside": gadget_quadratic_predicate(a1, a2),
    }
