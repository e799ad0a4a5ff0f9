"""Nested-polytope instances built from ETR-INV arrays.

Coordinates are ordered ``(e1, e2, f1..fn, g1..gm)``. ``J`` is the sum of the
``g`` directions. The outer polytope is the hull of ``n + 2`` orthogonal frames
of ``m`` segments each; the inner polytope holds the frames ``U1, U2``, two
segment-restriction points per cell and one gadget point per array constraint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .exact_geometry import (
    EQ, GE, LE, ZERO, Halfspace, affine_rank, bbox_extremal, format_rational, is_vertex, parse_rational,
    violations,
)
from .inv_array import ColInv, EtrInvArray, RowPair, RowTriple

F = Fraction


@dataclass
class Vertex:
    label: str
    coords: tuple
    role: str = ""
    constraint_ref: int | None = None


@dataclass
class Segment:
    label: str
    endpoints: tuple  # (start, end) points
    second_half: tuple  # (point at parameter 1/2, point at parameter 2)
    row: int = 0
    col: int = 0


@dataclass
class NestedInstance:
    m: int
    n: int
    outer_vertices: list
    outer_facets: list  # carrier hyperplane first, then the n+m+3 inequalities
    inner_vertices: list
    segments: list
    k: int
    constraints: list = field(default_factory=list)

    @property
    def dim(self):
        return 2 + self.n + self.m

    @property
    def inequality_facets(self):
        return [h for h in self.outer_facets if h.relation != EQ]

    def segment(self, i, j) -> Segment:
        return self.segments[(i - 1) * self.n + (j - 1)]


class _Coords:
    def __init__(self, m, n):
        self.m, self.n = m, n
        self.dim = 2 + n + m

    def e(self, a):
        return a - 1

    def f(self, j):
        return 1 + j

    def g(self, i):
        return 1 + self.n + i

    def point(self, parts):
        """``parts`` maps coordinate index -> value; ``-J`` is always added."""
        x = [ZERO] * self.dim
        for i in range(1, self.m + 1):
            x[self.g(i)] = F(-1)
        for idx, val in parts:
            x[idx] += F(val)
        return tuple(x)


def segment_point(instance_or_coords, i, j, alpha):
    """Point of segment ``sigma_{i,j}`` whose ``g_i`` coordinate is ``alpha``."""
    c = instance_or_coords if isinstance(instance_or_coords, _Coords) else _Coords(
        instance_or_coords.m, instance_or_coords.n)
    return c.point([(c.f(j), 1), (c.g(i), 1 + alpha)])


def build_instance(array: EtrInvArray) -> NestedInstance:
    m, n = array.m, array.n
    c = _Coords(m, n)
    outer = []
    for i in range(m + 1):
        for a in (1, 2):
            parts = [(c.e(a), 1)] + ([(c.g(i), 3)] if i else [])
            outer.append(Vertex(f"u_{i}_{a}", c.point(parts), "frame"))
    for i in range(m + 1):
        for j in range(1, n + 1):
            parts = [(c.f(j), 1)] + ([(c.g(i), 3)] if i else [])
            outer.append(Vertex(f"v_{i}_{j}", c.point(parts), "frame"))

    def unit(idx, val=1):
        x = [ZERO] * c.dim
        x[idx] = F(val)
        return tuple(x)

    carrier = tuple(F(1) if idx < 2 + n else ZERO for idx in range(c.dim))
    facets = [Halfspace(carrier, F(1), EQ)]
    facets += [Halfspace(unit(c.e(a)), F(0), GE) for a in (1, 2)]
    facets += [Halfspace(unit(c.f(j)), F(0), GE) for j in range(1, n + 1)]
    facets += [Halfspace(unit(c.g(i)), F(-1), GE) for i in range(1, m + 1)]
    if m:
        J = tuple(F(1) if idx >= 2 + n else ZERO for idx in range(c.dim))
        facets.append(Halfspace(J, F(3 - m), LE))

    inner = [Vertex(v.label, v.coords, "frame") for v in outer if v.label.startswith("u_")]
    third, two_thirds = F(1, 3), F(2, 3)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            inner.append(Vertex(f"y_{i}_{j}", c.point([(c.e(1), third), (c.f(j), two_thirds), (c.g(i), 2)]), "restrict"))
            inner.append(Vertex(f"z_{i}_{j}", c.point([(c.e(2), third), (c.f(j), two_thirds), (c.g(i), 2)]), "restrict"))
    for idx, con in enumerate(array.constraints):
        if isinstance(con, RowPair):
            pt = c.point([(c.f(con.j), F(1, 2)), (c.f(con.k), F(1, 2)), (c.g(con.row), F(9, 4))])
            inner.append(Vertex(f"p_{con.row}_{con.j}_{con.k}", pt, "pair", idx))
        elif isinstance(con, RowTriple):
            pt = c.point([(c.f(con.j), third), (c.f(con.k), third), (c.f(con.l), third), (c.g(con.row), F(11, 6))])
            inner.append(Vertex(f"q_{con.row}_{con.j}_{con.k}_{con.l}", pt, "triple", idx))
        elif isinstance(con, ColInv):
            pt = c.point([(c.f(con.col), 1), (c.g(con.i), 1), (c.g(con.j), 1)])
            inner.append(Vertex(f"r_{con.col}_{con.i}_{con.j}", pt, "inverse", idx))
    segments = []
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            start = c.point([(c.f(j), 1)])
            end = c.point([(c.f(j), 1), (c.g(i), 3)])
            half = c.point([(c.f(j), 1), (c.g(i), F(3, 2))])
            segments.append(Segment(f"sigma_{i}_{j}", (start, end), (half, end), i, j))
    return NestedInstance(m, n, outer, facets, inner, segments, m * n + 2 * m + 2, list(array.constraints))


def validate_outer(instance: NestedInstance, use_lp: bool = False) -> dict:
    """Structural checks; returns ``{check: {"ok": bool, "detail": str}}``."""
    m, n = instance.m, instance.n
    pts = [v.coords for v in instance.outer_vertices]
    report = {}

    def put(name, ok, detail=""):
        report[name] = {"ok": bool(ok), "detail": detail}

    expected = (n + 2) * (m + 1)
    put("vertex_count", len(pts) == expected, f"{len(pts)} vertices, expected {expected}")
    nf = len(instance.inequality_facets)
    put("facet_count", nf == n + m + 3, f"{nf} facets, expected {n + m + 3}")

    def first_violation(vertices):
        hit = violations([v.coords for v in vertices], instance.outer_facets, first_only=True)
        if hit:
            pi, fi = hit[0]
            return f"{vertices[pi].label} violates facet {fi}"
        return ""

    bad = first_violation(instance.outer_vertices)
    put("outer_in_facets", not bad, bad)
    bad = first_violation(instance.inner_vertices)
    put("inner_in_facets", not bad, bad)
    r = affine_rank(pts) if pts else -1
    put("affine_rank", r == n + m + 1, f"rank {r}, expected {n + m + 1}")
    corner = bbox_extremal(pts) if not use_lp else [False] * len(pts)
    bad = [instance.outer_vertices[i].label for i in range(len(pts))
           if not corner[i] and not is_vertex(i, pts, use_lp=True)]
    put("extremal", not bad, ", ".join(bad[:5]))
    report["ok"] = all(v["ok"] for v in report.values())
    return report


# --- JSON ----------------------------------------------------------------------

SPARSE_ABOVE = 256  # instances of larger dimension store coordinates sparsely


def _dense_or_sparse(p, sparse=False):
    """Dense ``["p/q", ...]`` or sparse ``[[index, "p/q"], ...]`` (nonzeros only)."""
    if sparse:
        return [[i, format_rational(x)] for i, x in enumerate(p) if x is not ZERO and x]
    return [format_rational(x) for x in p]


def _unpt(p, dim, sparse=False):
    if sparse:
        x = [ZERO] * dim
        for i, v in p:
            if not 0 <= int(i) < dim:
                raise ValueError(f"coordinate index {i} out of range for dimension {dim}")
            x[int(i)] = parse_rational(v)
        return tuple(x)
    if len(p) != dim:
        raise ValueError(f"point has {len(p)} coordinates, expected {dim}")
    return tuple(parse_rational(v) for v in p)


def _con_json(c):
    if isinstance(c, RowPair):
        return {"type": "rowpair", "row": c.row, "indices": [c.j, c.k]}
    if isinstance(c, RowTriple):
        return {"type": "rowtriple", "row": c.row, "indices": [c.j, c.k, c.l]}
    return {"type": "colinv", "col": c.col, "indices": [c.i, c.j]}


def instance_to_json(instance: NestedInstance, sparse: bool | None = None) -> dict:
    """``sparse=None`` picks the sparse point format above ``SPARSE_ABOVE`` dimensions."""
    if sparse is None:
        sparse = instance.dim > SPARSE_ABOVE

    def _pt(p):
        return _dense_or_sparse(p, sparse)

    out = {
        "dim": instance.dim,
        "m": instance.m,
        "n": instance.n,
        "k": instance.k,
        "outer": {
            "vertices": [{"label": v.label, "coords": _pt(v.coords)} for v in instance.outer_vertices],
            "facets": [
                {"normal": _pt(h.normal), "offset": format_rational(h.offset), "relation": h.relation}
                for h in instance.outer_facets
            ],
        },
        "inner": {
            "vertices": [
                {"label": v.label, "role": v.role, "coords": _pt(v.coords), "constraint_ref": v.constraint_ref}
                for v in instance.inner_vertices
            ]
        },
        "segments": [
            {"label": s.label, "endpoints": [_pt(p) for p in s.endpoints], "second_half": [_pt(p) for p in s.second_half]}
            for s in instance.segments
        ],
        "constraints": [_con_json(c) for c in instance.constraints],
    }
    if sparse:
        out["sparse"] = True
    return out


def instance_from_json(data) -> NestedInstance:
    if isinstance(data, str):
        data = json.loads(data)
    from .inv_array import array_from_json

    m, n = int(data["m"]), int(data["n"])
    dim = int(data.get("dim", 2 + n + m))
    if dim != 2 + n + m:
        raise ValueError(f"dimension {dim} does not match m={m}, n={n}")
    sp = bool(data.get("sparse", False))
    cons = array_from_json({"m": m, "n": n, "constraints": data.get("constraints", [])})[0].constraints
    outer = [Vertex(v["label"], _unpt(v["coords"], dim, sp), "frame") for v in data["outer"]["vertices"]]
    facets = [
        Halfspace(_unpt(h["normal"], dim, sp), parse_rational(h["offset"]), h["relation"])
        for h in data["outer"]["facets"]
    ]
    inner = [
        Vertex(v["label"], _unpt(v["coords"], dim, sp), v.get("role", ""), v.get("constraint_ref"))
        for v in data["inner"]["vertices"]
    ]
    segments = []
    for s in data["segments"]:
        _, i, j = s["label"].split("_")
        segments.append(Segment(s["label"], tuple(_unpt(p, dim, sp) for p in s["endpoints"]),
                                tuple(_unpt(p, dim, sp) for p in s["second_half"]), int(i), int(j)))
    return NestedInstance(m, n, outer, facets, inner, segments, int(data["k"]), cons)
