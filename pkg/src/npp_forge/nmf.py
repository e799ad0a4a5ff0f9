"""Nonnegative matrix factorization as a nested-polytope problem over a simplex.

Columns of ``M`` are scaled to unit 1-norm; the scaled columns span the inner
polytope and the outer polytope is the standard simplex. A nested polytope with
``k`` vertices gives a factorization with inner dimension ``k`` and back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .exact_geometry import EQ, GE, INSIDE, Halfspace, format_rational, in_hull, parse_rational


class NestedRejection(ValueError):
    """The proposed point set is not nested between A and B."""


@dataclass
class NmfInstance:
    M: list
    k: int

    def __post_init__(self):
        self.M = [[Fraction(x) for x in row] for row in self.M]
        if not self.M or not self.M[0]:
            raise ValueError("matrix must be nonempty")
        width = len(self.M[0])
        if any(len(r) != width for r in self.M):
            raise ValueError("ragged matrix")
        if any(x < 0 for row in self.M for x in row):
            raise ValueError("matrix has a negative entry")
        if self.k < 1:
            raise ValueError("k must be positive")

    @property
    def shape(self):
        return len(self.M), len(self.M[0])


@dataclass
class SimplexNested:
    inner: list  # normalized nonzero columns
    outer: list  # Halfspaces: coordinates >= 0, then the sum = 1 hyperplane
    k: int
    zero_columns: list = field(default_factory=list)
    column_index: list = field(default_factory=list)  # original column of each inner point
    scales: list = field(default_factory=list)  # 1-norm of each kept column
    M: list = field(default_factory=list)

    @property
    def m(self):
        return len(self.M)


def _simplex_facets(m):
    facets = []
    for i in range(m):
        e = tuple(Fraction(int(j == i)) for j in range(m))
        facets.append(Halfspace(e, Fraction(0), GE))
    facets.append(Halfspace(tuple(Fraction(1) for _ in range(m)), Fraction(1), EQ))
    return facets


def _facet_name(idx, m):
    return f"x{idx + 1} >= 0" if idx < m else "coordinate sum = 1"


def nmf_to_npp(instance: NmfInstance) -> SimplexNested:
    m, n = instance.shape
    inner, zeros, cols, scales = [], [], [], []
    for j in range(n):
        col = [instance.M[i][j] for i in range(m)]
        s = sum(col)
        if s == 0:
            zeros.append(j)
            continue
        inner.append(tuple(x / s for x in col))
        cols.append(j)
        scales.append(s)
    return SimplexNested(inner, _simplex_facets(m), instance.k, zeros, cols, scales,
                         [list(r) for r in instance.M])


def check_simplex_nested(bridge: SimplexNested, X) -> tuple:
    """Return ``(certificates, None)`` or ``(None, diagnosis)``."""
    X = [tuple(Fraction(x) for x in p) for p in X]
    m = bridge.m
    if len(X) > bridge.k:
        return None, f"{len(X)} points exceed k = {bridge.k}"
    for t, p in enumerate(X):
        if len(p) != m:
            return None, f"point {t} has dimension {len(p)}, expected {m}"
        for fi, h in enumerate(bridge.outer):
            if not h.holds(p):
                return None, f"point {t} violates {_facet_name(fi, m)}"
    certs = []
    for a, q in enumerate(bridge.inner):
        if not X:
            return None, f"column {bridge.column_index[a]} is not covered"
        cert = in_hull(q, X)
        if cert.kind != INSIDE:
            return None, f"column {bridge.column_index[a]} lies outside conv(X)"
        certs.append(cert)
    return certs, None


def npp_solution_to_factorization(bridge: SimplexNested, X) -> tuple:
    """Build ``(V, W)`` with ``V W = M`` from a nested point set ``X``."""
    certs, why = check_simplex_nested(bridge, X)
    if certs is None:
        raise NestedRejection(why)
    X = [tuple(Fraction(x) for x in p) for p in X]
    m, k = bridge.m, bridge.k
    n = len(bridge.M[0]) if bridge.M else 0
    V = [[X[t][i] if t < len(X) else Fraction(0) for t in range(k)] for i in range(m)]
    W = [[Fraction(0)] * n for _ in range(k)]
    for cert, j, s in zip(certs, bridge.column_index, bridge.scales):
        for t, lam in cert.inside:
            W[t][j] += s * lam
    if not verify_factorization(bridge.M, V, W):  # pragma: no cover - defensive
        raise RuntimeError("internal error: factorization does not reproduce M")
    return V, W


def factorization_to_npp_solution(bridge: SimplexNested, V, W) -> list:
    """Normalized columns of ``V``; zero columns are replaced by the first simplex vertex."""
    V = [[Fraction(x) for x in row] for row in V]
    W = [[Fraction(x) for x in row] for row in W]
    if not verify_factorization(bridge.M, V, W):
        raise ValueError("V W does not equal M")
    m = bridge.m
    k = len(V[0]) if V else 0
    X = []
    for t in range(k):
        col = [V[i][t] for i in range(m)]
        s = sum(col)
        if s == 0:
            X.append(tuple(Fraction(int(i == 0)) for i in range(m)))
        else:
            X.append(tuple(x / s for x in col))
    certs, why = check_simplex_nested(bridge, X)
    if certs is None:  # pragma: no cover - guaranteed by the factorization
        raise RuntimeError(f"internal error: converted point set rejected ({why})")
    return X


def verify_factorization(M, V, W) -> bool:
    M = [[Fraction(x) for x in row] for row in M]
    V = [[Fraction(x) for x in row] for row in V]
    W = [[Fraction(x) for x in row] for row in W]
    m, n = len(M), len(M[0]) if M else 0
    k = len(V[0]) if V else 0
    if len(V) != m or len(W) != k or any(len(r) != k for r in V) or any(len(r) != n for r in W):
        raise ValueError(f"shape mismatch: M {m}x{n}, V {len(V)}x{k}, W {len(W)}x{len(W[0]) if W else 0}")
    if any(x < 0 for row in V for x in row) or any(x < 0 for row in W for x in row):
        return False
    for i in range(m):
        for j in range(n):
            if sum((V[i][t] * W[t][j] for t in range(k)), Fraction(0)) != M[i][j]:
                return False
    return True


# --- JSON ----------------------------------------------------------------------

def matrix_to_json(M) -> dict:
    rows = len(M)
    cols = len(M[0]) if rows else 0
    return {"rows": rows, "cols": cols, "entries": [[format_rational(x) for x in r] for r in M]}


def matrix_from_json(data) -> list:
    if isinstance(data, str):
        data = json.loads(data)
    entries = [[parse_rational(x) for x in r] for r in data["entries"]]
    if len(entries) != int(data.get("rows", len(entries))):
        raise ValueError("row count does not match entries")
    if entries and any(len(r) != int(data.get("cols", len(entries[0]))) for r in entries):
        raise ValueError("column count does not match entries")
    return entries


def bridge_to_json(bridge: SimplexNested) -> dict:
    return {
        "k": bridge.k,
        "matrix": matrix_to_json(bridge.M),
        "inner": [[format_rational(x) for x in p] for p in bridge.inner],
        "column_index": bridge.column_index,
        "zero_columns": bridge.zero_columns,
        "outer": [
            {"normal": [format_rational(x) for x in h.normal], "offset": format_rational(h.offset),
             "relation": h.relation}
            for h in bridge.outer
        ],
    }


def bridge_from_json(data) -> SimplexNested:
    if isinstance(data, str):
        data = json.loads(data)
    M = matrix_from_json(data["matrix"])
    return nmf_to_npp(NmfInstance(M, int(data["k"])))


def points_to_json(X) -> dict:
    return {"vertices": [{"coords": [format_rational(x) for x in p]} for p in X]}


def points_from_json(data) -> list:
    if isinstance(data, str):
        data = json.loads(data)
    return [tuple(parse_rational(x) for x in v["coords"]) for v in data["vertices"]]
