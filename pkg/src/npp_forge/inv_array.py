"""ETR-INV arrays and the conversion from ETR-INV systems.

An m x n array holds variables in [1/2, 2]. Linear constraints relate cells of
one row and sum to 5/2; inversion constraints relate two cells of one column.
Indices are 1-based throughout (rows, columns, and constraint operands).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .etr_inv import Add, EtrInvSystem, Inv
from .exact_geometry import format_rational, parse_rational
from .polynomial import Polynomial, RationalMap

FIVE_HALVES = Fraction(5, 2)
LOW, HIGH = Fraction(1, 2), Fraction(2)
ROLES = ("y", "alpha", "beta", "gamma", "delta", "epsilon")


class ArrayError(ValueError):
    pass


@dataclass(frozen=True)
class RowPair:
    row: int
    j: int
    k: int

    def cells(self):
        return ((self.row, self.j), (self.row, self.k))


@dataclass(frozen=True)
class RowTriple:
    row: int
    j: int
    k: int
    l: int

    def cells(self):
        return ((self.row, self.j), (self.row, self.k), (self.row, self.l))


@dataclass(frozen=True)
class ColInv:
    col: int
    i: int
    j: int

    def cells(self):
        return ((self.i, self.col), (self.j, self.col))


@dataclass
class EtrInvArray:
    m: int
    n: int
    constraints: list
    cells: list = field(default=None)

    def __post_init__(self):
        if self.cells is None:
            self.cells = [[f"a_{i}_{j}" for j in range(1, self.n + 1)] for i in range(1, self.m + 1)]
        for idx, c in enumerate(self.constraints):
            validate_constraint(c, self.m, self.n, idx)

    def cell_names(self) -> list:
        return [name for row in self.cells for name in row]


def validate_constraint(c, m, n, idx=0):
    if isinstance(c, (RowPair, RowTriple)):
        cols = (c.j, c.k) if isinstance(c, RowPair) else (c.j, c.k, c.l)
        if not 1 <= c.row <= m or not all(1 <= x <= n for x in cols):
            raise ArrayError(f"constraint {idx}: index out of range")
        if len(set(cols)) != len(cols):
            raise ArrayError(f"constraint {idx}: repeated column index")
    elif isinstance(c, ColInv):
        if not 1 <= c.col <= n or not (1 <= c.i <= m and 1 <= c.j <= m):
            raise ArrayError(f"constraint {idx}: index out of range")
    else:
        raise ArrayError(f"constraint {idx}: unknown type {type(c).__name__}")


@dataclass
class ArrayWitness:
    forward: RationalMap
    backward: RationalMap
    legend: dict


def check_array_assignment(array: EtrInvArray, matrix: Sequence[Sequence], tol=None):
    """Return ``(ok, index)``; range violations are reported with index -1."""
    if len(matrix) != array.m or any(len(r) != array.n for r in matrix):
        raise ArrayError(f"assignment shape does not match {array.m}x{array.n}")
    slack = 0 if tol is None else tol
    for row in matrix:
        for v in row:
            if v < LOW - slack or v > HIGH + slack:
                return False, -1

    def cell(i, j):
        return matrix[i - 1][j - 1]

    for idx, c in enumerate(array.constraints):
        if isinstance(c, ColInv):
            r = cell(c.i, c.col) * cell(c.j, c.col) - 1
        else:
            r = sum(cell(i, j) for i, j in c.cells()) - FIVE_HALVES
        if (r != 0) if tol is None else abs(r) > tol:
            return False, idx
    return True, None


# --- normalization -------------------------------------------------------------

CANONICAL_UNSAT = EtrInvSystem(
    ["u1", "u2", "u3", "u4"],
    [Inv("u1", "u1"), Inv("u2", "u2"), Add("u1", "u2", "u3"), Add("u3", "u1", "u4")],
    notes=["unsatisfiable: an addition forces a zero summand"],
)


def _fresh_namer(taken):
    taken = set(taken)

    def fresh(base):
        name, k = base, 0
        while name in taken:
            k += 1
            name = f"{base}_{k}"
        taken.add(name)
        return name

    return fresh


def normalize_inv_system(system: EtrInvSystem, with_backward: bool = False):
    """Rewrite so each variable is in at most one Inv and Add operands are distinct.

    Variables linked by inversions are merged: along a chain they alternate
    between a representative ``r`` and its inverse ``r'``. An odd cycle forces
    every member to 1. A repeated Add operand ``Add(x, x, z)`` implies
    ``x <= 1``, so a copy ``x'`` is tied to ``x`` through ``x + 1 = s = x' + 1``.

    Returns ``(normalized, forward)`` or, with ``with_backward``,
    ``(normalized, forward, backward)``. ``forward`` maps the original variables
    to the normalized ones; ``backward`` maps back. A system that is already
    normalized is returned unchanged with identity maps.
    """
    if is_normalized(system):
        same = EtrInvSystem(list(system.variables), list(system.constraints), list(system.notes))
        ident = RationalMap.identity(system.variables)
        return (same, ident, ident) if with_backward else (same, ident)
    names = list(system.variables)
    order = {v: k for k, v in enumerate(names)}
    parent = {v: v for v in names}
    parity = {v: 0 for v in names}  # parity relative to parent

    def find(v):
        path = []
        while parent[v] != v:
            path.append(v)
            v = parent[v]
        root = v
        acc = 0
        for u in reversed(path):
            acc ^= parity[u]
            parity[u] = acc
            parent[u] = root
        return root

    pinned = set()
    for c in system.constraints:
        if isinstance(c, Inv):
            rx, ry = find(c.x), find(c.y)
            px, py = parity[c.x] if c.x != rx else 0, parity[c.y] if c.y != ry else 0
            if rx == ry:
                if px == py:
                    pinned.add(rx)
                continue
            if order[rx] > order[ry]:
                rx, ry, px, py = ry, rx, py, px
            parent[ry] = rx
            parity[ry] = px ^ py ^ 1
            if ry in pinned:
                pinned.add(rx)

    def rel(v):
        r = find(v)
        return r, (parity[v] if v != r else 0)

    in_inv = {find(v) for c in system.constraints if isinstance(c, Inv) for v in c.names()}
    odd_name = {}
    for v in names:
        r, p = rel(v)
        if p and r not in odd_name:
            odd_name[r] = v
    subst = {}
    for v in names:
        r, p = rel(v)
        if r in pinned or not p:
            subst[v] = r
        else:
            subst[v] = odd_name[r]

    kept = [v for v in names if subst[v] == v]
    fresh = _fresh_namer(names)
    cons = []
    for r in sorted({find(v) for v in in_inv}, key=order.get):
        if r in pinned:
            cons.append(Inv(r, r))
        else:
            cons.append(Inv(r, odd_name[r]))

    new_vars = []
    exprs = {}  # new variable -> polynomial over the original names
    src = tuple(names)
    one_var = None
    copies = {}

    def get_one():
        nonlocal one_var
        if one_var is None:
            one_var = fresh("one")
            new_vars.append(one_var)
            exprs[one_var] = Polynomial.constant(1, src)
            cons.append(Inv(one_var, one_var))
        return one_var

    def copy_of(x):
        if x in copies:
            return copies[x]
        if find(x) in pinned:
            u = fresh(f"{x}_copy")
            new_vars.append(u)
            exprs[u] = Polynomial.constant(1, src)
            cons.append(Inv(u, u))
        else:
            one = get_one()
            u = fresh(f"{x}_copy")
            s = fresh(f"{x}_plus_one")
            new_vars.extend([u, s])
            px = Polynomial.var(x, src)
            exprs[u] = px
            exprs[s] = px + 1
            cons.append(Add(x, one, s))
            cons.append(Add(u, one, s))
        copies[x] = u
        return u

    for c in system.constraints:
        if not isinstance(c, Add):
            continue
        x, y, z = subst[c.x], subst[c.y], subst[c.z]
        if z in (x, y):
            return _unsat_result(system, with_backward)
        if x == y:
            y = copy_of(x)
        cons.append(Add(x, y, z))

    out_vars = kept + new_vars
    if set(out_vars) == set(names) and cons == list(system.constraints) and out_vars == names:
        normalized = system
    else:
        normalized = EtrInvSystem(out_vars, cons, notes=list(system.notes))
    forward = RationalMap.from_polynomials(
        src, tuple(out_vars),
        [Polynomial.var(v, src) if v in order else exprs[v] for v in out_vars],
    )
    if not with_backward:
        return normalized, forward
    tgt = tuple(out_vars)
    backward = RationalMap.from_polynomials(
        tgt, src, [Polynomial.var(subst[v], tgt) for v in names]
    )
    return normalized, forward, backward


def _unsat_result(system, with_backward):
    src = tuple(system.variables)
    tgt = tuple(CANONICAL_UNSAT.variables)
    forward = RationalMap.from_polynomials(src, tgt, [Polynomial.constant(1, src) for _ in tgt])
    if not with_backward:
        return CANONICAL_UNSAT, forward
    backward = RationalMap.from_polynomials(tgt, src, [Polynomial.constant(1, tgt) for _ in src])
    return CANONICAL_UNSAT, forward, backward


def is_normalized(system: EtrInvSystem) -> bool:
    seen = set()
    for c in system.constraints:
        if isinstance(c, Inv):
            for v in set(c.names()):
                if v in seen:
                    return False
                seen.add(v)
        elif len(set(c.names())) != 3:
            return False
    return True


# --- array construction --------------------------------------------------------

def system_to_array(system: EtrInvSystem):
    """Build the 3 x 2n array of a normalized system.

    Row 1 holds ``y_1..y_n | alpha_1..alpha_n``, row 2 ``beta | gamma`` and
    row 3 ``delta | epsilon``. ``y_i`` carries ``x_i``.
    """
    if not is_normalized(system):
        raise ArrayError("system is not normalized; apply normalize_inv_system first")
    xs = list(system.variables)
    n = len(xs)
    idx = {v: k + 1 for k, v in enumerate(xs)}
    cells = [
        [f"y{i}" for i in range(1, n + 1)] + [f"alpha{i}" for i in range(1, n + 1)],
        [f"beta{i}" for i in range(1, n + 1)] + [f"gamma{i}" for i in range(1, n + 1)],
        [f"delta{i}" for i in range(1, n + 1)] + [f"epsilon{i}" for i in range(1, n + 1)],
    ]
    cons = [RowPair(1, i, n + i) for i in range(1, n + 1)]
    beta_used, delta_used, gamma_used = set(), set(), set()
    beta_is_x = set()  # beta_i = x_i (second member of a pair); otherwise 1/x_i
    for c in system.constraints:
        if isinstance(c, Add):
            cons.append(RowTriple(1, idx[c.x], idx[c.y], n + idx[c.z]))
    for c in system.constraints:
        if not isinstance(c, Inv):
            continue
        i, j = sorted((idx[c.x], idx[c.y]))
        if i == j:
            cons += [ColInv(i, 1, 2), ColInv(i, 2, 3), ColInv(i, 1, 3)]
            beta_used.add(i)
            delta_used.add(i)
            continue
        cons += [
            ColInv(i, 1, 2), ColInv(i, 2, 3), ColInv(j, 1, 3), ColInv(j, 2, 3),
            RowPair(2, i, n + i), RowPair(2, j, n + i),
        ]
        beta_used.update((i, j))
        delta_used.update((i, j))
        gamma_used.add(i)
        beta_is_x.add(j)
    for i in range(1, n + 1):
        if i not in beta_used:
            cons.append(ColInv(i, 1, 2))
        if i not in delta_used:
            cons.append(ColInv(i, 2, 3))
        if i not in gamma_used:
            cons.append(RowPair(2, i, n + i))
        cons.append(RowPair(3, i, n + i))
    array = EtrInvArray(3, 2 * n, cons, cells)

    src = tuple(xs)
    one = Polynomial.constant(1, src)
    five_halves = Polynomial.constant(FIVE_HALVES, src)
    comps = {}
    legend = {}
    for i, v in enumerate(xs, start=1):
        x = Polynomial.var(v, src)
        beta = (x, one) if i in beta_is_x else (one, x)
        delta = (one, x) if i in beta_is_x else (x, one)
        comps[f"y{i}"] = (x, one)
        comps[f"alpha{i}"] = (five_halves - x, one)
        comps[f"beta{i}"] = beta
        comps[f"delta{i}"] = delta
        comps[f"epsilon{i}"] = _five_halves_minus(delta, five_halves)
        for role in ROLES:
            legend[f"{role}{i}"] = f"{role}_{i}"
    for i in range(1, n + 1):
        # gamma_i = 5/2 - beta_i in every case (pair rows pin it through beta_i)
        comps[f"gamma{i}"] = _five_halves_minus(comps[f"beta{i}"], five_halves)
    names = tuple(array.cell_names())
    forward = RationalMap(src, names, [comps[c] for c in names])
    backward = RationalMap.from_polynomials(names, src, [Polynomial.var(f"y{i}", names) for i in range(1, n + 1)])
    return array, ArrayWitness(forward, backward, legend)


def _five_halves_minus(frac, five_halves):
    num, den = frac
    return (five_halves * den - num, den)


def assignment_to_matrix(array: EtrInvArray, values: dict) -> list:
    return [[values[c] for c in row] for row in array.cells]


def matrix_to_assignment(array: EtrInvArray, matrix) -> dict:
    return {c: matrix[i][j] for i, row in enumerate(array.cells) for j, c in enumerate(row)}


# --- JSON --------------------------------------------------------------------

def array_to_json(array: EtrInvArray, legend: dict | None = None) -> dict:
    out = []
    for c in array.constraints:
        if isinstance(c, RowPair):
            out.append({"type": "rowpair", "row": c.row, "indices": [c.j, c.k]})
        elif isinstance(c, RowTriple):
            out.append({"type": "rowtriple", "row": c.row, "indices": [c.j, c.k, c.l]})
        else:
            out.append({"type": "colinv", "col": c.col, "indices": [c.i, c.j]})
    return {"m": array.m, "n": array.n, "cells": array.cells, "constraints": out, "legend": legend or {}}


def array_from_json(data) -> tuple:
    """Return ``(array, legend)``."""
    if isinstance(data, str):
        data = json.loads(data)
    try:
        cons = []
        for c in data["constraints"]:
            t, ind = c["type"], c["indices"]
            if t == "rowpair":
                cons.append(RowPair(c["row"], *ind))
            elif t == "rowtriple":
                cons.append(RowTriple(c["row"], *ind))
            elif t == "colinv":
                cons.append(ColInv(c["col"], *ind))
            else:
                raise ArrayError(f"unknown constraint type {t!r}")
        return EtrInvArray(int(data["m"]), int(data["n"]), cons, data.get("cells")), data.get("legend", {})
    except (KeyError, TypeError) as exc:
        raise ArrayError(f"malformed array JSON: {exc}") from None


def matrix_to_json(matrix) -> list:
    return [[format_rational(v) for v in row] for row in matrix]


def matrix_from_json(data) -> list:
    return [[parse_rational(v) for v in row] for row in data]
