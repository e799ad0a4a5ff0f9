"""Workloads shared by the acceptance tests; each returns a JSON-ready dict.

Run as a script to write the deterministic bundles of the sweep, the array
round trips and the end-to-end chain into a directory:
``python3 acceptance_support.py OUTDIR SEED``.
"""

import itertools
import json
import math
import os
import random
import sys
from fractions import Fraction as F

from npp_forge.construction import build_instance, instance_to_json
from npp_forge.etr_inv import Add, EtrInvSystem, Inv, check_inv_assignment
from npp_forge.exact_geometry import format_rational
from npp_forge.inv_array import (
    ColInv, EtrInvArray, RowPair, RowTriple, array_to_json, assignment_to_matrix, check_array_assignment,
    matrix_to_assignment, system_to_array,
)
from npp_forge.pipeline import run_pipeline, write_bundle
from npp_forge.polynomial import apply_map, parse_system
from npp_forge.solvers import SolveConfig, solve_array
from npp_forge.verifier import check_nested, lift_assignment

sys.path.insert(0, os.path.dirname(__file__))
import oracles  # noqa: E402

GRID = [F(k, 4) for k in range(2, 9)]
SWEEP_ARRAY = EtrInvArray(3, 3, [RowPair(1, 1, 2), RowTriple(2, 1, 2, 3), ColInv(3, 1, 3)])
SWEEP_BASE = [[F(1), F(3, 2), F(2)], [F(1, 2), F(1), F(1)], [F(1), F(1), F(1, 2)]]
CELLS = [(i, j) for i in range(3) for j in range(3)]

ROUNDTRIP_SYSTEMS = {
    "self_inverse": EtrInvSystem(["x1"], [Inv("x1", "x1")]),
    "inverse_pair": EtrInvSystem(["x1", "x2"], [Inv("x1", "x2")]),
    "sum_of_inverses": EtrInvSystem(["x1", "x2", "x3"], [Add("x1", "x2", "x3"), Inv("x1", "x2")]),
}


def _fmt_matrix(M):
    return [[format_rational(x) for x in row] for row in M]


# --- lift/verify sweep ---------------------------------------------------------------

def _random_alpha(rng):
    return [[F(rng.randint(8, 32), 16) for _ in range(3)] for _ in range(3)]


def _planted_alpha(rng):
    """Random assignment satisfying the three constraints of the sweep array."""
    while True:
        a = _random_alpha(rng)
        a[0][1] = F(5, 2) - a[0][0]
        a[1][2] = F(5, 2) - a[1][0] - a[1][1]
        a[2][2] = 1 / a[0][2]
        if all(F(1, 2) <= x <= 2 for row in a for x in row):
            return a


def sweep_assignments(seed):
    """Every cell pair jointly over the grid, the triple jointly, then 500 seeded random points."""
    seen, out = set(), []

    def add(a):
        key = tuple(x for row in a for x in row)
        if key not in seen:
            seen.add(key)
            out.append(a)

    for c1, c2 in itertools.combinations(CELLS, 2):
        for v1, v2 in itertools.product(GRID, repeat=2):
            a = [row[:] for row in SWEEP_BASE]
            a[c1[0]][c1[1]], a[c2[0]][c2[1]] = v1, v2
            add(a)
    for vals in itertools.product(GRID, repeat=3):
        a = [row[:] for row in SWEEP_BASE]
        a[1] = list(vals)
        add(a)
    rng = random.Random(seed)
    for t in range(500):
        add(_planted_alpha(rng) if t % 2 else _random_alpha(rng))
    return out


def run_sweep(seed):
    inst = build_instance(SWEEP_ARRAY)
    rows, agree, positives = [], 0, 0
    for a in sweep_assignments(seed):
        nested = check_nested(inst, lift_assignment(inst, a), first_only=True).ok
        exact = check_array_assignment(SWEEP_ARRAY, a)[0]
        assert exact == oracles.array_ok(3, 3, SWEEP_ARRAY.constraints, a)
        agree += nested == exact
        positives += exact
        rows.append({"alpha": _fmt_matrix(a), "array": exact, "nested": nested})
    return {"instance": instance_to_json(inst), "total": len(rows), "agree": agree, "satisfying": positives,
            "checks": rows}


# --- array round trips ------------------------------------------------------------------

def _snap(point):
    return {k: F(float(v)).limit_denominator(64) for k, v in point.items()}


def run_array_roundtrips(seed):
    out = {}
    for name, system in ROUNDTRIP_SYSTEMS.items():
        arr, wit = system_to_array(system)
        res = solve_array(arr, SolveConfig(tolerance=1e-12, seed=seed, sample_budget=32))
        entries = []
        for sol in res.solutions:
            cells = matrix_to_assignment(arr, sol)
            src = apply_map(wit.backward, cells)
            again = apply_map(wit.forward, src)
            residual = max(abs(float(again[k]) - float(cells[k])) for k in cells)
            entry = {"source": {k: repr(float(v)) for k, v in sorted(src.items())},
                     "system_ok": check_inv_assignment(system, src, tol=1e-9)[0],
                     "residual_ok": residual <= 1e-9, "exact": None}
            snapped = _snap(src)
            if check_inv_assignment(system, snapped)[0]:
                image = apply_map(wit.forward, snapped)
                entry["exact"] = (check_array_assignment(arr, assignment_to_matrix(arr, image)) == (True, None)
                                  and apply_map(wit.backward, image) == snapped)
            entries.append(entry)
        out[name] = {"shape": [arr.m, arr.n], "expected_shape": [3, 2 * len(system.variables)],
                     "continuum": res.continuum, "array": array_to_json(arr, wit.legend), "solutions": entries}
    return out


# --- end-to-end chain -----------------------------------------------------------------

def run_chain(seed, bundle_dir=None):
    out = {}
    result = run_pipeline(parse_system("bound 2\nx^2 - 2 = 0"))
    res = solve_array(result.array, SolveConfig(tolerance=1e-10, seed=seed))
    roots = sorted(float(apply_map(result.backward, matrix_to_assignment(result.array, s))["x"])
                   for s in res.solutions)
    out["sqrt_two"] = {"roots": [repr(r) for r in roots],
                       "ok": len(roots) == 2 and abs(roots[0] + math.sqrt(2)) <= 1e-9
                       and abs(roots[1] - math.sqrt(2)) <= 1e-9}
    if bundle_dir:
        write_bundle(result, os.path.join(bundle_dir, "sqrt_two"))
    result = run_pipeline(parse_system("bound 2\nx^2 + 1 = 0"))
    res = solve_array(result.array, SolveConfig(tolerance=1e-10, seed=seed))
    out["no_real_root"] = {"empty": res.empty, "incomplete": res.incomplete, "ok": res.empty}
    if bundle_dir:
        write_bundle(result, os.path.join(bundle_dir, "no_real_root"))
    return out


def write_all(directory, seed):
    os.makedirs(directory, exist_ok=True)

    def dump(name, obj):
        with open(os.path.join(directory, name), "w") as fh:
            fh.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")

    dump("sweep.json", run_sweep(seed))
    dump("array_roundtrips.json", run_array_roundtrips(seed))
    dump("chain.json", run_chain(seed, os.path.join(directory, "chain")))


if __name__ == "__main__":
    write_all(sys.argv[1], int(sys.argv[2]))
