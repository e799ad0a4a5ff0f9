"""End-to-end acceptance checks; each prints one PASS/FAIL line with its runtime."""

import json
import os
import random
import subprocess
import sys
import time
from fractions import Fraction as F

import pytest

from npp_forge.cli import main, selftest_linear, selftest_quadratic
from npp_forge.construction import build_instance, instance_from_json, validate_outer
from npp_forge.exact_geometry import INSIDE, OUTSIDE, in_hull
from npp_forge.inv_array import EtrInvArray
from npp_forge.nmf import (
    NmfInstance, check_simplex_nested, factorization_to_npp_solution, nmf_to_npp, npp_solution_to_factorization,
    verify_factorization,
)
from npp_forge.solvers import nonneg_rank_search

import acceptance_support as support
import oracles

HERE = os.path.dirname(__file__)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, seconds, limit, detail=""):
        ok = ok and seconds < limit
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f} s, limit {limit} s)"
        if detail:
            line += f"  {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def test_outer_polytope_structure(report):
    t0 = time.perf_counter()
    failures = []
    for m, n in [(1, 1), (2, 3), (3, 4), (4, 4)]:
        inst = build_instance(EtrInvArray(m, n, []))
        rep = validate_outer(inst)
        verts, facets, rank, _ = oracles.outer_counts(m, n)
        checks = [
            rep["ok"],
            len(inst.outer_vertices) == verts == (n + 2) * (m + 1),
            len(inst.inequality_facets) == facets == n + m + 3,
            oracles.affine_rank([v.coords for v in inst.outer_vertices]) == rank == n + m + 1,
            all(h.holds(v.coords) for v in inst.inner_vertices for h in inst.outer_facets),
        ]
        if not all(checks):
            failures.append((m, n, checks))
    report(1, "outer polytope structure", not failures, time.perf_counter() - t0, 10, str(failures or ""))


def test_linear_gadget_grid(report):
    t0 = time.perf_counter()
    agree, total = selftest_linear(ks=(2, 3))
    report(2, "linear gadget grid", agree == total == 9 ** 3 + 9 ** 4, time.perf_counter() - t0, 30,
           f"{agree}/{total} agree")


def test_quadratic_gadget_grid(report):
    t0 = time.perf_counter()
    agree, total = selftest_quadratic(16)
    report(3, "quadratic gadget grid", agree == total == 25 ** 2, time.perf_counter() - t0, 10,
           f"{agree}/{total} agree")


def test_lift_verify_equivalence(report):
    t0 = time.perf_counter()
    res = support.run_sweep(seed=0)
    report(4, "lift/verify equivalence", res["agree"] == res["total"] and res["satisfying"] > 0,
           time.perf_counter() - t0, 120,
           f"{res['agree']}/{res['total']} agree, {res['satisfying']} satisfying")


def test_array_witness_roundtrip(report):
    t0 = time.perf_counter()
    res = support.run_array_roundtrips(seed=0)
    bad = []
    for name, r in res.items():
        sols = r["solutions"]
        ok = (r["shape"] == r["expected_shape"] and sols
              and all(e["system_ok"] and e["residual_ok"] and e["exact"] is not False for e in sols))
        if not ok:
            bad.append(name)
    counts = ", ".join(f"{k}: {len(v['solutions'])}" for k, v in res.items())
    report(5, "array witness round trip", not bad, time.perf_counter() - t0, 30,
           f"solutions {counts}" + (f"; failed {bad}" if bad else ""))


def test_end_to_end_chain(report):
    t0 = time.perf_counter()
    res = support.run_chain(seed=0)
    seconds = time.perf_counter() - t0
    ok = res["sqrt_two"]["ok"] and res["no_real_root"]["ok"] and not res["no_real_root"]["incomplete"]
    report(6, "end-to-end chain", ok, seconds, 60, f"roots {res['sqrt_two']['roots']}, "
           f"x^2+1 empty={res['no_real_root']['empty']}")


def _dot(a, b):
    return sum((x * y for x, y in zip(a, b)), F(0))


def test_hull_certificates(report):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    bad, kinds = 0, {INSIDE: 0, OUTSIDE: 0}
    for t in range(1000):
        dim = rng.randint(2, 5)
        gens = [tuple(F(rng.randint(-6, 6), rng.randint(1, 4)) for _ in range(dim)) for _ in range(rng.randint(1, 8))]
        if t % 2:
            w = [rng.randint(0, 4) for _ in gens]
            w[0] += 1
            q = tuple(sum(F(wi, sum(w)) * g[r] for wi, g in zip(w, gens)) for r in range(dim))
        else:
            q = tuple(F(rng.randint(-6, 6), rng.randint(1, 4)) for _ in range(dim))
        cert = in_hull(q, gens)
        kinds[cert.kind] += 1
        if cert.kind == INSIDE:
            coeffs = dict(cert.inside)
            ok = (all(c >= 0 for c in coeffs.values()) and sum(coeffs.values()) == 1
                  and tuple(sum((c * gens[i][r] for i, c in coeffs.items()), F(0)) for r in range(dim)) == q)
        else:
            h = cert.separator
            a, off = h.normal, h.offset
            ok = all(_dot(a, g) < off for g in gens) and _dot(a, q) > off
        bad += not ok
        if t % 2:
            bad += cert.kind != INSIDE
    report(7, "hull certificates", bad == 0, time.perf_counter() - t0, 30,
           f"{kinds[INSIDE]} inside, {kinds[OUTSIDE]} outside, {bad} bad")


def test_nmf_bridge(report):
    t0 = time.perf_counter()
    ok = True
    for k in (1, 2, 3):
        eye = [[F(int(i == j)) for j in range(k)] for i in range(k)]
        bridge = nmf_to_npp(NmfInstance(eye, k))
        V, W = npp_solution_to_factorization(bridge, bridge.inner)
        ok &= verify_factorization(eye, V, W)
        ok &= factorization_to_npp_solution(bridge, V, W) == bridge.inner
    circ = [[1, 1, 0], [0, 1, 1], [1, 0, 1]]
    found = nonneg_rank_search(circ, 3)
    ok &= found.found
    if found.found:
        bridge = nmf_to_npp(NmfInstance(circ, 3))
        X = factorization_to_npp_solution(bridge, found.V, found.W)
        ok &= check_simplex_nested(bridge, X)[0] is not None
        V, W = npp_solution_to_factorization(bridge, X)
        ok &= verify_factorization(circ, V, W)
    low = nonneg_rank_search(circ, 1)
    ok &= low.status == "impossible" and "rank" in low.reason
    report(8, "NMF bridge", ok, time.perf_counter() - t0, 120, f"k=1: {low.reason}")


def test_torus_example(report, tmp_path, capsys):
    t0 = time.perf_counter()
    src = tmp_path / "torus.txt"
    codes = [main(["example", "torus", "-o", str(src)]), main(["reduce", str(src), "-o", str(tmp_path / "torus")])]
    seconds = time.perf_counter() - t0
    capsys.readouterr()
    outer = json.loads((tmp_path / "torus" / "report.json").read_text())["outer"]
    inst = instance_from_json((tmp_path / "torus" / "instance.json").read_text())
    m, n = inst.m, inst.n
    ok = (codes == [0, 0] and outer["ok"] and all(v["ok"] for k, v in outer.items() if k != "ok")
          and len(inst.outer_vertices) == (n + 2) * (m + 1)
          and len(inst.inequality_facets) == n + m + 3
          and outer["affine_rank"]["detail"].startswith(f"rank {n + m + 1}"))
    report(9, "torus example", ok, seconds, 60,
           f"array {m}x{n}, {len(inst.outer_vertices)} outer / {len(inst.inner_vertices)} inner vertices")


def test_determinism(report, tmp_path):
    t0 = time.perf_counter()
    env = dict(os.environ)
    procs = []
    for tag, hashseed in (("a", "1"), ("b", "2")):
        env_t = dict(env, PYTHONHASHSEED=hashseed)
        procs.append(subprocess.Popen([sys.executable, os.path.join(HERE, "acceptance_support.py"),
                                       str(tmp_path / tag), "0"], env=env_t))
    codes = [p.wait() for p in procs]
    files_a = sorted(os.path.relpath(os.path.join(d, f), tmp_path / "a")
                     for d, _, fs in os.walk(tmp_path / "a") for f in fs)
    files_b = sorted(os.path.relpath(os.path.join(d, f), tmp_path / "b")
                     for d, _, fs in os.walk(tmp_path / "b") for f in fs)
    differ = [f for f in files_a if f not in files_b
              or (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    ok = codes == [0, 0] and files_a == files_b and len(files_a) >= 3 + 2 * 6 and not differ
    report(10, "determinism", ok, time.perf_counter() - t0, 300,
           f"{len(files_a)} files compared" + (f", differing: {differ}" if differ else ""))
