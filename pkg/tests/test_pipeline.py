import filecmp
import math
from fractions import Fraction as F

import pytest

from npp_forge.inv_array import matrix_to_assignment
from npp_forge.pipeline import (
    BUNDLE_FILES, PipelineError, read_bundle, roundtrip_check, run_pipeline, write_bundle,
)
from npp_forge.polynomial import apply_map, compose_maps, parse_system
from npp_forge.solvers import SolveConfig, solve_array


@pytest.fixture(scope="module")
def unit_roots():
    return run_pipeline(parse_system("bound 2\nx^2 - 1 = 0"))


@pytest.fixture(scope="module")
def sqrt_two():
    return run_pipeline(parse_system("bound 2\nx^2 - 2 = 0"))


def test_stage_sizes(unit_roots):
    r = unit_roots
    assert r.array.m == 3 and r.array.n == 2 * len(r.inv.variables)
    assert len(r.instance.outer_vertices) == (r.array.n + 2) * (r.array.m + 1)
    assert r.outer_report["ok"]
    assert [e["stage"] for e in r.sizes()] == ["reduce", "normalize", "array", "instance", "compose", "validate"]
    assert all("seconds" in e for e in r.log)


def test_empty_system_gives_minimal_instance():
    r = run_pipeline(parse_system("bound 1"))
    assert (r.array.m, r.array.n) == (3, 0)
    assert r.outer_report["ok"]


def test_rational_roots_pass_exactly(unit_roots):
    rep = roundtrip_check(unit_roots, [{"x": 1}, {"x": -1}])
    assert rep["ok"]
    assert [e["index"] for e in rep["samples"]] == [0, 1]


def test_non_solution_is_reported(unit_roots):
    rep = roundtrip_check(unit_roots, [{"x": F(1, 2)}])
    (e,) = rep["samples"]
    assert not rep["ok"] and not e["array_ok"] and "array_violation" in e
    assert e["roundtrip_ok"]  # the witnesses are inverse everywhere on the box


def test_numeric_roots_pass_within_tolerance(sqrt_two):
    rep = roundtrip_check(sqrt_two, [{"x": math.sqrt(2)}, {"x": -math.sqrt(2)}], tol=1e-8)
    assert rep["ok"], rep


def test_parallel_report_matches_sequential(unit_roots):
    samples = [{"x": 1}, {"x": F(1, 3)}, {"x": -1}]
    assert roundtrip_check(unit_roots, samples, jobs=2) == roundtrip_check(unit_roots, samples)


def test_solver_and_backward_witness_recover_roots(sqrt_two):
    r = sqrt_two
    res = solve_array(r.array, SolveConfig(tolerance=1e-10))
    roots = sorted(float(apply_map(r.backward, matrix_to_assignment(r.array, s))["x"]) for s in res.solutions)
    assert len(roots) == 2
    assert abs(roots[0] + math.sqrt(2)) <= 1e-9 and abs(roots[1] - math.sqrt(2)) <= 1e-9


def test_composed_maps_agree_with_stagewise_maps(unit_roots):
    r = unit_roots
    for x in (F(1), F(-1), F(3, 7)):
        pt = {"x": x}
        for _, fwd, _ in r.stage_maps:
            pt = apply_map(fwd, pt)
        assert pt == apply_map(r.forward, {"x": x})
    (_, f1, _), (_, f2, _), (_, f3, _) = r.stage_maps
    left, right = compose_maps(f3, compose_maps(f2, f1)), compose_maps(compose_maps(f3, f2), f1)
    assert apply_map(left, {"x": F(1, 5)}) == apply_map(right, {"x": F(1, 5)})


def test_stage_error_is_tagged(monkeypatch):
    import npp_forge.pipeline as pl

    def boom(_):
        raise ValueError("broken")

    monkeypatch.setattr(pl, "build_instance", boom)
    with pytest.raises(PipelineError) as exc:
        pl.run_pipeline(parse_system("bound 2\nx - 1 = 0"))
    assert exc.value.stage == "instance"


def test_bundle_roundtrip_is_byte_identical(unit_roots, tmp_path):
    rep = roundtrip_check(unit_roots, [{"x": 1}])
    paths = write_bundle(unit_roots, tmp_path / "a", rep)
    assert [p.rsplit("/", 1)[1] for p in paths] == list(BUNDLE_FILES)
    back = read_bundle(tmp_path / "a")
    write_bundle(back, tmp_path / "b", rep)
    for name in BUNDLE_FILES:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name
    assert apply_map(back.forward, {"x": 1}) == apply_map(unit_roots.forward, {"x": 1})


def test_repeated_runs_are_deterministic(tmp_path):
    system = parse_system("bound 2\nx^2 - 1 = 0")
    write_bundle(run_pipeline(system), tmp_path / "a")
    write_bundle(run_pipeline(system), tmp_path / "b")
    for name in BUNDLE_FILES:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name
