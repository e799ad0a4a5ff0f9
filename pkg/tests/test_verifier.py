import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from npp_forge.construction import build_instance, segment_point
from npp_forge.exact_geometry import GeometryInputError
from npp_forge.inv_array import ColInv, EtrInvArray, RowPair, RowTriple, check_array_assignment
from npp_forge.verifier import (
    CandidateX, ExtractionError, candidate_from_json, candidate_to_json, check_nested, extract_assignment,
    gadget_linear_predicate, gadget_quadratic_predicate, lift_assignment,
)

import oracles

alphas = st.fractions(min_value=F(1, 2), max_value=2, max_denominator=8)


def test_lift_endpoint_and_boundary():
    inst = build_instance(EtrInvArray(1, 1, []))
    by = {v.label: v.coords for v in inst.outer_vertices}
    X = dict(lift_assignment(inst, [[F(2)]]).vertices)
    assert X["x_1_1"] == by["v_1_1"]
    X = dict(lift_assignment(inst, [[F(1, 2)]]).vertices)
    assert X["x_1_1"][1 + inst.n + 1] == F(1, 2)


def test_lift_unit_value_coordinates():
    inst = build_instance(EtrInvArray(1, 1, []))
    X = dict(lift_assignment(inst, [[F(1)]]).vertices)
    assert X["x_1_1"] == (0, 0, 1, 1)


def test_lift_rejects_out_of_range():
    inst = build_instance(EtrInvArray(1, 1, []))
    with pytest.raises(GeometryInputError):
        lift_assignment(inst, [[F(3)]])
    with pytest.raises(GeometryInputError):
        lift_assignment(inst, [[F(1), F(1)]])


def test_extract_missing_frame_vertex():
    inst = build_instance(EtrInvArray(1, 1, []))
    X = lift_assignment(inst, [[F(1)]])
    X = CandidateX([(l, p) for l, p in X.vertices if l != "u_0_1"])
    with pytest.raises(ExtractionError) as exc:
        extract_assignment(inst, X)
    assert exc.value.label == "u_0_1"


def test_extract_first_half_vertex():
    inst = build_instance(EtrInvArray(1, 1, []))
    X = lift_assignment(inst, [[F(1)]])
    verts = [(l, p) if l != "x_1_1" else (l, segment_point(inst, 1, 1, F(0))) for l, p in X.vertices]
    with pytest.raises(ExtractionError, match="first half"):
        extract_assignment(inst, CandidateX(verts))


def test_extract_no_vertex_on_segment():
    inst = build_instance(EtrInvArray(1, 2, []))
    X = lift_assignment(inst, [[F(1), F(1)]])
    X = CandidateX([(l, p) for l, p in X.vertices if l != "x_1_2"])
    with pytest.raises(ExtractionError) as exc:
        extract_assignment(inst, X)
    assert "1_2" in exc.value.label


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_extract_inverts_lift(m, n, data):
    inst = build_instance(EtrInvArray(m, n, []))
    alpha = [[data.draw(alphas) for _ in range(n)] for _ in range(m)]
    assert extract_assignment(inst, lift_assignment(inst, alpha)) == alpha


def _colinv_instance():
    return build_instance(EtrInvArray(2, 1, [ColInv(1, 1, 2)]))


def test_check_nested_accepts_inverse_pair():
    inst = _colinv_instance()
    assert check_nested(inst, lift_assignment(inst, [[F(2)], [F(1, 2)]])).ok


def test_check_nested_rejects_wrong_product():
    inst = _colinv_instance()
    v = check_nested(inst, lift_assignment(inst, [[F(1)], [F(3, 2)]]))
    assert not v.ok
    bad = [f for f in v.failures if f["kind"] == "inner_vertex"]
    assert bad and bad[0]["label"].startswith("r_")
    assert bad[0]["constraint_ref"] == 0
    assert "ColInv" in bad[0]["constraint"]


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2), st.integers(1, 3), st.data())
def test_constraint_free_instances_accept_any_alpha(m, n, data):
    inst = build_instance(EtrInvArray(m, n, []))
    alpha = [[data.draw(alphas) for _ in range(n)] for _ in range(m)]
    assert check_nested(inst, lift_assignment(inst, alpha)).ok


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_check_nested_agrees_with_array_checker(data):
    arr = EtrInvArray(2, 3, [RowPair(1, 1, 2), RowTriple(2, 1, 2, 3), ColInv(3, 1, 2)])
    inst = build_instance(arr)
    grid = [F(k, 4) for k in range(2, 9)]
    alpha = [[data.draw(st.sampled_from(grid)) for _ in range(3)] for _ in range(2)]
    expected = oracles.array_ok(2, 3, arr.constraints, alpha)
    assert check_array_assignment(arr, alpha)[0] == expected
    assert check_nested(inst, lift_assignment(inst, alpha)).ok == expected


def test_check_nested_outer_violation():
    inst = _colinv_instance()
    X = lift_assignment(inst, [[F(2)], [F(1, 2)]])
    p = list(X.vertices[-1][1])
    p[1 + inst.n + 1] += 5
    X.vertices[-1] = (X.vertices[-1][0], tuple(p))
    v = check_nested(inst, X)
    assert not v.ok and v.failures[0]["kind"] == "outer_facet"


def test_check_nested_tolerance_mode():
    inst = _colinv_instance()
    r = math.sqrt(2)
    X = lift_assignment(inst, [[F(1)], [F(1)]])
    near = lift_assignment(inst, [[F(r)], [F(1 / r)]])
    floats = CandidateX([(l, tuple(float(x) for x in p)) for l, p in near.vertices])
    assert check_nested(inst, floats, tol=1e-8).ok
    skew = lift_assignment(inst, [[F(r)], [F(1 / r + 0.01)]])
    floats = CandidateX([(l, tuple(float(x) for x in p)) for l, p in skew.vertices])
    assert not check_nested(inst, floats, tol=1e-8).ok
    assert check_nested(inst, X).ok


def test_candidate_json_roundtrip():
    inst = _colinv_instance()
    X = lift_assignment(inst, [[F(2)], [F(1, 2)]])
    back = candidate_from_json(candidate_to_json(X))
    assert back.vertices == X.vertices


# --- gadget predicates -------------------------------------------------------------

def test_linear_gadget_examples():
    assert gadget_linear_predicate([1, 0], F(1, 2))
    assert gadget_linear_predicate([F(1, 3)] * 3, F(1, 3))
    assert not gadget_linear_predicate([1, F(1, 4)], F(1, 2))
    with pytest.raises(ValueError):
        gadget_linear_predicate([F(3, 2)], F(1, 2))


def test_quadratic_gadget_examples():
    assert gadget_quadratic_predicate(1, 1)
    assert gadget_quadratic_predicate(2, F(1, 2))
    assert not gadget_quadratic_predicate(F(3, 2), F(3, 4))
    with pytest.raises(ValueError):
        gadget_quadratic_predicate(3, 1)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.fractions(min_value=0, max_value=1, max_denominator=6), min_size=1, max_size=4),
       st.fractions(min_value=0, max_value=1, max_denominator=6))
def test_linear_gadget_is_the_mean(lams, t):
    assert gadget_linear_predicate(lams, t) == (sum(lams) == t * len(lams))


@settings(max_examples=80, deadline=None)
@given(alphas, alphas)
def test_quadratic_gadget_is_the_product(a1, a2):
    assert gadget_quadratic_predicate(a1, a2) == (a1 * a2 == 1)
