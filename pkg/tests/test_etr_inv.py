import math
from fractions import Fraction as F
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from npp_forge.etr_inv import (
    Add, EtrInvSystem, Inv, InvFormatError, check_inv_assignment, format_inv_system, parse_inv_system,
    reduce_poly_to_inv,
)
from npp_forge.polynomial import Polynomial, PolySystem, apply_map, evaluate, parse_system
from npp_forge.solvers import SolveConfig, solve_inv_system

LOW, HIGH = F(1, 2), F(2)


def _roundtrip_exact(text, sample):
    system = parse_system(text)
    inv, wit = reduce_poly_to_inv(system)
    image = apply_map(wit.forward, sample)
    ok, idx = check_inv_assignment(inv, image)
    back = apply_map(wit.backward, image)
    return inv, wit, ok, idx, back


def test_x_squared_minus_one_pins_one():
    inv, wit, ok, _, back = _roundtrip_exact("bound 2\nx^2 - 1 = 0", {"x": 1})
    assert Inv("one", "one") in inv.constraints
    assert ok and back == {"x": 1}
    _, _, ok, _, back = _roundtrip_exact("bound 2\nx^2 - 1 = 0", {"x": -1})
    assert ok and back == {"x": -1}


def test_empty_system():
    inv, wit = reduce_poly_to_inv(parse_system("bound 1"))
    assert inv.variables == [] and inv.constraints == []
    assert apply_map(wit.forward, {}) == {}
    assert apply_map(wit.backward, {}) == {}


def test_sqrt_two_roots_satisfy_within_tolerance():
    inv, wit = reduce_poly_to_inv(parse_system("bound 2\nx^2 - 2 = 0"))
    for r in (math.sqrt(2), -math.sqrt(2)):
        image = apply_map(wit.forward, {"x": r})
        assert check_inv_assignment(inv, image, tol=1e-9)[0]
        assert abs(apply_map(wit.backward, image)["x"] - r) <= 1e-12
    bad = apply_map(wit.forward, {"x": 1.4})
    assert not check_inv_assignment(inv, bad, tol=1e-9)[0]


def test_solver_recovers_unit_roots():
    inv, wit = reduce_poly_to_inv(parse_system("bound 2\nx^2 - 1 = 0"))
    res = solve_inv_system(inv, SolveConfig(tolerance=1e-10))
    xs = sorted(apply_map(wit.backward, {k: F(v) for k, v in s.items()})["x"] for s in res.solutions)
    assert len(xs) == 2
    assert abs(float(xs[0]) + 1) < 1e-8 and abs(float(xs[1]) - 1) < 1e-8


def test_zero_polynomial_dropped_and_constant_contradiction():
    inv, _ = reduce_poly_to_inv(parse_system("bound 1\n0 = 0"))
    assert inv.constraints == []
    inv, wit = reduce_poly_to_inv(parse_system("bound 1\n1 = 0"))
    assert set(inv.constraints) == {Inv("w", "w"), Add("w", "w", "w")}
    assert inv.notes
    assert not check_inv_assignment(inv, {"w": 1})[0]


def test_check_inv_assignment_examples():
    s = EtrInvSystem(["x", "y"], [Inv("x", "y")])
    assert check_inv_assignment(s, {"x": F(1, 2), "y": 2}) == (True, None)
    assert check_inv_assignment(s, {"x": 1, "y": F(101, 100)}) == (False, 0)
    a = EtrInvSystem(["x", "y", "z"], [Add("x", "y", "z")])
    assert check_inv_assignment(a, {"x": F(1, 2), "y": F(1, 2), "z": 1}) == (True, None)
    assert check_inv_assignment(a, {"x": F(1, 4), "y": F(3, 4), "z": 1})[0] is False
    with pytest.raises(KeyError):
        check_inv_assignment(a, {"x": 1})


def test_undeclared_variable_rejected():
    with pytest.raises(ValueError):
        EtrInvSystem(["x"], [Inv("x", "y")])


def test_text_format_roundtrip_and_errors():
    s = EtrInvSystem(["a", "b", "c"], [Add("a", "b", "c"), Inv("a", "c")])
    text = format_inv_system(s)
    back = parse_inv_system(text)
    assert back.variables == s.variables and back.constraints == s.constraints
    with pytest.raises(InvFormatError):
        parse_inv_system("var a\nmul a a a\n")
    with pytest.raises(InvFormatError):
        parse_inv_system("var a\nadd a a\n")


def test_torus_reduction_is_sound_at_outer_equator():
    inv, wit, ok, idx, back = _roundtrip_exact(
        "bound 12\n(x^2+y^2+z^2+99)^2 - 400*(x^2+y^2) = 0", {"x": 11, "y": 0, "z": 0})
    assert ok, idx
    assert back == {"x": 11, "y": 0, "z": 0}


# --- properties on random systems with a planted rational root --------------------

coeffs = st.integers(-3, 3)
root_coord = st.fractions(min_value=-2, max_value=2, max_denominator=4)


@st.composite
def planted(draw):
    """A system with integer coefficients that vanishes at a chosen rational point."""
    nvars = draw(st.integers(1, 2))
    names = ("x", "y")[:nvars]
    root = {v: draw(root_coord) for v in names}
    polys = []
    for _ in range(draw(st.integers(1, 2))):
        p = Polynomial.constant(0, names)
        for v in names:
            p = p + draw(coeffs) * Polynomial.var(v, names) ** draw(st.integers(1, 2))
        if nvars == 2 and draw(st.booleans()):
            p = p + draw(coeffs) * Polynomial.var("x", names) * Polynomial.var("y", names)
        val = p.evaluate([root[v] for v in names])
        p = val.denominator * p - val.numerator  # integer coefficients, vanishes at the root
        polys.append(p)
    return PolySystem(polys, F(2), names), root


@settings(max_examples=40, deadline=None)
@given(planted())
def test_forward_image_of_root_satisfies_and_inverts(case):
    system, root = case
    assert all(v == 0 for v in evaluate(system, root))
    inv, wit = reduce_poly_to_inv(system)
    src_root = {v: root[v] for v in wit.forward.source}
    image = apply_map(wit.forward, src_root)
    assert check_inv_assignment(inv, image) == (True, None)
    assert apply_map(wit.backward, image) == src_root


@settings(max_examples=25, deadline=None)
@given(planted(), st.data())
def test_forward_values_stay_inside_recorded_intervals(case, data):
    system, _ = case
    inv, wit = reduce_poly_to_inv(system)
    names = wit.forward.source
    L = system.bound
    corners = [dict(zip(names, c)) for c in product((-L, L), repeat=len(names))]
    extra = data.draw(st.lists(st.tuples(*[st.fractions(min_value=-L, max_value=L, max_denominator=7)] * len(names)),
                               max_size=4))
    for pt in corners + [dict(zip(names, e)) for e in extra]:
        image = apply_map(wit.forward, pt)
        for v, val in image.items():
            lo, hi = wit.intervals[v]
            assert LOW <= lo <= val <= hi <= HIGH, v


@settings(max_examples=25, deadline=None)
@given(planted())
def test_non_root_maps_to_violating_assignment(case):
    system, root = case
    inv, wit = reduce_poly_to_inv(system)
    names = wit.forward.source
    if not names:
        return
    moved = {v: root[v] for v in names}
    moved[names[0]] += F(1, 3)
    if all(v == 0 for v in evaluate(system, {**root, **moved})):
        return
    if any(abs(x) > system.bound for x in moved.values()):
        return
    assert not check_inv_assignment(inv, apply_map(wit.forward, moved))[0]


@settings(max_examples=15, deadline=None)
@given(planted())
def test_reduction_is_deterministic(case):
    system, _ = case
    a, _ = reduce_poly_to_inv(system)
    b, _ = reduce_poly_to_inv(system)
    assert format_inv_system(a) == format_inv_system(b)
