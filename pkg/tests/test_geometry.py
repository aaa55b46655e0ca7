from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qformation.geometry import (
    TWO_PI,
    CartVec,
    DegenerateEdgeError,
    FormationState,
    PolarVec,
    abs_to_rel,
    rel_to_abs,
    signed_angle_diff,
    wrap_angle,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
angles = st.floats(0.0, TWO_PI, exclude_max=True)
polar = st.builds(PolarVec, st.floats(1e-3, 1e3), angles)


@pytest.mark.parametrize("theta, expected", [
    (0.0, 0.0),
    (-0.2, TWO_PI - 0.2),
    (4 * math.pi + 1.0, 1.0),
])
def test_wrap_angle_examples(theta, expected):
    assert wrap_angle(theta) == pytest.approx(expected, abs=1e-12)


def test_wrap_angle_tiny_negative_stays_below_two_pi():
    assert wrap_angle(-1e-18) == 0.0


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_wrap_angle_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        wrap_angle(bad)


@given(finite)
def test_wrap_angle_range_and_idempotent(theta):
    w = wrap_angle(theta)
    assert 0.0 <= w < TWO_PI
    assert wrap_angle(w) == w
    assert math.remainder(w - theta, TWO_PI) == pytest.approx(0.0, abs=1e-9 * max(1.0, abs(theta)))


@pytest.mark.parametrize("a, b, expected", [
    (0.1, 0.1, 0.0),
    (0.1, 6.2, 0.1 - 6.2 + TWO_PI),
    (6.2, 0.1, -(0.1 - 6.2 + TWO_PI)),
])
def test_signed_angle_diff_examples(a, b, expected):
    assert signed_angle_diff(a, b) == pytest.approx(expected, abs=1e-12)


@given(angles, angles)
def test_signed_angle_diff_range_and_antisymmetry(a, b):
    d = signed_angle_diff(a, b)
    assert -math.pi <= d < math.pi
    if abs(abs(d) - math.pi) > 1e-12:
        assert signed_angle_diff(b, a) == pytest.approx(-d, abs=1e-12)


def test_polar_validation():
    with pytest.raises(ValueError):
        PolarVec(0.0, 0.0)
    with pytest.raises(ValueError):
        PolarVec(1.0, TWO_PI)
    with pytest.raises(ValueError):
        PolarVec(1.0, -0.1)
    assert PolarVec.wrapped(1.0, -0.1).theta == pytest.approx(TWO_PI - 0.1)


def test_cart_rejects_non_finite():
    with pytest.raises(ValueError):
        CartVec(math.nan, 0.0)


def test_formation_state_needs_entries():
    with pytest.raises(ValueError):
        FormationState([])
    with pytest.raises(TypeError):
        FormationState([(1.0, 0.0)])


def test_abs_to_rel_examples():
    y = abs_to_rel([CartVec(0, 0), CartVec(1, 0)])
    assert y[0] == PolarVec(1.0, 0.0)
    y = abs_to_rel([CartVec(0, 0), CartVec(0, 2), CartVec(0, 4)])
    for v in y:
        assert v.r == pytest.approx(2.0)
        assert v.theta == pytest.approx(math.pi / 2)
    with pytest.raises(DegenerateEdgeError):
        abs_to_rel([CartVec(0, 0), CartVec(0, 0)])
    with pytest.raises(ValueError):
        abs_to_rel([CartVec(0, 0)])


def test_rel_to_abs_examples():
    q = rel_to_abs(FormationState([PolarVec(1.0, 0.0)]))
    assert q == [CartVec(0, 0), CartVec(1, 0)]
    y = FormationState([PolarVec(2.0, math.pi / 2)] * 2)
    q = rel_to_abs(y, CartVec(5, 5))
    for got, want in zip(q, [(5, 5), (5, 7), (5, 9)]):
        assert (got.x, got.y) == pytest.approx(want, abs=1e-12)


@given(st.lists(polar, min_size=1, max_size=8), finite, finite)
def test_round_trip(rel, cx, cy):
    y = FormationState(rel)
    back = abs_to_rel(rel_to_abs(y, CartVec(cx, cy)))
    for a, b in zip(y, back):
        # reconstruction cancels a large anchor, so scale the tolerance with it
        tol = 1e-12 * max(1.0, abs(cx), abs(cy)) * 10
        assert b.r == pytest.approx(a.r, rel=1e-9, abs=tol)
        assert abs(signed_angle_diff(a.theta, b.theta)) <= max(1e-12, 10 * tol / a.r)


def test_round_trip_hundred_states_tight():
    import numpy as np

    rng = np.random.default_rng(0)
    for _ in range(100):
        y = FormationState(PolarVec(float(r), float(t)) for r, t in
                           zip(rng.uniform(0.5, 20, 6), rng.uniform(0, TWO_PI, 6)))
        back = abs_to_rel(rel_to_abs(y))
        for a, b in zip(y, back):
            assert abs(a.r - b.r) < 1e-12 * 100
            assert abs(signed_angle_diff(a.theta, b.theta)) < 1e-12


@given(st.lists(polar, min_size=1, max_size=6), finite, finite, finite, finite)
def test_translation_invariance(rel, x1, y1, x2, y2):
    y = FormationState(rel)
    q1 = rel_to_abs(y, CartVec(x1, y1))
    q2 = rel_to_abs(y, CartVec(x2, y2))
    for a, b in zip(q1, q2):
        assert b.x - a.x == pytest.approx(x2 - x1, abs=1e-6)
        assert b.y - a.y == pytest.approx(y2 - y1, abs=1e-6)


def test_replace_and_accessors():
    y = FormationState.from_pairs([(1, 0), (2, 1)])
    z = y.replace({1: PolarVec(3.0, 0.5)})
    assert y.radii == [1.0, 2.0]
    assert z.radii == [1.0, 3.0]
    assert z.angles == [0.0, 0.5]
    assert y != z and hash(y) == hash(FormationState.from_pairs([(1, 0), (2, 1)]))
