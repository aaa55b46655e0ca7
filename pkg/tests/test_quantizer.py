from __future__ import annotations

import json
import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from qformation.geometry import TWO_PI, PolarVec
from qformation.quantizer import (
    QuantizerConfig,
    angle_at,
    diff_r,
    diff_theta,
    index_r,
    index_theta,
    mean_omega_r,
    mean_omega_theta,
    on_grid,
    pc_holds,
    quantize,
    quantize_r,
    quantize_theta,
    radius_at,
    round_half_away,
)

A2M8 = QuantizerConfig(2.0, 8)
W06 = QuantizerConfig(2.0, 8, omega=0.6)
LIT06 = QuantizerConfig(2.0, 8, omega=0.6, angle_mean="literal")

radii = st.floats(1e-6, 1e6)
angles = st.floats(0.0, TWO_PI, exclude_max=True)
configs = st.builds(QuantizerConfig, st.floats(1.05, 10.0), st.integers(2, 64),
                    st.floats(0.51, 0.74))


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(a=1.0, M=8), dict(a=0.5, M=8), dict(a=math.inf, M=8),
        dict(a=2.0, M=1), dict(a=2.0, M=2.5), dict(a=2.0, M=True),
        dict(a=2.0, M=8, omega=0.5), dict(a=2.0, M=8, omega=0.75),
        dict(a=2.0, M=8, angle_mean="other"),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            QuantizerConfig(**kwargs)

    def test_derived_step_angle(self):
        assert A2M8.theta_b == pytest.approx(math.pi / 4)
        assert A2M8.omega == 0.618

    def test_json_round_trip(self):
        text = A2M8.to_json()
        assert json.loads(text) == {"a": 2.0, "M": 8, "omega": 0.618}
        assert QuantizerConfig.from_json(text) == A2M8
        assert QuantizerConfig.from_dict(LIT06.to_dict()) == LIT06

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError):
            QuantizerConfig.from_dict({"a": 2, "M": 8, "b": 1})


class TestRounding:
    @pytest.mark.parametrize("x, k", [(2.5, 3), (-2.5, -3), (0.5, 1), (-0.5, -1),
                                      (2.4999, 2), (-2.5001, -3), (0.0, 0), (3.0, 3)])
    def test_examples(self, x, k):
        assert round_half_away(x) == k

    @given(st.floats(-1e6, 1e6))
    def test_symmetric(self, x):
        assert round_half_away(-x) == -round_half_away(x)

    @given(st.floats(-1e6, 1e6))
    def test_nearest(self, x):
        assert abs(round_half_away(x) - x) <= 0.5 + 1e-9


class TestRadial:
    @pytest.mark.parametrize("r, k", [(5.0, 2), (8.0, 3), (2 ** 2.5, 3)])
    def test_index_examples(self, r, k):
        assert index_r(A2M8, r) == k

    @pytest.mark.parametrize("a, r, q", [(2.0, 5.0, 4.0), (2.0, 8.0, 8.0), (1.5, 1.0, 1.0)])
    def test_quantize_examples(self, a, r, q):
        assert quantize_r(QuantizerConfig(a, 8), r) == pytest.approx(q, rel=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_rejects_bad_radius(self, bad):
        with pytest.raises(ValueError):
            index_r(A2M8, bad)

    def test_extreme_index_no_overflow(self):
        cfg = QuantizerConfig(10.0, 8)
        assert index_r(cfg, 1e300) == 300
        assert index_r(cfg, 1e-300) == -300

    @given(configs, radii)
    def test_idempotent_and_on_grid(self, cfg, r):
        q = quantize_r(cfg, r)
        assert quantize_r(cfg, q) == pytest.approx(q, rel=1e-12)
        x = math.log(q) / math.log(cfg.a)
        assert abs(x - round(x)) < 1e-9

    @pytest.mark.parametrize("ri, rj, d", [(6.0, 3.0, 2.0), (7.0, 7.0, 1.0), (1.0, 4.0, 0.25)])
    def test_diff_examples(self, ri, rj, d):
        assert diff_r(ri, rj) == d

    def test_mean_examples(self):
        assert mean_omega_r(W06, 4.0, 1.0) == pytest.approx(4.0 ** 0.4, rel=1e-12)
        assert mean_omega_r(W06, 1.0, 4.0) == pytest.approx(4.0 ** 0.6, rel=1e-12)
        assert mean_omega_r(W06, 3.3, 3.3) == pytest.approx(3.3, rel=1e-12)
        assert 4.0 ** 0.4 == pytest.approx(1.7411, abs=1e-4)
        assert 4.0 ** 0.6 == pytest.approx(2.2974, abs=1e-4)


class TestAngular:
    @pytest.mark.parametrize("theta, k", [(3.0, 4), (0.0, 0), (6.2, 0)])
    def test_index_examples(self, theta, k):
        assert index_theta(A2M8, theta) == k

    def test_quantize_examples(self):
        assert quantize_theta(A2M8, 3.0) == pytest.approx(math.pi)
        assert quantize_theta(A2M8, 6.2) == 0.0
        assert quantize_theta(QuantizerConfig(2.0, 2), math.pi) == pytest.approx(math.pi)

    @pytest.mark.parametrize("bad", [-0.1, TWO_PI, math.nan])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            index_theta(A2M8, bad)

    @given(configs, angles)
    def test_idempotent_and_on_grid(self, cfg, theta):
        q = quantize_theta(cfg, theta)
        assert quantize_theta(cfg, q) == q
        k = q / cfg.theta_b
        assert abs(k - round(k)) < 1e-9 and 0 <= round(k) < cfg.M

    def test_diff_examples(self):
        assert diff_theta(0.3, 0.1) == pytest.approx(0.2)
        assert diff_theta(0.1, 0.3) == pytest.approx(TWO_PI - 0.2)
        assert diff_theta(1.7, 1.7) == 0.0

    def test_mean_examples_literal(self):
        assert mean_omega_theta(LIT06, 0.0, 1.0) == pytest.approx(0.6)
        assert mean_omega_theta(LIT06, 2.0, 2.0) == pytest.approx(2.0)
        want = 1.0 + 0.6 * (TWO_PI - 1.0)
        assert mean_omega_theta(LIT06, 1.0, 0.0) == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(4.1699, abs=1e-4)

    def test_mean_signed_takes_short_way(self):
        assert mean_omega_theta(W06, 0.0, 1.0) == pytest.approx(0.6)
        assert mean_omega_theta(W06, 1.0, 0.0) == pytest.approx(0.4)
        # across the seam: from 0.1 toward 6.2 goes backwards through 0
        d = 6.2 - 0.1 - TWO_PI
        assert mean_omega_theta(W06, 0.1, 6.2) == pytest.approx(TWO_PI + 0.1 + 0.6 * d)

    @given(angles, angles)
    def test_mean_signed_moves_at_most_half_turn(self, ti, tj):
        out = mean_omega_theta(W06, ti, tj)
        step = abs(math.remainder(out - ti, TWO_PI))
        assert step <= 0.6 * math.pi + 1e-9

    def test_grid_helpers(self):
        assert angle_at(A2M8, -1) == pytest.approx(7 * math.pi / 4)
        assert radius_at(A2M8, 3) == pytest.approx(8.0)
        assert on_grid(A2M8, PolarVec(4.0, math.pi / 2))
        assert not on_grid(A2M8, PolarVec(5.0, 0.0))
        assert quantize(A2M8, PolarVec(5.0, 3.0)) == PolarVec(quantize_r(A2M8, 5.0), math.pi)


class TestPerceptionContract:
    def test_examples(self):
        assert pc_holds(A2M8, PolarVec(4.0, 0.0), PolarVec(5.0, 0.1))
        assert pc_holds(A2M8, PolarVec(4.0, 0.0), PolarVec(4.0, 0.0))
        assert not pc_holds(A2M8, PolarVec(4.0, 0.0), PolarVec(6.0, 0.0))

    def test_off_grid_truth_rejected(self):
        with pytest.raises(ValueError):
            pc_holds(A2M8, PolarVec(5.0, 0.0), PolarVec(5.0, 0.0))

    @given(configs, st.integers(-30, 30), st.floats(-0.49, 0.49))
    def test_identical_to_linear_bounds(self, cfg, k, u):
        # log r - log(a)/2 <= log r_hat < log r + log(a)/2, away from the tie boundary
        r = radius_at(cfg, k)
        r_hat = math.exp(math.log(r) + u * cfg.log_a)
        inside = (math.log(r) - 0.5 * cfg.log_a <= math.log(r_hat) < math.log(r) + 0.5 * cfg.log_a)
        assert pc_holds(cfg, PolarVec(r, 0.0), PolarVec(r_hat, 0.0)) == inside

    @given(configs, st.integers(-30, 30), st.floats(0.51, 3.0), st.booleans())
    def test_fails_outside_linear_bounds(self, cfg, k, u, up):
        r = radius_at(cfg, k)
        r_hat = math.exp(math.log(r) + (u if up else -u) * cfg.log_a)
        assert not pc_holds(cfg, PolarVec(r, 0.0), PolarVec(r_hat, 0.0))


@given(configs, st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20),
       st.integers(-20, 20))
def test_index_homomorphism(cfg, ki, kj, ki_t, kj_t):
    ri, rj = radius_at(cfg, ki), radius_at(cfg, kj)
    ri_t, rj_t = radius_at(cfg, ki_t), radius_at(cfg, kj_t)
    zi, zj = ki - ki_t, kj - kj_t
    x = cfg.omega * (zj - zi)
    assume(abs(x - math.floor(x) - 0.5) > 1e-6)
    lhs = index_r(cfg, mean_omega_r(cfg, quantize_r(cfg, ri),
                                    diff_r(quantize_r(cfg, rj), diff_r(rj_t, ri_t))))
    assert lhs == ki + round(-cfg.omega * zi + cfg.omega * zj)
