import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from vicinity_shift.core import INF, Uniform, ball_probability, margin
from vicinity_shift.dissim import (
    SLOPE,
    SUP_DEF,
    MeasureCurve,
    RateSpec,
    best_ball_mass,
    bound_curve,
    default_r_grid,
    delta_bcn,
    delta_dm,
    delta_km,
    delta_mc,
    delta_pmw,
    delta_v,
    estimate_exponent,
    measure_curve,
    theoretical_rate,
    vicinity_ball,
    vicinity_distance,
    vicinity_radius,
    write_curves_csv,
)
from vicinity_shift.scenarios import get_scenario, scenario_names

from conftest import default_curves, same_instance, with_c_alpha

UNIT = Uniform(-1.0, 1.0)


def uniform_self_pmw(r):
    """Closed form of the PMW integral for P = Q = U[-1, 1] when r <= 1.

    Interior points see a ball of width 2r, the last r near each end a
    truncated one: 2(1 - r)/(2r) + 2 log 2.
    """
    return (1.0 - r) / r + 2.0 * math.log(2.0)


class TestVicinityGeometry:
    def test_example_radius(self, example):
        inst = example.instance
        root = brentq(lambda t: 2 * inst.c_alpha * t**inst.alpha - margin(inst, 1.0), 0.0, 2.0, xtol=1e-15)
        assert vicinity_radius(inst, 1.0) == pytest.approx(root, abs=1e-12)
        assert vicinity_ball(inst, 1.0).radius == pytest.approx(0.5)

    def test_zero_margin_radius(self, example, half_tau1):
        assert vicinity_radius(example.instance, 0.0) == 0.0
        assert vicinity_radius(half_tau1.instance, 0.0) == 0.0

    def test_power_radius_with_unit_constant(self, half_tau1):
        inst = with_c_alpha(half_tau1.instance, 1.0)
        root = brentq(lambda t: 2.0 * t**0.5 - margin(inst, 0.64), 0.0, 1.0, xtol=1e-15)
        assert vicinity_radius(inst, 0.64) == pytest.approx(0.04, abs=1e-12)
        assert root == pytest.approx(0.04, abs=1e-12)

    def test_example_distance_against_grid(self, example):
        inst = example.instance
        ball = vicinity_ball(inst, 1.0)
        grid = np.linspace(ball.closure.lo, ball.closure.hi, 100001)
        assert np.min(np.abs(grid - 0.6)) < 1e-5
        assert vicinity_distance(inst, 0.6, 1.0) == 0.0

    def test_distance_to_self(self, half_tau1):
        assert vicinity_distance(half_tau1.instance, 0.3, 0.3) == 0.0

    def test_distance_at_boundary(self, example):
        assert vicinity_distance(example.instance, 0.7, 0.0) == pytest.approx(0.7)

    @given(z=st.floats(-1, 1), x=st.floats(-1, 1), name=st.sampled_from(["example", "exp-a0.25-t1"]))
    def test_distance_never_exceeds_plain(self, z, x, name):
        inst = get_scenario(name).instance
        d = vicinity_distance(inst, z, x)
        assert 0.0 <= d <= abs(z - x)
        if vicinity_radius(inst, x) == 0.0:
            assert d == abs(z - x)

    def test_ball_contains_center(self, example):
        ball = vicinity_ball(example.instance, 0.0)
        assert ball.contains(0.0) and not ball.contains(1e-9)


class TestDeltaPmw:
    def test_example_gap_is_infinite(self, example):
        inst = example.instance
        assert delta_pmw(inst.p_x, inst.q_x, 0.05) == INF

    def test_full_balls(self):
        assert delta_pmw(UNIT, UNIT, 2.0) == pytest.approx(1.0, rel=1e-12)

    def test_uniform_closed_form_and_monte_carlo(self):
        quad_value = delta_pmw(UNIT, UNIT, 0.1)
        assert quad_value == pytest.approx(uniform_self_pmw(0.1), rel=1e-9)
        mc = delta_mc(same_instance(), 0.1, "PMW", 10**6, 17)
        assert abs(mc.value - quad_value) <= 3 * mc.stderr

    @pytest.mark.parametrize("r", [0.02, 0.3, 0.77, 1.0])
    def test_uniform_closed_form(self, r):
        assert delta_pmw(UNIT, UNIT, r) == pytest.approx(uniform_self_pmw(r), rel=1e-9)

    def test_touching_support_is_finite(self):
        # ball mass vanishes only at a single boundary point, not on an interval
        p = Uniform(-1.0, 0.0)
        q = Uniform(-1.0, 0.0)
        assert math.isfinite(delta_pmw(p, q, 0.1))

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            delta_pmw(UNIT, UNIT, 0.0)


class TestDeltaV:
    def test_example_finite(self, example):
        assert math.isfinite(delta_v(example.instance, 0.05))

    @pytest.mark.parametrize("r", [0.01, 0.05, 0.1])
    def test_example_inner_sup_at_edge(self, example, r):
        inst = example.instance
        got = best_ball_mass(inst.p_x, [1.0], [vicinity_radius(inst, 1.0)], r, inst.ambient)[0]
        # brute-force grid over the closed vicinity [0.5, 1.5] clipped to the ambient interval
        grid = np.linspace(0.5, 1.0, 20001)
        oracle = np.max(ball_probability(inst.p_x, grid, r))
        assert got == pytest.approx(8 * r / 7, rel=1e-12)
        assert oracle == pytest.approx(8 * r / 7, rel=1e-12)

    def test_example_constant_integrand(self, example):
        # every x has a vicinity reaching a full interior ball, so the integrand is 7 / (8 r)
        r = 0.05
        assert delta_v(example.instance, r) == pytest.approx(7 / (8 * r), rel=1e-9)

    def test_same_marginals_full_ball(self):
        assert delta_v(same_instance(), 2.0) == pytest.approx(1.0, rel=1e-12)

    def test_self_measure_bounded_by_pmw(self, half_tau1):
        inst = half_tau1.instance
        for r in (0.01, 0.1):
            assert delta_v(inst, r, p=inst.q_x) <= delta_pmw(inst.q_x, inst.q_x, r) * (1 + 1e-12)

    def test_monte_carlo_power_instance(self, half_tau1):
        inst = half_tau1.instance
        quad_value = delta_v(inst, 0.1)
        mc = delta_mc(inst, 0.1, "V", 10**6, 23)
        assert abs(mc.value - quad_value) <= 3 * mc.stderr


class TestOtherMeasures:
    def test_km_example_infinite(self, example):
        inst = example.instance
        assert delta_km(inst.p_x, inst.q_x, 0.05) == INF

    @pytest.mark.parametrize("r", [0.05, 0.5, 2.0])
    def test_km_same_marginals(self, r):
        assert delta_km(UNIT, UNIT, r) == pytest.approx(1.0, rel=1e-12)

    def test_km_against_fine_grid(self, half_tau1):
        inst = half_tau1.instance
        r = 0.5
        grid = np.linspace(-1.0, 1.0, 10**5 + 1)
        oracle = np.max(ball_probability(inst.q_x, grid, r) / ball_probability(inst.p_x, grid, r))
        got = delta_km(inst.p_x, inst.q_x, r)
        assert math.isfinite(got)
        assert got == pytest.approx(oracle, rel=1e-6)
        assert got >= oracle * (1 - 1e-12)

    @pytest.mark.parametrize("r,expected", [(0.1, 20.0), (2.0, 1.0), (1.0, 2.0)])
    def test_dm_uniform(self, r, expected):
        grid = np.linspace(-1.0, 1.0, 200001)
        assert np.max(1.0 / ball_probability(UNIT, grid, r)) == pytest.approx(expected, rel=1e-12)
        assert delta_dm(UNIT, r) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("r,expected", [(1.0, 1), (0.25, 4), (0.3, 4)])
    def test_bcn_uniform(self, r, expected):
        assert delta_bcn(UNIT, r) == expected
        # constructive cover: centers at -1 + r, -1 + 3r, ... reach past 1 with exactly that many balls
        centers = -1.0 + r * (2 * np.arange(expected) + 1)
        assert centers[-1] + r >= 1.0 - 1e-12
        assert expected == 1 or centers[-2] + r < 1.0


class TestMonteCarlo:
    def test_full_balls_exact(self):
        mc = delta_mc(same_instance(), 2.0, "PMW", 1000, 0)
        assert mc.value == 1.0 and mc.stderr == 0.0

    def test_example_gap_detected(self, example):
        assert delta_mc(example.instance, 0.05, "PMW", 10**4, 5).value == INF

    def test_rejects_unknown_measure(self, example):
        with pytest.raises(ValueError):
            delta_mc(example.instance, 0.1, "KM", 10, 0)


class TestCurves:
    def test_constant(self):
        c = measure_curve(lambda r: 1.0, [0.1, 0.2, 0.5])
        assert list(c.values) == [1.0, 1.0, 1.0]

    def test_dm_curve(self):
        c = measure_curve(lambda r: delta_dm(UNIT, r), [0.1, 0.2, 0.4])
        assert c.values == pytest.approx([20.0, 10.0, 5.0], rel=1e-12)

    def test_example_pmw_below_gap(self, example):
        inst = example.instance
        c = measure_curve(lambda r: delta_pmw(inst.p_x, inst.q_x, r), [0.01, 0.05, 0.1, 0.12])
        assert np.all(np.isinf(c.values))

    def test_default_grid(self):
        r = default_r_grid(2.0)
        assert len(r) == 65 and r[-1] == 2.0 and r[0] == pytest.approx(2.0 / 2**16)
        assert np.all(np.diff(r) > 0)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            MeasureCurve(np.array([0.2, 0.1]), np.array([1.0, 2.0]))

    def test_csv_writes_inf(self, tmp_path):
        path = tmp_path / "c.csv"
        write_curves_csv([MeasureCurve(np.array([0.1, 0.2]), np.array([INF, 3.0]), "m")], path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["r", "measure_name", "value"]
        assert rows[1] == ["0.1", "m", "inf"] and rows[2][2] == "3.0"


class TestExponents:
    def test_synthetic_power_law(self):
        r = default_r_grid(2.0, 10)
        c = MeasureCurve(r, 3.0 * (2.0 / r) ** 1.5)
        assert estimate_exponent(c, 2.0, SLOPE) == pytest.approx(1.5, abs=1e-6)

    @given(tau=st.floats(0.1, 6.0), scale=st.floats(0.01, 100.0))
    def test_slope_recovers_any_power(self, tau, scale):
        r = default_r_grid(2.0, 8, 2)
        c = MeasureCurve(r, scale * (2.0 / r) ** tau)
        assert estimate_exponent(c, 2.0, SLOPE) == pytest.approx(tau, abs=1e-6)

    def test_sup_definition(self):
        r = default_r_grid(2.0, 10)
        c = MeasureCurve(r, 3.0 * (2.0 / r) ** 1.5)
        # sup over r of 3 (r / d)^(t - 1.5) sits at the smallest radius
        expected = 1.5 - math.log(10 / 3) / math.log(2.0 / r[0])
        got = estimate_exponent(c, 2.0, SUP_DEF, c_cap=10.0)
        assert expected <= got <= expected + 1e-3 + 1e-12

    def test_infinite_small_radius(self):
        c = MeasureCurve(np.array([0.1, 1.0, 2.0]), np.array([INF, 2.0, 1.0]))
        assert estimate_exponent(c, 2.0, SLOPE) == INF
        assert estimate_exponent(c, 2.0, SUP_DEF) == INF

    def test_example_vicinity_exponent(self):
        c = default_curves("example")
        assert estimate_exponent(c["delta_v"], 2.0) == pytest.approx(1.0, abs=0.15)
        assert estimate_exponent(c["delta_pmw"], 2.0) == INF

    @pytest.mark.parametrize("name", scenario_names())
    def test_exponent_ordering(self, name):
        c = default_curves(name)
        e = {k: estimate_exponent(v, 2.0) for k, v in c.items()}
        assert e["delta_v"] <= e["delta_pmw"] + 0.1
        assert e["delta_v_self"] <= e["delta_pmw_self"] + 0.1
        assert e["delta_pmw_self"] <= min(e["delta_dm"], e["delta_bcn"]) + 0.1

    @pytest.mark.parametrize("name", scenario_names())
    def test_curves_nonincreasing(self, name):
        for curve in default_curves(name).values():
            assert curve.is_nonincreasing(1e-6), curve.name

    @pytest.mark.parametrize("name", scenario_names())
    @given(data=st.data())
    def test_pointwise_inequalities(self, name, data):
        inst = get_scenario(name).instance
        r = data.draw(st.floats(1e-3, 2.0))
        q = inst.q_x
        assert delta_v(inst, r, 1024) <= delta_pmw(inst.p_x, q, r, 1024) * (1 + 1e-12)
        self_pmw = delta_pmw(q, q, r, 1024)
        assert self_pmw <= delta_dm(q, r) * (1 + 1e-12)
        assert self_pmw <= delta_bcn(q, r / 2) * (1 + 1e-12)


class TestRates:
    def test_half_alpha(self):
        rate = theoretical_rate(0.5, 2.0, 1.0, 1.0)
        assert rate.exp_p == pytest.approx(0.5) and not rate.log_factor

    def test_example_rate(self):
        rate = theoretical_rate(1.0, 1.0, 1.0, 1.0)
        assert rate.exp_p == pytest.approx(0.5) and rate.log_factor

    def test_quarter_alpha(self):
        assert theoretical_rate(0.25, 4.0, 2.0, 1.0).exp_p == pytest.approx(5 / 14)

    def test_infinite_exponent(self):
        assert theoretical_rate(0.5, 2.0, INF, 1.0).exp_p == 0.0

    def test_flat_guideline(self):
        curve = bound_curve(RateSpec(0.0, 0.5, False), [256, 1024, 65536], 10)
        assert len({v for _, v in curve}) == 1

    def test_anchored(self):
        curve = dict(bound_curve(RateSpec(0.5, 0.5, False), [256, 1024], 10, anchor=(256, 0.08)))
        assert curve[256] == 0.08
        assert curve[1024] == pytest.approx(0.08 * (16 + 10**0.5) / (32 + 10**0.5), rel=1e-12)

    def test_log_factor(self):
        with_log = dict(bound_curve(RateSpec(0.5, 0.5, True), [256, 1024], 10))
        assert with_log[1024] == pytest.approx(math.log(1034) / (32 + 10**0.5), rel=1e-12)

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            theoretical_rate(0.0, 1.0, 1.0, 1.0)
