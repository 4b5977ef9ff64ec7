import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from logdiff import Grid1D, RunConfig, evolve
from logdiff.diagnostics import (SmoothingReport, _fit_constant, _tail_integral, _worst_ratio, chain_rule_defect,
                                 check_gradient_tail, check_h12_bound, check_lp_linf_smoothing,
                                 check_lx_l2_smoothing, check_ut_energy, check_x_linf_smoothing, decay_exponent,
                                 decay_window, h12_norm, lp_linf_bound, time_derivative_energy,
                                 wrap_influence)

from conftest import gaussian

CHECKS = [
    lambda runs, cal: check_lp_linf_smoothing(runs, 2.0, cal),
    lambda runs, cal: check_lp_linf_smoothing(runs, 4.0, cal),
    check_lx_l2_smoothing,
    check_h12_bound,
    check_gradient_tail,
    check_ut_energy,
]


def small_run(amplitude, t_end=1.0):
    g = Grid1D(128, 15.0)
    return evolve(RunConfig(g, gaussian(g, amplitude), t_end, 0.05))


class TestFitting:
    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=20), st.floats(0.1, 10.0))
    def test_fitted_constant_is_tight(self, lhs, s):
        lhs = np.array(lhs)
        scale = np.full(lhs.size, s)
        C = _fit_constant(lhs, np.zeros_like(lhs), scale)
        assert np.all(lhs <= C * scale * (1 + 1e-12))
        assert _worst_ratio(lhs, 0 * lhs, scale, C, 1.0) == pytest.approx(1.0 if C > 0 else 0.0)

    def test_worst_ratio_flags_unbounded_excess(self):
        assert _worst_ratio(np.array([1.0]), np.zeros(1), np.zeros(1), 0.0, 2.0) == math.inf
        assert _worst_ratio(np.array([0.0]), np.zeros(1), np.zeros(1), 0.0, 2.0) == 0.0

    def test_tail_integral(self):
        t = np.linspace(0, 2, 201)
        assert _tail_integral(t, np.ones_like(t)) == pytest.approx(2 - t)

    def test_lp_linf_bound_branches(self):
        assert lp_linf_bound(1.0, 4.0, 2.0) == pytest.approx(16.0)
        assert lp_linf_bound(100.0, 1.0, 2.0) == pytest.approx(0.1)


class TestZeroData:
    def test_every_ratio_vanishes(self):
        zero = small_run(0.0)
        cal = small_run(2.0)
        for check in CHECKS:
            rep = check({"zero": zero}, cal)
            assert rep.ratios["zero"] == 0.0 and rep.passed

    def test_zero_calibration_gives_zero_constant(self):
        rep = check_lp_linf_smoothing({"a": small_run(1.0)}, 2.0, small_run(0.0))
        assert rep.constant == 0.0 and not rep.passed


class TestAmplitudeFamily:
    @pytest.mark.parametrize("i", range(len(CHECKS)))
    def test_calibrated_bound_holds(self, amplitude_family, i):
        cal, runs = amplitude_family
        rep = CHECKS[i](runs, cal)
        assert rep.passed, rep.table()
        assert set(rep.ratios) == set(runs)

    def test_calibration_run_is_not_verified(self, amplitude_family):
        cal, runs = amplitude_family
        rep = check_lp_linf_smoothing(dict(runs), 2.0)
        assert "A5" not in rep.ratios and len(rep.ratios) == 3

    def test_combined_x_linf(self, amplitude_family):
        cal, runs = amplitude_family
        out = check_x_linf_smoothing(runs, cal)
        assert all(out["holds"].values()) and out["constant"] > 0

    def test_u_gradient_tail(self, amplitude_family):
        cal, runs = amplitude_family
        assert check_gradient_tail(runs, cal).extra["u"]["passed"]

    def test_energy_term_constant_free(self, amplitude_family):
        # 2 t E(t) <= L_X(f) makes the first H^{1/2} term hold with constant 1
        cal, runs = amplitude_family
        assert max(check_h12_bound(runs, cal).extra["energy_term"].values()) <= 1.0

    def test_monotone_in_time(self, amplitude_family):
        _, runs = amplitude_family
        for tr in runs.values():
            assert np.all(np.diff(tr.series("linf")) <= 1e-9)
            assert np.all(np.diff(time_derivative_energy(tr)) <= 0)


class TestExponent:
    def test_window_rules(self):
        tr = small_run(30.0, t_end=5.0)
        ia, ib = decay_window(tr)
        m = tr.series("linf")
        assert m[ia] < 0.9 * m[0] <= m[ia - 1]
        assert ib > ia + 2

    def test_window_requires_large_data(self):
        with pytest.raises(ValueError):
            decay_window(small_run(0.5))

    def test_wrap_influence_cuts_window(self):
        def run(n, L):
            g = Grid1D(n, L)
            return evolve(RunConfig(g, gaussian(g, 30.0), 20.0, 0.05, dt_growth=1.05, dt_max=0.5))
        tr, wide = run(64, 8.0), run(128, 16.0)
        d = wrap_influence(tr, wide)
        assert d[0] == 0 and d[-1] > 0.05
        ia, ib = decay_window(tr, wide, influence_tol=0.01)
        assert np.all(d[: ib + 1] <= 0.01) and ib < decay_window(tr)[1]
        s, _, (ta, tb) = decay_exponent(tr, wide=wide)
        assert tb <= tr.times[decay_window(tr)[1]]

    def test_wrap_influence_rejects_mismatch(self):
        a = small_run(30.0, 5.0)
        g = Grid1D(256, 30.0)
        with pytest.raises(ValueError):
            wrap_influence(a, evolve(RunConfig(g, gaussian(g, 30.0), 1.0, 0.05)))
        g = Grid1D(128, 30.0)
        with pytest.raises(ValueError):
            wrap_influence(a, evolve(RunConfig(g, gaussian(g, 30.0), 5.0, 0.05)))

    def test_exponent_ci_brackets_slope(self):
        tr = small_run(30.0, t_end=5.0)
        s, (lo, hi), (ta, tb) = decay_exponent(tr)
        assert lo <= s <= hi and s < 0 and 0 < ta < tb


class TestEnergyPieces:
    def test_chain_rule_on_resolved_field(self):
        g = Grid1D(256, 20.0)
        assert chain_rule_defect(gaussian(g, 5.0, width=2.0)) < 1e-10

    def test_h12_norm_of_constant(self):
        g = Grid1D(64, 4.0)
        c = g.sample(lambda x: 0 * x + 3.0)
        assert h12_norm(c) == pytest.approx(3.0 * math.sqrt(8.0))


class TestReportOutput:
    def test_json_and_table(self):
        rep = check_lp_linf_smoothing({"b": small_run(2.0)}, 2.0, small_run(1.0), exponent_run=small_run(30.0, 5.0))
        d = json.loads(rep.to_json())
        assert d["passed"] == rep.passed and d["ratios"]["b"] == pytest.approx(rep.ratios["b"])
        assert d["exponent"] == pytest.approx(rep.exponent)
        text = rep.table()
        assert "decay exponent" in text and "b" in text

    def test_report_defaults(self):
        rep = SmoothingReport("x", 1.0)
        assert rep.passed and rep.safety == 2.0
