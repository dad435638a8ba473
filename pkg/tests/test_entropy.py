import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monitored_dots.circuits import CircuitConfig, run_trajectory
from monitored_dots.entropy import (
    renyi2_closed_form,
    renyi_from_spectrum,
    renyi_integer_moment_exact,
    renyi_log_decay_rates,
    renyi_long_time_form,
    renyi_nonfluctuating,
    renyi_series,
    renyi_short_time_prediction,
)
from monitored_dots.numerics import DomainError
from monitored_dots.spectral import purification_time_exact


class TestFromSpectrum:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0, math.inf])
    def test_flat(self, alpha):
        assert renyi_from_spectrum(np.zeros(8), alpha) == pytest.approx(math.log(8))

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_pure(self, alpha):
        assert renyi_from_spectrum(np.array([0.0, -400.0, -500.0]), alpha) == pytest.approx(0.0, abs=1e-12)

    def test_two_level(self):
        # q = (3/4, 1/4) from sigma^2 ratio 3
        ls = np.array([0.5 * math.log(3.0), 0.0])
        assert renyi_from_spectrum(ls, 2.0) == pytest.approx(math.log(1.6))

    def test_von_neumann(self):
        ls = np.array([0.5 * math.log(3.0), 0.0])
        q = np.array([0.75, 0.25])
        assert renyi_from_spectrum(ls, 1.0) == pytest.approx(-np.sum(q * np.log(q)))

    def test_scale_invariant(self):
        ls = np.array([1.0, 0.3, -2.0])
        assert renyi_from_spectrum(ls, 2.0) == pytest.approx(renyi_from_spectrum(ls - 900.0, 2.0))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-20, 20), min_size=1, max_size=12))
    def test_monotone_in_alpha(self, ls):
        ls = np.array(ls)
        vals = [renyi_from_spectrum(ls, a) for a in (0.3, 0.7, 1.0, 1.5, 2.0, 4.0, math.inf)]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))

    def test_bad_alpha(self):
        with pytest.raises(DomainError):
            renyi_from_spectrum(np.zeros(3), 0.0)


class TestClosedForms:
    def test_t1(self):
        assert renyi2_closed_form(8, 1) == pytest.approx(math.log(8))
        assert renyi_integer_moment_exact(8, 1, 2) == pytest.approx(math.log(8))

    def test_arithmetic(self):
        val = -math.log(0.5 * ((9 / 8) ** 8 - (7 / 8) ** 8))
        assert renyi2_closed_form(8, 8) == pytest.approx(val)
        assert val == pytest.approx(-0.1053395, abs=1e-6)

    @pytest.mark.parametrize("m,t", [(8, 2), (8, 5), (64, 10), (256, 3)])
    def test_integer_moment_matches_closed_form(self, m, t):
        assert renyi_integer_moment_exact(m, t, 2) == pytest.approx(renyi2_closed_form(m, t), rel=1e-12)

    def test_short_time_consistency(self):
        exact = renyi2_closed_form(256, 8)
        assert renyi_short_time_prediction(256, 8, 2.0) == pytest.approx(exact, rel=0.1)

    def test_short_time_within(self):
        assert abs(renyi_short_time_prediction(256, 4, 2.0) - renyi2_closed_form(256, 4)) < 0.1

    def test_short_time_doubling(self):
        a = renyi_short_time_prediction(256, 8, 2.0)
        b = renyi_short_time_prediction(256, 16, 2.0)
        assert b - a == pytest.approx(-math.log(2))

    def test_alpha3_positive(self):
        assert 0 < renyi_integer_moment_exact(16, 4, 3) < renyi_integer_moment_exact(16, 4, 2)

    def test_invalid(self):
        with pytest.raises(DomainError):
            renyi_integer_moment_exact(8, 3, 1)
        with pytest.raises(DomainError):
            renyi2_closed_form(0, 3)


class TestLongTime:
    def test_alpha2(self):
        assert renyi_long_time_form(1e-4, 2.0) == pytest.approx(2e-4)

    def test_alpha_half(self):
        assert renyi_long_time_form(1e-4, 0.5) == pytest.approx(0.02)

    def test_alpha1_positive(self):
        assert renyi_long_time_form(1e-4, 1.0) == pytest.approx(-1e-4 * math.log(1e-4))

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_nu_zero(self, alpha):
        assert renyi_long_time_form(0.0, alpha) == 0.0

    def test_decay_rates(self):
        assert renyi_log_decay_rates(8.0, 2.0) == pytest.approx(-1 / 8)
        assert renyi_log_decay_rates(8.0, 0.5) == pytest.approx(-1 / 16)
        assert renyi_log_decay_rates(8.0, 1.0 - 1e-12) == pytest.approx(renyi_log_decay_rates(8.0, 1.0))

    def test_bad_nu(self):
        with pytest.raises(DomainError):
            renyi_long_time_form(1.5, 2.0)


class TestTrajectories:
    def test_nonfluctuating_flat(self):
        assert renyi_nonfluctuating([np.zeros(4), np.zeros(4)], 2.0) == pytest.approx(math.log(4))

    def test_nonfluctuating_alpha1_rejected(self):
        with pytest.raises(DomainError):
            renyi_nonfluctuating([np.zeros(4)], 1.0)

    def test_long_time_slope(self):
        # E[log S^(2)] decays at rate 1/tau_P (Model II, N=64, M=8)
        tau = purification_time_exact(64, 8)
        t_max = int(10 * tau)
        cfg = CircuitConfig(L=6, p=0.5, t_max=t_max, n_traj=150, seed=31, record_every=1, track_born=False)
        recs = [run_trajectory(cfg, i) for i in range(cfg.n_traj)]
        series = renyi_series(recs, 2.0)
        sel = (series.t_grid >= 3 * tau) & (series.t_grid <= t_max)
        slope = np.polyfit(series.t_grid[sel], series.mean_log_S[sel], 1)[0]
        assert slope * tau == pytest.approx(-1.0, abs=0.15)
