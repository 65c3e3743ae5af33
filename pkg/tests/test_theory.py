from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddenoise import theory
from ddenoise.spectral import Regime
from ddenoise.theory import OutOfScopeError, ProblemConfig

D, N_TST = 1000, 1000


def cfg(c: float, mu: float = 1.0, d: int = D, s2: float | None = None, n_tst: int = N_TST):
    n = round(d / c)
    return ProblemConfig(d=d, n_trn=n, n_tst=n_tst, sigma_trn=math.sqrt(n if s2 is None else s2),
                         sigma_tst=math.sqrt(n_tst), mu=mu)


def mp_derivative(c, mu, d, h="1e-20", dps=80):
    with mpmath.workdps(dps):
        h = mpmath.mpf(h)
        x = mpmath.mpf(c)
        return (mp_risk(x + h, mu, d, dps) - mp_risk(x - h, mu, d, dps)) / (2 * h)


def mp_risk(c, mu, d, dps=60):
    """Risk with sigma_trn^2 = d/c in plain high precision arithmetic (no rewrites)."""
    with mpmath.workdps(dps):
        c, mu, d = mpmath.mpf(c), mpmath.mpf(mu), mpmath.mpf(d)
        s = d / c
        t = mpmath.sqrt((1 - c + mu**2 * c) ** 2 + 4 * mu**2 * c**2)
        tau = 1 + s / 2 * (1 + c + mu**2 * c - t)
        x = (1 + c + mu**2 * c) / t - 1
        return (1 + c * s * (s + 1) / (2 * d) * x) / tau**2


class TestConfig:
    def test_derived(self):
        c = cfg(0.5)
        assert c.c == 0.5 and c.n_trn == 2000 and c.regime is Regime.UNDER
        assert cfg(2.0).regime is Regime.OVER

    @pytest.mark.parametrize("bad", [dict(d=0), dict(n_trn=-1), dict(n_tst=0), dict(mu=-1.0),
                                     dict(sigma_trn=math.nan), dict(seed=-1), dict(seed=2**64)])
    def test_invalid(self, bad):
        base = dict(d=10, n_trn=20, n_tst=5, sigma_trn=1.0, sigma_tst=1.0, mu=1.0, seed=0)
        base.update(bad)
        with pytest.raises(ValueError):
            ProblemConfig(**base)


class TestDiscriminant:
    def test_values(self):
        assert theory.discriminant_t(1.0, 1.0) == pytest.approx(math.sqrt(5), rel=1e-15)
        assert theory.discriminant_t(0.0, 3.0) == 1.0
        assert theory.discriminant_t(0.5, 1.0) == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_over_variant(self):
        c, mu = 3.0, 0.7
        expect = math.sqrt((-1 + c + mu * mu * c) ** 2 + 4 * mu * mu * c)
        assert theory.discriminant_t(c, mu) == pytest.approx(expect, rel=1e-15)


class TestTau:
    def test_no_signal(self):
        assert theory.tau_inverse(0.5, 1.0, 0.0) == 1.0

    def test_values(self):
        assert theory.tau_inverse(0.5, 1.0, math.sqrt(2000)) == pytest.approx(1.7043e-3, rel=1e-4)
        assert theory.tau_at(0.5, 1.0, 2000) == pytest.approx(586.79, abs=5e-3)
        assert theory.tau_at(1.0, 1.0, 1000) == pytest.approx(382.97, abs=5e-3)

    @given(st.floats(1e-3, 10), st.floats(0, 10), st.floats(0, 1e4))
    def test_range(self, c, mu, s):
        ti = theory.tau_inverse(c, mu, s)
        assert 0 < ti <= 1


class TestRisk:
    def test_no_signal_is_one(self):
        assert theory.risk(cfg(0.5, s2=0.0)) == pytest.approx(1.0, rel=1e-15)

    def test_fixed_values(self):
        r_half = theory.risk(cfg(0.5))
        r_one = theory.risk(cfg(1.0))
        assert r_half == pytest.approx(1.207e-3, rel=5e-4)
        assert r_one == pytest.approx(1.173e-3, rel=5e-4)
        assert r_one < r_half

    @given(st.floats(1e-3, 5.0), st.floats(0.0, 5.0), st.floats(0.0, 1e5))
    def test_floor(self, c, mu, s2):
        if mu == 0 and abs(c - 1) < 1e-6:
            return
        r = theory.risk_at(c, mu, s2, D, 1000.0, N_TST)
        floor = theory.tau_inverse(c, mu, math.sqrt(s2)) ** 2 * 1000.0 / N_TST
        assert r >= floor * (1 - 1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            theory.risk_at(0.5, 1.0, 1.0, 0, 1.0, 1)
        with pytest.raises(ValueError):
            theory.risk_at(0.5, 1.0, 1.0, 10, 1.0, 0)

    @pytest.mark.parametrize("mu", [0.1, 1.0, 2.0])
    def test_branch_continuity(self, mu):
        for f in (lambda r: theory.risk_at(1.0, mu, 1000.0, D, 1000.0, N_TST, r),
                  lambda r: theory.w_norm_at(1.0, mu, 1000.0, r)):
            u, o = f(Regime.UNDER), f(Regime.OVER)
            assert abs(u - o) <= 1e-9 * abs(u)

    def test_against_high_precision(self):
        for c in (1e-3, 0.3, 0.5, 0.9):
            assert theory.risk_at(c, 1.0, D / c, D, 1000.0, N_TST) == pytest.approx(
                float(mp_risk(c, 1.0, D)), rel=1e-12)


class TestTrainingError:
    def test_zero_signal(self):
        assert theory.training_error(cfg(0.5, s2=0.0)) == 0.0

    def test_printed_coefficient_value(self):
        assert theory.training_t2_displayed(0.5, 1.0) == pytest.approx(0.41421, abs=1e-5)
        assert theory.training_t2(0.5, 1.0) == pytest.approx(0.41421 / 4, abs=1e-5)

    def test_printed_total(self):
        assert theory.training_error(cfg(0.5), displayed=True) == pytest.approx(4.816, rel=1e-3)

    def test_corrected_total(self):
        # Matches 100-trial simulation (1.2095 +- 0.0044) at this configuration.
        assert theory.training_error(cfg(0.5)) == pytest.approx(1.2065, abs=1e-4)

    def test_sigma4_coefficient_is_t_squared_times_ratio2(self):
        from ddenoise.spectral import factor_moments, scale_moments
        for c, mu in ((0.5, 1.0), (0.2, 0.5), (0.8, 2.0)):
            t = factor_moments(c, mu).t_norm_sq
            assert theory.training_t2(c, mu) == pytest.approx(t * t * scale_moments(c, mu).ratio2,
                                                              rel=1e-12)

    def test_per_sample(self):
        c = cfg(0.5)
        assert theory.training_error_per_sample(c) == pytest.approx(theory.training_error(c) / 2000)

    @pytest.mark.parametrize("c", [1.0, 1.5, 3.0])
    def test_out_of_scope(self, c):
        with pytest.raises(OutOfScopeError):
            theory.training_error(cfg(c))
        assert theory.evaluate(cfg(c)).training_error is None


class TestWNorm:
    def test_values(self):
        assert theory.w_norm_theory(cfg(0.5, s2=0.0)) == 0.0
        assert theory.w_norm_theory(cfg(0.5)) == pytest.approx(1.204, rel=1e-3)
        assert theory.w_norm_at(1e-9, 1.0, 100.0) < 1e-6

    def test_evaluate_bundle(self):
        r = theory.evaluate(cfg(0.5))
        assert r.risk >= 0 and r.w_norm_sq >= 0 and r.tau >= 1
        assert r.discriminant_t == pytest.approx(math.sqrt(2))


class TestDerivative:
    def test_small_c_matches_high_precision(self):
        est = theory.risk_derivative_at(1e-4, 1.0, D, 1000.0, N_TST)
        ref = mp_derivative("1e-4", 1.0, D)
        assert est.value == pytest.approx(float(ref), rel=1e-7)

    def test_small_c_limit_is_one_over_d_plus_one(self):
        for mu in (0.5, 1.0, 2.0):
            ref = mp_derivative("1e-12", mu, D, h="1e-30", dps=100)
            assert float(ref) == pytest.approx(1 / (D + 1), rel=1e-6)

    def test_negative_near_one(self):
        assert theory.risk_derivative_c(cfg(0.999)) < 0

    def test_richardson_consistency(self):
        est = theory.risk_derivative_at(0.3, 1.0, D, 1000.0, N_TST)
        assert est.rel_change < 1e-4

    def test_step_is_shrunk_inside_interval(self):
        est = theory.risk_derivative_at(1e-4, 1.0, D, 1000.0, N_TST, step=0.5)
        assert est.step <= 0.5e-4

    def test_fixed_sigma(self):
        c = cfg(0.5)
        h = 1e-5
        fd = (theory.risk_at(0.5 + h, 1.0, 2000.0, D, 1000.0, N_TST)
              - theory.risk_at(0.5 - h, 1.0, 2000.0, D, 1000.0, N_TST)) / (2 * h)
        assert theory.risk_derivative_c(c, bind_sigma=False) == pytest.approx(fd, rel=1e-5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            theory.risk_derivative_at(1.2, 1.0, D, 1.0, 1)
        with pytest.raises(ValueError):
            theory.risk_derivative_at(0.5, 1.0, D, 1.0, 1, step=-1.0)


def test_peak_location_estimate():
    assert theory.peak_location_estimate(1.0) == 0.5
    assert theory.peak_location_estimate(0.0) == 1.0
    assert theory.peak_location_estimate(2.0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        theory.peak_location_estimate(-1.0)


class TestPMu:
    def test_zero(self):
        assert theory.p_mu(0.0) == 0.0

    def test_one(self):
        assert theory.p_mu(1.0) == pytest.approx(800 * math.sqrt(5) - 1800, abs=1e-10)

    def test_precision_large_mu(self):
        a = theory.p_mu_mp("50", dps=60)
        b = theory.p_mu_mp("50", dps=200)
        assert float(a) == pytest.approx(float(b), rel=1e-12)
        assert a < 0

    def test_negative_on_coarse_grid(self):
        assert all(theory.p_mu(float(m)) < 0 for m in np.linspace(0.01, 100, 500))


class TestOptimalSigma:
    args = (0.5, 1.0, D, N_TST, math.sqrt(1000.0))

    def test_stationary(self):
        s = theory.optimal_sigma_sq(*self.args)
        c, mu, d, nt, st_ = self.args
        f = lambda x: theory.risk_at(c, mu, x, d, st_ * st_, nt)
        h = 1e-3 * s
        grad = (f(s + h) - f(s - h)) / (2 * h)
        assert abs(grad) * s / f(s) <= 1e-6

    def test_bracketing(self):
        s = theory.optimal_sigma_sq(*self.args)
        c, mu, d, nt, st_ = self.args
        f = lambda x: theory.risk_at(c, mu, x, d, st_ * st_, nt)
        assert f(s) <= f(0.5 * s) and f(s) <= f(2 * s)

    def test_matches_scan(self):
        grid = 40000.0 * np.arange(1, 10001) / 10000
        c, mu, d, nt, st_ = self.args
        vals = [theory.risk_at(c, mu, float(x), d, st_ * st_, nt) for x in grid]
        scan = grid[int(np.argmin(vals))]
        assert abs(theory.optimal_sigma_sq(*self.args) - scan) <= grid[1] - grid[0]

    def test_printed_form_is_not_stationary(self):
        printed = theory.optimal_sigma_sq_displayed(*self.args)
        assert abs(printed - theory.optimal_sigma_sq(*self.args)) > 1000

    def test_large_mu_trend(self):
        ratios = [theory.optimal_sigma_sq(0.5, mu, D, N_TST, math.sqrt(1000)) / (D * mu * mu)
                  for mu in (5.0, 10.0, 50.0)]
        assert abs(ratios[-1] - 1) < abs(ratios[0] - 1)
        assert ratios[-1] == pytest.approx(1.0, abs=0.01)

    def test_no_interior(self):
        assert theory.optimal_sigma_sq(0.5, 1.0, D, N_TST, 1e-9) is None

    def test_scope(self):
        with pytest.raises(OutOfScopeError):
            theory.optimal_sigma_sq(1.5, 1.0, D, N_TST, 1.0)


class TestBaseline:
    def test_values(self):
        assert theory.baseline_regression_risk(0.5) == 1.0
        assert theory.baseline_regression_risk(2.0) == 1.5
        assert theory.baseline_regression_risk(1e-9) == pytest.approx(0.0, abs=1e-8)
        assert theory.baseline_regression_risk(1.0) == math.inf

    def test_moments(self):
        assert theory.baseline_beta_moments(0.5) == (2.0, 1.0)
        assert theory.baseline_beta_moments(2.0) == (1.5, 0.5)
        n, i = theory.baseline_beta_moments(1e-9)
        assert n == pytest.approx(1.0) and i == 1.0

    @given(st.floats(1e-3, 20.0).filter(lambda c: abs(c - 1) > 1e-3))
    def test_excess_identity(self, c):
        n, i = theory.baseline_beta_moments(c)
        assert n - 2 * i + 1 == pytest.approx(theory.baseline_regression_risk(c), rel=1e-9)

    def test_invalid(self):
        with pytest.raises(ValueError):
            theory.baseline_regression_risk(-1.0)
