"""Moments accountant: closed forms, quadrature, composition, epsilon search."""
import math

import numpy as np
import pytest

from dpmix.accountant import (
    AlphaProfile,
    PrivacyConfig,
    alpha_gaussian,
    alpha_kmeans,
    alpha_sgd,
    alpha_subsampled_gaussian,
    default_j_grid,
    epoch_iterations,
    epsilon_for_delta,
    epsilon_schedule,
    sgd_step_alpha,
    total_alpha_profile,
)

# Monte Carlo oracle for log max(E1, E2) at q=0.01, lam=8, sigma=4,
# computed from 4e7 direct draws per integral (seed 20250814) before the
# quadrature existed.  Standard error of the log is about 3.2e-6.
MC_ALPHA_Q001_L8_S4 = 0.00023191


def _cfg(**kw):
    base = dict(
        sigma_c=4.0,
        sigma_k=40.0,
        sigma_g=1.0,
        q=0.0017,
        t_kmeans=20,
        t_sgd=100,
        delta=1e-5,
    )
    base.update(kw)
    return PrivacyConfig(**base)


class TestGaussianClosedForm:
    def test_default_convention(self):
        assert alpha_gaussian(1, 1.0) == pytest.approx(0.5)
        assert alpha_gaussian(2, 2.0) == pytest.approx(0.375)

    def test_strict_is_exact_log_mgf(self):
        assert alpha_gaussian(1, 1.0, strict=True) == pytest.approx(1.0)
        for lam in (1, 3, 9):
            for sigma in (0.5, 2.0):
                assert alpha_gaussian(lam, sigma, strict=True) == pytest.approx(
                    2 * alpha_gaussian(lam, sigma)
                )

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            alpha_gaussian(1, 0.0)
        with pytest.raises(ValueError):
            alpha_gaussian(0, 1.0)


class TestSubsampledQuadrature:
    def test_q_zero_is_free(self):
        assert alpha_subsampled_gaussian(4, 1.0, 0.0) == 0.0

    def test_q_one_matches_shifted_gaussian_mgf(self):
        # With q = 1 both integrals reduce to the Gaussian log-MGF
        # lam * (lam + 1) / (2 sigma^2); spot value 2 * 3 / 2 = 3.
        assert alpha_subsampled_gaussian(2, 1.0, 1.0) == pytest.approx(3.0, abs=1e-3)
        for sigma in (0.5, 1.0, 2.0, 4.0):
            for lam in range(1, 17):
                want = lam * (lam + 1) / (2 * sigma**2)
                got = alpha_subsampled_gaussian(lam, sigma, 1.0)
                assert got == pytest.approx(want, abs=1e-3)

    def test_matches_monte_carlo_oracle(self):
        got = alpha_subsampled_gaussian(8, 4.0, 0.01)
        assert got == pytest.approx(MC_ALPHA_Q001_L8_S4, abs=2e-3)
        # and within 5 standard errors of the frozen mean
        assert got == pytest.approx(MC_ALPHA_Q001_L8_S4, abs=1.6e-5)

    def test_subsampling_never_hurts(self):
        for lam in (1, 4, 16):
            for sigma in (0.7, 2.0):
                for q in (0.001, 0.1, 0.6):
                    assert alpha_subsampled_gaussian(lam, sigma, q) <= (
                        alpha_subsampled_gaussian(lam, sigma, 1.0) + 1e-12
                    )

    def test_non_negative_and_monotone_in_lam(self):
        vals = [alpha_subsampled_gaussian(lam, 1.0, 0.01) for lam in range(1, 33)]
        assert all(v >= 0 for v in vals)
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_resolution_doubling_is_stable(self):
        # The adaptive rule converges at 1e-8 relative; starting from a
        # twice-finer grid must agree to far better than 1e-6 relative.
        for lam, sigma, q in ((8, 4.0, 0.01), (31.58, 1.0, 0.0017), (640.0, 4.0, 0.0017)):
            a = alpha_subsampled_gaussian(lam, sigma, q, start_intervals=2**12)
            b = alpha_subsampled_gaussian(lam, sigma, q, start_intervals=2**13)
            assert abs(a - b) <= 1e-6 * max(abs(a), 1e-9)

    def test_fractional_lambda_accepted(self):
        lo = alpha_subsampled_gaussian(3.0, 1.0, 0.05)
        mid = alpha_subsampled_gaussian(3.5, 1.0, 0.05)
        hi = alpha_subsampled_gaussian(4.0, 1.0, 0.05)
        assert lo <= mid <= hi

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            alpha_subsampled_gaussian(1, -1.0, 0.5)
        with pytest.raises(ValueError):
            alpha_subsampled_gaussian(1, 1.0, 1.5)


class TestKmeansAlpha:
    def test_zero_iterations(self):
        assert alpha_kmeans(3, _cfg(t_kmeans=0)) == 0.0

    def test_rbf_mode_charges_counts_and_sums_only(self):
        cfg = _cfg(t_kmeans=20, sigma_k=40.0, rbf_mode=True)
        assert alpha_kmeans(2, cfg) == pytest.approx(20 * 6 / 3200)

    def test_full_mode_adds_threshold_selection(self):
        cfg = _cfg(t_kmeans=1, sigma_c=2.0, sigma_k=2.0, rbf_mode=False)
        assert alpha_kmeans(1, cfg) == pytest.approx(2 * (1 / 16 + 1 / 8))

    def test_composition_is_exactly_linear(self):
        one = alpha_kmeans(5, _cfg(t_kmeans=1, rbf_mode=False))
        many = alpha_kmeans(5, _cfg(t_kmeans=17, rbf_mode=False))
        assert many == pytest.approx(17 * one, rel=1e-15)

    def test_strict_doubles_each_term(self):
        for rbf in (True, False):
            base = alpha_kmeans(4, _cfg(rbf_mode=rbf))
            strict = alpha_kmeans(4, _cfg(rbf_mode=rbf, strict_gaussian=True))
            assert strict == pytest.approx(2 * base)


class TestSgdAlpha:
    def test_zero_iterations(self):
        assert alpha_sgd(3, _cfg(t_sgd=0)) == 0.0

    def test_zero_q(self):
        assert alpha_sgd(3, _cfg(q=0.0, t_sgd=50)) == 0.0

    def test_symmetric_singleton_split(self):
        cfg = _cfg(sigma_c=1.5, sigma_g=1.5, q=0.02, t_sgd=7)
        got = alpha_sgd(4, cfg, j_grid=[(0.5, 0.5)])
        want = 7 * alpha_subsampled_gaussian(8.0, 1.5, 0.02)
        assert got == pytest.approx(want, rel=1e-12)

    def test_grid_minimum_never_above_any_member(self):
        cfg = _cfg(t_sgd=1)
        full = sgd_step_alpha(8, cfg)
        for j1, j2 in default_j_grid():
            member = j1 * alpha_subsampled_gaussian(8 / j1, cfg.sigma_c, cfg.q) + (
                j2 * alpha_subsampled_gaussian(8 / j2, cfg.sigma_g, cfg.q)
            )
            assert full <= member + 1e-12

    def test_default_grid_shape(self):
        grid = default_j_grid()
        assert len(grid) == 10
        for j1, j2 in grid:
            assert j1 > 0 and j2 > 0
            assert j1 + j2 == pytest.approx(1.0, abs=1e-12)

    def test_invalid_grid_rejected(self):
        with pytest.raises(ValueError):
            alpha_sgd(2, _cfg(), j_grid=[(0.6, 0.6)])
        with pytest.raises(ValueError):
            alpha_sgd(2, _cfg(), j_grid=[])


class TestEpsilonSearch:
    def test_pure_delta_term(self):
        # alpha identically zero: epsilon = -ln(delta) / lambda_max.
        cfg = _cfg(q=0.0, t_kmeans=0, t_sgd=0, delta=math.exp(-10), lambda_max=32)
        eps, lam = epsilon_for_delta(cfg)
        assert eps == pytest.approx(10 / 32)
        assert lam == 32

    def test_profile_matches_component_sums(self):
        cfg = _cfg(t_sgd=25)
        profile = total_alpha_profile(cfg)
        assert profile.lambdas == tuple(range(1, 33))
        for lam, val in zip(profile.lambdas, profile.values):
            assert val == pytest.approx(alpha_kmeans(lam, cfg) + alpha_sgd(lam, cfg))

    def test_profile_finite_nonnegative_monotone(self):
        profile = total_alpha_profile(_cfg(t_sgd=500))
        vals = profile.values
        assert all(np.isfinite(v) and v >= 0 for v in vals)
        assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))

    def test_more_iterations_cost_more(self):
        eps_small, _ = epsilon_for_delta(_cfg(t_sgd=100))
        eps_large, _ = epsilon_for_delta(_cfg(t_sgd=2000))
        assert eps_small < eps_large

    def test_schedule_matches_pointwise_evaluation(self):
        cfg = _cfg(t_sgd=0)
        rows = epsilon_schedule(cfg, (1, 3))
        per_epoch = epoch_iterations(cfg.q)
        for row in rows:
            assert row.t_sgd == row.epoch * per_epoch
            direct, lam = epsilon_for_delta(_cfg(t_sgd=row.t_sgd))
            assert row.epsilon == pytest.approx(direct, rel=1e-12)
            assert row.argmin_lambda == lam

    def test_epoch_iterations(self):
        assert epoch_iterations(0.0017) == 589
        assert epoch_iterations(1.0) == 1
        with pytest.raises(ValueError):
            epoch_iterations(0.0)


class TestPrivacyConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            _cfg(sigma_g=0.0)
        with pytest.raises(ValueError):
            _cfg(q=1.5)
        with pytest.raises(ValueError):
            _cfg(delta=0.0)
        with pytest.raises(ValueError):
            _cfg(t_sgd=-1)

    def test_alpha_profile_shape_checked(self):
        with pytest.raises(ValueError):
            AlphaProfile(lambdas=(1, 2), values=(0.1,))
