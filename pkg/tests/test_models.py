import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctte.errors import ValidationError
from ctte.models import (
    ConstantIntensity,
    GaussianModelParams,
    GaussianTargetIntensity,
    RefractoryCoarseIntensity,
    RefractoryModelParams,
    RefractorySourceIntensity,
    RefractoryTargetIntensity,
    coarse_rate_history_valid,
    gaussian_target_rate,
    rate_breakpoints,
    rate_upper_bound,
    refractory_coarse_rate,
    refractory_joint_rates,
    refractory_te_rate_closed_form,
)

LAM_E_HALF = 0.6931471805599453  # -ln(1 - 0.5) / 1


class TestParamValidation:
    def test_a_range(self):
        with pytest.raises(ValidationError):
            RefractoryModelParams(lambda_y=0.1, a=1.5, tau=1.0, tau_r=1.0)
        with pytest.raises(ValidationError):
            RefractoryModelParams(lambda_y=0.1, a=0.0, tau=1.0, tau_r=1.0)

    def test_refractory_shorter_than_window(self):
        with pytest.raises(ValidationError):
            RefractoryModelParams(lambda_y=0.1, a=0.5, tau=1.0, tau_r=0.5)

    def test_gaussian_positivity(self):
        with pytest.raises(ValidationError):
            GaussianModelParams(lambda_base=0.0)
        with pytest.raises(ValidationError):
            GaussianModelParams(sigma=-1.0)
        # degenerate null cases admitted
        GaussianModelParams(m=0.0)
        GaussianModelParams(lambda_y=0.0)

    def test_elevated_rate(self, refractory_params):
        assert refractory_params.elevated_rate == pytest.approx(LAM_E_HALF,
                                                                abs=1e-12)


class TestRefractoryJointRates:
    def test_source_refractory_zero_branch(self, refractory_params):
        _, lam_y = refractory_joint_rates(refractory_params, 2.0, last_y=1.5)
        assert lam_y == 0.0

    def test_elevated_branch(self, refractory_params):
        lam_x, _ = refractory_joint_rates(refractory_params, 2.0,
                                          last_x=0.0, last_y=1.6)
        assert lam_x == pytest.approx(LAM_E_HALF, abs=1e-6)

    def test_outside_elevated_window(self, refractory_params):
        lam_x, _ = refractory_joint_rates(refractory_params, 3.0, last_y=1.0)
        assert lam_x == 0.0

    def test_blocked_by_own_refractory(self, refractory_params):
        # last_x after last_y: already fired for this window
        lam_x, _ = refractory_joint_rates(refractory_params, 2.0,
                                          last_x=1.7, last_y=1.6)
        assert lam_x == 0.0
        # last_x long before, but within tau_r of t
        lam_x, _ = refractory_joint_rates(refractory_params, 2.0,
                                          last_x=0.8, last_y=1.6)
        assert lam_x == 0.0

    def test_no_source_spike_means_silent_target(self, refractory_params):
        lam_x, lam_y = refractory_joint_rates(refractory_params, 2.0)
        assert lam_x == 0.0
        assert lam_y == refractory_params.lambda_y


class TestRefractoryCoarseRate:
    def test_refractory_branch(self, refractory_params):
        assert refractory_coarse_rate(refractory_params, 1.0) == 0.0

    def test_rising_branch(self, refractory_params):
        expected = (1.0 - 0.5 ** 0.5) * 0.1
        assert refractory_coarse_rate(refractory_params, 2.0) == pytest.approx(
            expected, abs=1e-12)

    def test_plateau(self, refractory_params):
        assert refractory_coarse_rate(refractory_params, 3.0) == pytest.approx(
            0.05, abs=1e-15)

    def test_no_prior_spike(self, refractory_params):
        assert refractory_coarse_rate(refractory_params) == pytest.approx(0.05)

    def test_continuity_and_monotonicity(self, refractory_params):
        p = refractory_params
        eps = 1e-9
        at = refractory_coarse_rate
        assert abs(at(p, p.tau_r - eps) - at(p, p.tau_r + eps)) < 1e-8
        knot = p.tau_r + p.tau
        assert abs(at(p, knot - eps) - at(p, knot + eps)) < 1e-8
        dts = np.linspace(0.0, 2 * knot, 4001)
        vals = np.array([at(p, d) for d in dts])
        assert np.all(np.diff(vals) >= -1e-15)

    def test_validity_flag(self, refractory_params):
        p = refractory_params
        assert coarse_rate_history_valid(p, [1.0])
        assert coarse_rate_history_valid(p, [1.0, 1.0 + p.tau_r + p.tau])
        assert not coarse_rate_history_valid(p, [1.0, 2.0])


class TestClosedFormRate:
    def test_reference_values(self):
        r1 = refractory_te_rate_closed_form(
            RefractoryModelParams(lambda_y=0.1, a=0.5, tau=1.0, tau_r=1.5))
        assert r1.rate == pytest.approx(0.13146096764861634, abs=1e-9)
        r2 = refractory_te_rate_closed_form(
            RefractoryModelParams(lambda_y=0.01, a=0.9, tau=1.0, tau_r=1.0))
        assert r2.rate == pytest.approx(0.04990106832204486, abs=1e-9)

    def test_unit_ratio_is_zero(self):
        # choose lambda_y so that a*lambda_y equals the elevated rate
        a, tau = 0.5, 1.0
        lam_e = -math.log1p(-a) / tau
        lam_y = lam_e / a
        r = refractory_te_rate_closed_form(
            RefractoryModelParams(lambda_y=lam_y, a=a, tau=tau, tau_r=tau))
        assert r.rate == pytest.approx(0.0, abs=1e-12)
        assert r.regime_ok  # boundary case: log is exactly zero

    def test_out_of_regime_flagged(self):
        r = refractory_te_rate_closed_form(
            RefractoryModelParams(lambda_y=10.0, a=0.5, tau=1.0, tau_r=1.0))
        assert r.rate < 0.0 and not r.regime_ok

    @given(a100=st.integers(5, 95), ly1000=st.integers(1, 400),
           c10=st.integers(2, 50))
    @settings(max_examples=100, deadline=None)
    def test_rescaling_invariance(self, a100, ly1000, c10):
        # normalized value depends on (a, lambda_y * tau) only
        a = a100 / 100.0
        lam_y = ly1000 / 1000.0
        c = c10 / 10.0
        r1 = refractory_te_rate_closed_form(
            RefractoryModelParams(lambda_y=lam_y, a=a, tau=1.0, tau_r=1.0))
        r2 = refractory_te_rate_closed_form(
            RefractoryModelParams(lambda_y=lam_y * c, a=a, tau=1.0 / c,
                                  tau_r=1.0 / c))
        assert r1.normalized == pytest.approx(r2.normalized, rel=1e-12)


class TestGaussianRate:
    def test_mid_window(self, gaussian_params):
        expected = 5.5 - 5.0 * math.exp(-12.5)
        assert gaussian_target_rate(gaussian_params, 0.5) == pytest.approx(
            expected, abs=1e-7)

    def test_continuity_at_edges(self, gaussian_params):
        assert gaussian_target_rate(gaussian_params, 1.0) == pytest.approx(
            0.5, abs=1e-12)
        eps = 1e-9
        near0 = gaussian_target_rate(gaussian_params, eps)
        assert abs(near0 - 0.5) < 1e-6
        left = gaussian_target_rate(gaussian_params, 1.0 - eps)
        right = gaussian_target_rate(gaussian_params, 1.0 + eps)
        assert abs(left - right) < 1e-6

    def test_outside_window(self, gaussian_params):
        assert gaussian_target_rate(gaussian_params, 2.0) == 0.5
        assert gaussian_target_rate(gaussian_params, None) == 0.5

    def test_boundary_continuity_tight(self, gaussian_params):
        # sampled boundary points, both sides agree to 1e-12 in the limit
        intensity = GaussianTargetIntensity(gaussian_params)
        for ly in (0.0, 3.7):
            t_edge = ly + gaussian_params.t_cut
            lo = intensity.rate(np.nextafter(t_edge, -math.inf), [], [ly])
            hi = intensity.rate(np.nextafter(t_edge, math.inf), [], [ly])
            assert abs(lo - hi) < 1e-12


class TestBreakpointsAndBounds:
    def test_gaussian_breakpoints(self, gaussian_params):
        m = GaussianTargetIntensity(gaussian_params)
        assert rate_breakpoints(m, 3.1, [], [3.0], 10.0) == (4.0,)
        assert rate_breakpoints(m, 3.1, [], [], 10.0) == ()

    def test_refractory_breakpoints(self, refractory_params):
        m = RefractoryTargetIntensity(refractory_params)
        assert rate_breakpoints(m, 0.25, [0.0], [0.2], 5.0) == (1.2, 1.5)

    def test_source_breakpoint(self, refractory_params):
        m = RefractorySourceIntensity(refractory_params)
        assert rate_breakpoints(m, 0.3, [0.2], None, 5.0) == \
            (0.2 + refractory_params.tau_r,)

    def test_bounds(self, gaussian_params, refractory_params):
        assert rate_upper_bound(GaussianTargetIntensity(gaussian_params)) == 5.5
        assert rate_upper_bound(
            RefractoryTargetIntensity(refractory_params)) == pytest.approx(
                LAM_E_HALF)
        assert rate_upper_bound(
            RefractorySourceIntensity(refractory_params)) == 0.1
        assert ConstantIntensity(2.0).rate_upper_bound() == 2.0

    def test_bounds_hold_on_randomized_probes(self, gaussian_params,
                                              refractory_params):
        rng = np.random.default_rng(0)
        ts = rng.uniform(0.0, 50.0, 10_000)
        models = [
            (GaussianTargetIntensity(gaussian_params), True),
            (RefractoryTargetIntensity(refractory_params), True),
            (RefractorySourceIntensity(refractory_params), False),
            (RefractoryCoarseIntensity(refractory_params), False),
        ]
        for model, needs_source in models:
            bound = model.rate_upper_bound()
            for _ in range(100):
                lx = np.sort(rng.uniform(-5.0, -0.01, rng.integers(0, 3)))
                ly = np.sort(rng.uniform(-5.0, -0.01, rng.integers(0, 3)))
                rates = model.rate_profile(ts, lx, ly if needs_source else None)
                assert np.all(rates <= bound + 1e-12)
                assert np.all(rates >= 0.0)

    def test_profile_matches_scalar(self, gaussian_params, refractory_params):
        ts = np.linspace(3.05, 9.0, 301)
        cases = [
            (GaussianTargetIntensity(gaussian_params), [0.3], [0.02, 2.6]),
            (RefractoryTargetIntensity(refractory_params), [0.3], [2.6]),
            (RefractoryCoarseIntensity(refractory_params), [0.3], None),
            (RefractorySourceIntensity(refractory_params), [0.3], None),
        ]
        for model, hist, src in cases:
            prof = model.rate_profile(ts, np.asarray(hist),
                                      None if src is None else np.asarray(src))
            scal = [model.rate(t, np.asarray(hist),
                               None if src is None else np.asarray(src))
                    for t in ts]
            assert np.allclose(prof, scal, atol=0.0)


class TestGaussianCompensator:
    def test_against_riemann(self, gaussian_params):
        m = GaussianTargetIntensity(gaussian_params)
        src = np.array([1.3])
        a, b = 1.4, 2.1
        ts = np.linspace(a, b, 200_001)
        riemann = np.trapezoid(m.rate_profile(ts, [], src), ts)
        assert m.compensator(a, b, [], src) == pytest.approx(riemann, abs=1e-8)

    def test_no_source(self, gaussian_params):
        m = GaussianTargetIntensity(gaussian_params)
        assert m.compensator(0.0, 3.0, [], []) == pytest.approx(1.5)
