"""Closed-form reference solutions and envelope shapes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdrecon.fields import (
    ConfigurationError,
    SpectralField2D,
    TaylorSpec,
    l2_norm,
    laplacian,
    make_taylor,
    make_tilde_t1,
    sobolev_norm,
)
from mhdrecon.oracles import (
    DecayingTaylorOracle,
    ForcedOracle,
    StabilityBound,
    decaying_taylor,
    duhamel_envelopes,
    forced_exact_b,
    forced_exact_b_dt,
    forcing_f1,
    remark2_error_bound,
    remark2_exact_b,
    remark2_exact_error,
    stability_envelope,
)
from mhdrecon.solver import nonlinear_rhs

ETA = 0.5


class TestDecayingTaylor:
    def test_initial_state(self, grid32):
        oracle = DecayingTaylorOracle(spec=TaylorSpec(2, 2), eta=ETA, amplitude=0.25)
        st = decaying_taylor(oracle, 0.0, grid32)
        assert l2_norm(st.u) == 0.0
        expected = make_taylor(TaylorSpec(2, 2), 0.25, grid32)
        assert np.allclose(st.b.coeffs, expected.coeffs)

    def test_half_life(self, grid32):
        spec = TaylorSpec(1, 2)
        oracle = DecayingTaylorOracle(spec=spec, eta=ETA, amplitude=1.0)
        t_half = np.log(2.0) / (ETA * spec.eigenvalue)
        st = decaying_taylor(oracle, t_half, grid32)
        assert l2_norm(st.b) == pytest.approx(0.5 * np.pi * np.sqrt(spec.eigenvalue), rel=1e-12)

    def test_is_stationary_for_nonlinearity(self, grid64):
        oracle = DecayingTaylorOracle(spec=TaylorSpec(3, 1), eta=ETA, amplitude=1.0)
        st = decaying_taylor(oracle, 0.7, grid64)
        du, db = nonlinear_rhs(st)
        assert l2_norm(du) < 1e-10 and l2_norm(db) < 1e-10


class TestForcedExact:
    oracle = ForcedOracle(spec_nm=TaylorSpec(4, 4), spec_2=TaylorSpec(1, 1), eta=ETA)

    def test_mode_ordering_enforced(self):
        with pytest.raises(ConfigurationError):
            ForcedOracle(spec_nm=TaylorSpec(1, 1), spec_2=TaylorSpec(4, 4), eta=ETA)

    def test_initial_value(self, grid32):
        b = forced_exact_b(self.oracle, 0.0, grid32)
        assert np.allclose(b.coeffs, make_taylor(TaylorSpec(4, 4), 1.0, grid32).coeffs)

    def test_long_time_limit(self, grid32):
        b = forced_exact_b(self.oracle, 1e3, grid32)
        limit = make_taylor(TaylorSpec(1, 1), 1.0 / (ETA * 2.0), grid32)
        assert l2_norm(b - limit) < 1e-12 * l2_norm(limit)

    @pytest.mark.parametrize("t", [0.0, 0.1, 0.5, 2.0])
    def test_heat_equation_residual(self, grid32, t):
        # d_t b = eta Lap b + f2 must hold identically
        b = forced_exact_b(self.oracle, t, grid32)
        dbdt = forced_exact_b_dt(self.oracle, t, grid32)
        f2 = make_taylor(TaylorSpec(1, 1), 1.0, grid32)
        resid = SpectralField2D(
            grid32, dbdt.coeffs - ETA * laplacian(b).coeffs - f2.coeffs
        )
        assert l2_norm(resid) < 1e-10


class TestForcingF1:
    oracle = ForcedOracle(spec_nm=TaylorSpec(4, 4), spec_2=TaylorSpec(1, 1), eta=ETA)

    def test_vanishes_at_zero_time(self, grid32):
        assert l2_norm(forcing_f1(self.oracle, 0.0, grid32)) == 0.0

    def test_zero_average(self, grid32):
        f1 = forcing_f1(self.oracle, 0.8, grid32)
        assert np.abs(f1.coeffs[:, 0, 0]).max() < 1e-14 * np.abs(f1.coeffs).max()

    def test_scales_with_coefficient_product(self, grid32):
        f_a = forcing_f1(self.oracle, 0.3, grid32)
        f_b = forcing_f1(self.oracle, 0.6, grid32)
        ca = np.prod(self.oracle.coefficients(0.3))
        cb = np.prod(self.oracle.coefficients(0.6))
        assert np.allclose(f_a.coeffs * cb, f_b.coeffs * ca, atol=1e-14)


class TestStabilityEnvelope:
    def test_for_run_default_sigma(self):
        bound = StabilityBound.for_run(0.5, 0.5, r=3, delta=1e-3, n_scale=np.sqrt(32.0))
        assert bound.sigma == pytest.approx(0.45)
        assert bound.sigma < min(0.5, 0.5)

    def test_initial_value(self):
        bound = StabilityBound(sigma=0.45, r=3, delta=1e-3, n_scale=2.0)
        assert stability_envelope(bound, 0.0) == pytest.approx(1e-6 * 2.0**6)

    @given(
        t1=st.floats(0.0, 5.0),
        dt=st.floats(0.01, 5.0),
        sigma=st.floats(0.05, 2.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_ratio_law(self, t1, dt, sigma):
        bound = StabilityBound(sigma=sigma, r=2, delta=0.1, n_scale=3.0)
        ratio = stability_envelope(bound, t1 + dt) / stability_envelope(bound, t1)
        assert ratio == pytest.approx(np.exp(-2.0 * sigma * dt), rel=1e-9)

    @given(r=st.integers(0, 6))
    @settings(max_examples=10, deadline=None)
    def test_doubling_n_scale(self, r):
        b1 = StabilityBound(sigma=0.3, r=r, delta=0.1, n_scale=2.0)
        b2 = StabilityBound(sigma=0.3, r=r, delta=0.1, n_scale=4.0)
        assert stability_envelope(b2, 1.0) / stability_envelope(b1, 1.0) == pytest.approx(
            2.0 ** (2 * r)
        )

    def test_sigma_validation(self):
        with pytest.raises(ConfigurationError):
            StabilityBound(sigma=0.0, r=3, delta=1e-3, n_scale=2.0)
        with pytest.raises(ConfigurationError):
            StabilityBound.for_run(0.5, 0.5, r=3, delta=1e-3, n_scale=2.0, safety=1.0)


class TestDuhamelEnvelopes:
    def test_values_at_zero_time(self):
        delta, n = 1e-3, 4.0
        lh, lm = duhamel_envelopes(delta, n, r=3, eta=ETA, sigma=0.45, t=0.0)
        assert lh == pytest.approx(delta**2 * n**6)
        assert lm == pytest.approx(delta / n**2 + delta * n**4)

    def test_late_time_plateau(self):
        delta, n = 1e-3, 4.0
        _, lm = duhamel_envelopes(delta, n, r=3, eta=ETA, sigma=0.45, t=1e3)
        assert lm == pytest.approx(delta / n**2)

    def test_quadratic_delta_scaling(self):
        lh1, _ = duhamel_envelopes(2e-3, 4.0, 3, ETA, 0.45, 0.7)
        lh2, _ = duhamel_envelopes(1e-3, 4.0, 3, ETA, 0.45, 0.7)
        assert lh1 / lh2 == pytest.approx(4.0)


class TestRemark2:
    def test_bound_vanishes_at_large_horizon(self):
        assert remark2_error_bound(32.0, 3, ETA, 1e4) < 1e-300

    def test_bound_monotone_in_horizon(self):
        ts = np.linspace(0.25, 6.0, 24)
        vals = [remark2_error_bound(32.0, 3, ETA, t) for t in ts]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_exact_error_matches_direct_norm(self, grid32):
        spec = TaylorSpec(4, 4)
        t_end, r = 1.5, 3
        direct = sobolev_norm(
            SpectralField2D(
                grid32,
                ETA * remark2_exact_b(spec, ETA, t_end, grid32).coeffs
                - make_tilde_t1(grid32).coeffs,
            ),
            r,
        )
        assert remark2_exact_error(spec, r, ETA, t_end, grid32) == pytest.approx(
            direct, rel=1e-12
        )

    def test_closed_form_solves_forced_heat(self, grid32):
        # d_t b = eta Lap b + tilde T1 at sampled times, via the analytic derivative
        spec = TaylorSpec(3, 3)
        for t in (0.0, 0.4, 1.1):
            nsq = spec.eigenvalue
            d1 = -ETA * nsq * np.exp(-ETA * nsq * t)
            d2 = np.exp(-ETA * t)
            big = make_taylor(spec, 1.0, grid32)
            tilde = make_tilde_t1(grid32)
            dbdt = SpectralField2D(grid32, d1 * big.coeffs + d2 * tilde.coeffs)
            b = remark2_exact_b(spec, ETA, t, grid32)
            resid = SpectralField2D(
                grid32, dbdt.coeffs - ETA * laplacian(b).coeffs - tilde.coeffs
            )
            assert l2_norm(resid) < 1e-10
