"""Degradation model families: closed forms against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from hbprog.models import (
    BatteryDoubleModel,
    BatteryDoubleParams,
    BatterySingleModel,
    BatterySingleParams,
    CrackDivergedError,
    CrackGeometry,
    CrackParams,
    LoadingSpec,
    NoFailureError,
    ParisCrackModel,
    battery_capacity_double,
    battery_capacity_single,
    crack_length,
    cycles_to_failure,
    equivalent_stress,
)

GEO = CrackGeometry(a0=1.0, n0=0.0, a_f=25.0)
CONST = LoadingSpec("constant", delta_sigma=60.0)


def ode_crack_length(m, log_c, a0, delta_sigma, dn, rtol=1e-11):
    """Independent oracle: adaptive Runge-Kutta integration of the growth
    rate law da/dN = C * (delta_sigma * sqrt(pi * a))^m."""
    c = math.exp(log_c)

    def rate(_, a):
        return c * (delta_sigma * math.sqrt(math.pi * a[0])) ** m

    sol = solve_ivp(rate, (0.0, dn), [a0], rtol=rtol, atol=1e-13)
    return float(sol.y[0, -1])


class TestEquivalentStress:
    def test_equal_amplitudes_fixed_point(self):
        loading = LoadingSpec("two-block", delta_sigma1=60, n1=30, delta_sigma2=60, n2=70)
        assert equivalent_stress(loading, 3.0) == pytest.approx(60.0, rel=1e-12)

    def test_single_block_degeneracy(self):
        loading = LoadingSpec("two-block", delta_sigma1=60, n1=100, delta_sigma2=80, n2=0)
        assert equivalent_stress(loading, 3.0) == pytest.approx(60.0, rel=1e-12)

    def test_m_one_is_arithmetic_mean(self):
        loading = LoadingSpec("two-block", delta_sigma1=60, n1=50, delta_sigma2=80, n2=50)
        assert equivalent_stress(loading, 1.0) == pytest.approx(70.0, rel=1e-12)

    def test_constant_mode_passthrough(self):
        assert equivalent_stress(CONST, 3.7) == 60.0

    def test_zero_exponent_rejected(self):
        loading = LoadingSpec("two-block", delta_sigma1=60, n1=50, delta_sigma2=80, n2=50)
        with pytest.raises(ValueError):
            equivalent_stress(loading, 0.0)

    def test_zero_cycles_rejected_at_construction(self):
        with pytest.raises(ValueError):
            LoadingSpec("two-block", delta_sigma1=60, n1=0, delta_sigma2=80, n2=0)

    @given(
        ds1=st.floats(10, 200),
        ds2=st.floats(10, 200),
        n1=st.floats(1, 1e5),
        n2=st.floats(1, 1e5),
        m=st.floats(0.1, 8),
    )
    @settings(max_examples=60, deadline=None)
    def test_power_mean_bounds(self, ds1, ds2, n1, n2, m):
        loading = LoadingSpec("two-block", delta_sigma1=ds1, n1=n1, delta_sigma2=ds2, n2=n2)
        eq = equivalent_stress(loading, m)
        assert min(ds1, ds2) - 1e-9 <= eq <= max(ds1, ds2) + 1e-9


class TestCrackLength:
    def test_zero_elapsed_cycles(self):
        p = CrackParams(1.2, 1.0)
        assert crack_length(p, GEO, CONST, 0.0) == 1.0

    def test_no_growth_when_rate_underflows(self):
        # theta2 large enough that exp(log C) underflows to exactly 0
        p = CrackParams(1.2, 45.0)
        assert crack_length(p, GEO, CONST, 1e6) == 1.0

    def test_against_ode_oracle_m3(self):
        p = CrackParams(1.5, 1.0)  # m = 3, log C = -18.6
        got = crack_length(p, GEO, CONST, 100.0)
        want = ode_crack_length(3.0, -18.6, 1.0, 60.0, 100.0)
        assert got == pytest.approx(want, rel=1e-6)
        assert got == pytest.approx(4.042843235898347, rel=1e-9)

    def test_vector_and_scalar_agree(self):
        p = CrackParams(1.1, 1.02)
        grid = np.array([0.0, 5e3, 2e4])
        vec = crack_length(p, GEO, CONST, grid)
        assert vec.shape == (3,)
        for n, v in zip(grid, vec):
            assert crack_length(p, GEO, CONST, float(n)) == v

    def test_divergence_signalled_with_cycle(self):
        p = CrackParams(1.5, 1.0)  # m = 3 diverges at base = 0
        with pytest.raises(CrackDivergedError) as err:
            crack_length(p, GEO, CONST, 5e4)
        assert err.value.cycle == 5e4

    def test_exponential_branch_continuity(self):
        eps = 2e-7  # inside the m ~ 2 band at theta1 = 1 +- 1e-7
        a_mid = crack_length(CrackParams(1.0, 1.0), GEO, CONST, 2e4)
        a_lo = crack_length(CrackParams(1.0 - eps, 1.0), GEO, CONST, 2e4)
        a_hi = crack_length(CrackParams(1.0 + eps, 1.0), GEO, CONST, 2e4)
        assert a_lo == pytest.approx(a_mid, rel=1e-4)
        assert a_hi == pytest.approx(a_mid, rel=1e-4)

    @given(
        theta1=st.floats(0.5, 1.6),
        theta2=st.floats(0.9, 1.2),
        n1=st.floats(0, 3e4),
        n2=st.floats(0, 3e4),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_cycles(self, theta1, theta2, n1, n2):
        p = CrackParams(theta1, theta2)
        lo, hi = sorted([n1, n2])
        try:
            a_pair = crack_length(p, GEO, CONST, np.array([lo, hi]))
        except CrackDivergedError:
            return
        assert a_pair[1] >= a_pair[0] - 1e-12

    @given(theta1=st.floats(0.55, 1.55), theta2=st.floats(0.95, 1.1))
    @settings(max_examples=40, deadline=None)
    def test_ode_agreement_random_sweep(self, theta1, theta2):
        p = CrackParams(theta1, theta2)
        if abs(p.m - 2.0) < 1e-6:
            return
        nf = cycles_to_failure(p, GEO, CONST)
        dn = 0.5 * nf
        got = crack_length(p, GEO, CONST, dn)
        want = ode_crack_length(p.m, p.log_c, 1.0, 60.0, dn)
        assert got == pytest.approx(want, rel=1e-6)


class TestCyclesToFailure:
    def test_already_at_threshold(self):
        geo = CrackGeometry(a0=5.0, n0=120.0, a_f=5.0)
        assert cycles_to_failure(CrackParams(1.2, 1.0), geo, CONST) == 120.0

    def test_m2_branch_hand_formula(self):
        p = CrackParams(1.0, 1.0)  # exactly m = 2
        nf = cycles_to_failure(p, GEO, CONST)
        # by hand: n0 + ln(a_f / a0) / (C * (ds * sqrt(pi))^2)
        assert nf == pytest.approx(34050.948442446757, rel=1e-9)
        # bisection on the forward model as an independent check
        lo, hi = 0.0, 1e6
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if crack_length(p, GEO, CONST, mid) < 25.0:
                lo = mid
            else:
                hi = mid
        assert nf == pytest.approx(0.5 * (lo + hi), abs=1e-4)

    def test_zero_rate_has_no_failure_time(self):
        with pytest.raises(NoFailureError):
            cycles_to_failure(CrackParams(1.2, 45.0), GEO, CONST)

    @given(theta1=st.floats(0.55, 1.55), theta2=st.floats(0.95, 1.15))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip_inversion(self, theta1, theta2):
        p = CrackParams(theta1, theta2)
        nf = cycles_to_failure(p, GEO, CONST)
        assert crack_length(p, GEO, CONST, nf) == pytest.approx(25.0, rel=1e-9)


class TestBatterySingle:
    def test_nominal_at_k100(self):
        p = BatterySingleParams(1.0, 1.0, 1.0)
        assert battery_capacity_single(p, 100) == pytest.approx(2.0 - math.exp(-1.0), rel=1e-12)
        assert battery_capacity_single(p, 100) == pytest.approx(1.6321205588285577, rel=1e-12)

    def test_large_k_limit(self):
        p = BatterySingleParams(1.0, 1.0, 1.0)
        assert battery_capacity_single(p, 1e9) == pytest.approx(p.c0 + p.a, rel=1e-6)

    def test_zero_a_constant_capacity(self):
        p = BatterySingleParams(1.0, 0.0, 1.0)
        k = np.array([1.0, 10.0, 500.0])
        assert np.all(battery_capacity_single(p, k) == 2.0)

    def test_below_domain_rejected(self):
        p = BatterySingleParams(1.0, 1.0, 1.0)
        with pytest.raises(ValueError, match="below model domain"):
            battery_capacity_single(p, 0)


class TestBatteryDouble:
    def test_k0_sum_of_amplitudes(self):
        p = BatteryDoubleParams(1.0, 1.0, 1.0, 1.0)
        assert battery_capacity_double(p, 0) == pytest.approx(1.917, rel=1e-12)

    def test_zero_second_term(self):
        p = BatteryDoubleParams(1.0, 1.0, 0.0, 1.0)
        k = np.arange(0, 50, 5.0)
        expect = 1.92 * np.exp(-0.02 * k)
        np.testing.assert_allclose(battery_capacity_double(p, k), expect, rtol=1e-12)

    def test_nominal_k50_high_precision(self):
        # frozen from a 50-digit evaluation of 1.92 e^{-1} - 0.003 e^{-2.5}
        p = BatteryDoubleParams(1.0, 1.0, 1.0, 1.0)
        assert battery_capacity_double(p, 50) == pytest.approx(0.7060822720532976, rel=1e-14)

    def test_negative_cycle_rejected(self):
        p = BatteryDoubleParams(1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            battery_capacity_double(p, -1)


class TestDeterminism:
    def test_bit_identical_reevaluation(self):
        p = CrackParams(1.2, 1.05)
        grid = np.linspace(0, 1e4, 17)
        first = crack_length(p, GEO, CONST, grid)
        second = crack_length(p, GEO, CONST, grid)
        assert np.array_equal(first, second)
        bp = BatteryDoubleParams(1.1, 0.9, 1.2, 0.8)
        assert battery_capacity_double(bp, 33) == battery_capacity_double(bp, 33)


class TestModelContracts:
    def test_paris_predict_matches_free_function(self):
        model = ParisCrackModel(GEO, CONST)
        theta = np.array([1.15, 1.03])
        grid = np.linspace(0, 2e4, 9)
        np.testing.assert_array_equal(
            model.predict(theta, grid), crack_length(CrackParams(*theta), GEO, CONST, grid)
        )

    def test_paris_predict_inf_after_divergence(self):
        model = ParisCrackModel(GEO, CONST)
        out = model.predict(np.array([1.5, 1.0]), np.array([0.0, 100.0, 5e4]))
        assert np.isfinite(out[:2]).all()
        assert np.isinf(out[2])

    def test_inadmissible_theta_gives_inf(self):
        model = ParisCrackModel(GEO, CONST)
        assert np.isinf(model.predict(np.array([-0.2, 1.0]), [0.0, 10.0])).all()

    def test_two_block_amplitude_reevaluated_per_sample(self):
        loading = LoadingSpec("two-block", delta_sigma1=50, n1=60, delta_sigma2=90, n2=40)
        model = ParisCrackModel(GEO, loading)
        lo = model.predict(np.array([0.8, 1.05]), [1e3])[0]
        hi = model.predict(np.array([1.3, 1.05]), [1e3])[0]
        # larger exponent weights the heavy block more, growing the crack faster
        assert hi > lo

    def test_battery_models_vectorize(self):
        single = BatterySingleModel()
        double = BatteryDoubleModel()
        k = np.arange(1, 11, dtype=float)
        np.testing.assert_allclose(
            single.predict(np.array([1.0, 1.0, 1.0]), k),
            [battery_capacity_single(BatterySingleParams(1, 1, 1), kk) for kk in k],
        )
        np.testing.assert_allclose(
            double.predict(np.array([1.0, 1.0, 1.0, 1.0]), k),
            [battery_capacity_double(BatteryDoubleParams(1, 1, 1, 1), kk) for kk in k],
        )

    def test_normalize_gaussian_rescales_exactly(self):
        model = ParisCrackModel(GEO, CONST)
        means, sds = model.normalize_gaussian([2.89, -10.78], [0.29, 0.17])
        assert means[0] == pytest.approx(2.89 / 2.0)
        assert means[1] == pytest.approx(-10.78 / -18.6)
        assert sds[0] == pytest.approx(0.29 / 2.0)
        assert sds[1] == pytest.approx(0.17 / 18.6)
