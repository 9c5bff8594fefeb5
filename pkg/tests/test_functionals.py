import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nlslab.core.functionals import (
    MUCH_SMALLER,
    NonlinearityParams,
    ThresholdConstants,
    correction_density,
    correction_split,
    correction_X,
    critical_energy,
    critical_power,
    delta_bar,
    dyadic_measure_weights,
    dyadic_scales,
    energy,
    energy_report,
    functional_K,
    g_of,
    hardy_sum,
    htilde_norm,
    jensen_chain_check,
    kinetic,
    local_mass,
    mass,
    mass_control_ratio,
    measure_holder_check,
    potential,
    potential_density_F,
    q_functional,
    scaled_integral,
    sobolev_lower_bound,
    spacetime_norm,
    weighted_potential_Z,
)
from nlslab.core.evolution import EvolutionParams, Trace
from nlslab.core.grid import GridSpec, RadialField, build_basis, fractional_derivative, lp_norm, sphere_area
from nlslab.core.ground_state import ground_state_constants
from nlslab.errors import AnalysisError, FieldError, GridError, ThresholdError
from nlslab.runner.initial_data import gaussian, random_smooth

SPEC = GridSpec(dimension=3, r_max=20.0, modes=96)


class TestNonlinearity:
    def test_g_at_zero_gamma_is_one(self):
        p = NonlinearityParams(gamma=0.0)
        np.testing.assert_array_equal(p.g(np.array([0.0, 1.0, 100.0])), 1.0)
        np.testing.assert_array_equal(p.h(np.array([0.0, 5.0])), 0.0)

    def test_g_closed_form(self):
        p = NonlinearityParams(gamma=0.3)
        assert g_of(3.0, p) == pytest.approx(math.log(11.0) ** 0.3)
        with pytest.raises(FieldError):
            g_of(-1.0, p)

    @given(a=st.floats(0.0, 50.0), b=st.floats(0.0, 50.0), gamma=st.floats(0.0, 1.0))
    def test_g_nondecreasing_in_amplitude(self, a, b, gamma):
        p = NonlinearityParams(gamma=gamma)
        lo, hi = sorted((a, b))
        assert p.g(lo) <= p.g(hi) * (1 + 1e-15)

    def test_h_changes_sign_below_threshold(self):
        p = NonlinearityParams(gamma=0.5)
        crossing = math.sqrt(math.e - 2)
        assert p.h(0.5 * crossing) < 0
        assert p.h(2.0 * crossing) > 0

    @pytest.mark.parametrize("kwargs,error", [({"gamma": -0.1}, FieldError), ({"dimension": 6}, GridError)])
    def test_rejects_bad_params(self, kwargs, error):
        with pytest.raises(error):
            NonlinearityParams(**kwargs)


class TestScalarIntegrals:
    @pytest.mark.parametrize("gamma", [0.05, 0.5, 1.0])
    @pytest.mark.parametrize("amplitude", [0.1, 1.0, 5.0, 30.0])
    def test_correction_density_against_quad(self, gamma, amplitude):
        p = NonlinearityParams(gamma=gamma)
        expected, _ = integrate.quad(lambda s: float(p.h(s)) * s**5, 0.0, amplitude, epsabs=0.0, epsrel=1e-13, limit=200)
        assert float(correction_density(np.array(amplitude), p)) == pytest.approx(expected, rel=1e-9, abs=1e-15)

    @given(amplitude=st.floats(0.0, 20.0), gamma=st.floats(0.0, 1.0))
    def test_potential_density_splits(self, amplitude, gamma):
        p = NonlinearityParams(gamma=gamma)
        split = amplitude**6 / 6 + float(correction_density(np.array(amplitude), p))
        assert potential_density_F(amplitude, p) == pytest.approx(split, rel=1e-8, abs=1e-12)

    def test_scaled_integral_polynomial(self):
        upper = np.array([0.5, 2.0, 7.0])
        values = scaled_integral(upper, lambda s: 1.0 + s, 2.0)
        np.testing.assert_allclose(values, upper**3 / 3 + upper**4 / 4, rtol=1e-12)


class TestFunctionals:
    def test_identities(self):
        p = NonlinearityParams(gamma=0.2)
        f = gaussian(SPEC, 1.5, 1.5)
        assert energy(f, p) == pytest.approx(0.5 * kinetic(f) - potential(f, p), rel=1e-12)
        assert critical_energy(f) == pytest.approx(energy(f, p) + correction_X(f, p), rel=1e-9)
        assert functional_K(f) == pytest.approx(kinetic(f) - critical_power(f), rel=1e-12)

    def test_zero_gamma_has_no_correction(self):
        p = NonlinearityParams(gamma=0.0)
        f = gaussian(SPEC, 3.0, 1.0)
        assert correction_X(f, p) == 0.0
        assert energy(f, p) == pytest.approx(critical_energy(f))

    def test_energy_report_columns(self):
        p = NonlinearityParams(gamma=0.05)
        report = energy_report(gaussian(SPEC, 0.5, 2.0), p, 2.0, time=0.25)
        assert report.columns()[0] == "time"
        assert report.as_row()[0] == 0.25
        assert report.energy == pytest.approx(report.critical_energy - report.correction)
        assert report.to_dict()["mass"] == pytest.approx(report.mass)

    def test_critical_power_against_quad(self):
        f = gaussian(SPEC, 0.8, 2.0)
        value, _ = integrate.quad(lambda r: (0.8 * math.exp(-(r**2) / 4)) ** 6 * r**2, 0.0, 20.0, limit=200)
        assert critical_power(f) == pytest.approx(4 * math.pi * value, rel=1e-9)

    @settings(deadline=None)
    @given(seed=st.integers(0, 10_000), norm=st.floats(0.1, 5.0))
    def test_sobolev_lower_bound(self, seed, norm):
        f = random_smooth(SPEC, seed, norm, 2.0)
        bound = sobolev_lower_bound(f, ground_state_constants(3))
        assert functional_K(f) >= bound - 1e-8 * max(1.0, kinetic(f))

    def test_htilde_norm(self):
        f = gaussian(SPEC, 1.0, 2.0)
        assert htilde_norm(f, 1.0) == pytest.approx(2 * math.sqrt(kinetic(f)))
        with pytest.raises(FieldError):
            htilde_norm(f, 0.5)


class TestLocalMass:
    def test_monotone_in_radius(self):
        f = gaussian(SPEC, 1.0, 3.0)
        masses = [local_mass(f, r) for r in (1.0, 2.0, 5.0, 10.0, 20.0)]
        assert all(a <= b for a, b in zip(masses, masses[1:]))
        assert masses[-1] == pytest.approx(math.sqrt(mass(f)))

    def test_against_quadrature(self):
        f = gaussian(SPEC, 1.0, 2.0)
        value, _ = integrate.quad(lambda r: math.exp(-(r**2) / 2) * r**2, 0.0, 3.0)
        assert local_mass(f, 3.0) == pytest.approx(math.sqrt(sphere_area(3) * value), rel=1e-9)

    def test_bad_radius(self):
        f = gaussian(SPEC, 1.0, 2.0)
        with pytest.raises(FieldError):
            local_mass(f, 0.0)
        with pytest.raises(FieldError):
            local_mass(f, 21.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_mass_control_ratio_is_bounded(self, seed):
        f = random_smooth(SPEC, seed, 1.0, 2.0)
        ratios = [mass_control_ratio(f, r) for r in (0.5, 1.0, 4.0)]
        assert max(ratios) <= 2.0

    def test_zero_field(self):
        zero = RadialField.zeros(build_basis(SPEC))
        assert local_mass(zero, 2.0) == 0.0
        assert mass_control_ratio(zero, 2.0) == 0.0


class TestThresholdConstants:
    def test_derived_exponents_for_n3(self):
        tc = ThresholdConstants()
        assert tc.k_bar == pytest.approx(1.125)
        assert tc.k_bar_exponent == pytest.approx(8.0)
        assert tc.epsilon_breve == pytest.approx(0.1)
        assert tc.holder_exponent == pytest.approx(6.2)
        assert 0 < tc.theta < 1

    def test_holder_interpolation_identity(self):
        tc = ThresholdConstants(dimension=4, regularity=1.5)
        q, p1, p2 = tc.holder_exponent, tc.critical_exponent, tc.k_bar_exponent
        assert 1 / q == pytest.approx(tc.theta / p1 + (1 - tc.theta) / p2)

    @pytest.mark.parametrize(
        "kwargs", [{"delta": 0.0}, {"regularity": 1.0}, {"c_breve": 0.5}, {"C_breve": 0.0}, {"C_a": 1.0}]
    )
    def test_rejects_bad_constants(self, kwargs):
        with pytest.raises(ThresholdError):
            ThresholdConstants(**kwargs)

    def test_h_breve_vanishes_at_zero_gamma(self):
        np.testing.assert_array_equal(ThresholdConstants().h_breve(np.array([0.0, 10.0]), 0.0), 0.0)

    def test_to_dict_reports_much_smaller(self):
        assert ThresholdConstants().to_dict()["much_smaller"] == MUCH_SMALLER


class TestInequalityChains:
    @pytest.mark.parametrize("seed", range(8))
    def test_jensen_chain_holds_on_random_fields(self, seed):
        tc = ThresholdConstants()
        f = random_smooth(SPEC, seed, 2.0 + seed, 2.0)
        f = f * (6.0 / float(f.amplitude.max()))
        chain = jensen_chain_check(f, NonlinearityParams(gamma=0.1), tc)
        assert chain.holds, chain.to_dict()
        assert chain.lhs <= chain.rhs

    def test_jensen_chain_zero_gamma(self):
        chain = jensen_chain_check(gaussian(SPEC, 3.0, 1.0), NonlinearityParams(gamma=0.0), ThresholdConstants())
        assert chain.holds
        assert chain.lines[1:] == (0.0,) * 5

    @pytest.mark.parametrize("seed", range(5))
    def test_measure_holder(self, seed):
        f = random_smooth(SPEC, seed, 1.0, 2.0)
        check = measure_holder_check(f, 8.0, 3, ThresholdConstants())
        assert check.holds
        assert check.margin >= -1e-12

    def test_measure_holder_equality_for_constants(self):
        basis = build_basis(SPEC)
        f = RadialField(basis, np.where(basis.nodes < 10.0, 1.0, 0.0))
        check = measure_holder_check(f, 2.0, 2, ThresholdConstants())
        assert check.lhs == pytest.approx(check.rhs, rel=1e-10)

    def test_degenerate_measure(self):
        with pytest.raises(AnalysisError):
            measure_holder_check(gaussian(SPEC, 1.0, 1.0), 100.0, 0, ThresholdConstants())

    def test_dyadic_measure(self):
        np.testing.assert_allclose(dyadic_scales(8.0, 3), [8.0, 4.0, 2.0, 1.0])
        weights = dyadic_measure_weights(np.array([0.5, 1.5, 16.0]), 8.0, 3)
        np.testing.assert_allclose(weights, [0.0, 1.0 / 1.5, 15.0 / 16.0])
        with pytest.raises(AnalysisError):
            dyadic_scales(0.0, 2)

    def test_weighted_sums_are_positive(self):
        f = gaussian(SPEC, 1.0, 4.0)
        p = NonlinearityParams(gamma=0.1)
        assert weighted_potential_Z(f, 4.0, 2, p) > 0
        assert hardy_sum(f, 4.0, 2) > 0


def constant_trace(f: RadialField, times) -> Trace:
    trace = Trace(spec=SPEC, params=EvolutionParams(nonlinearity=NonlinearityParams(gamma=0.1)), dt=0.1)
    for t in times:
        trace.record(t, f)
    return trace


class TestSpacetimeNorms:
    def test_constant_trace_over_unit_time(self):
        f = gaussian(SPEC, 0.5, 2.0)
        assert spacetime_norm(constant_trace(f, [0.0, 0.5, 1.0])) == pytest.approx(lp_norm(f, 10.0), rel=1e-10)

    def test_scales_with_interval_length(self):
        f = gaussian(SPEC, 0.5, 2.0)
        short = spacetime_norm(constant_trace(f, [0.0, 1.0]), q=4.0)
        long = spacetime_norm(constant_trace(f, [0.0, 1.0, 2.0]), q=4.0)
        assert long / short == pytest.approx(2.0**0.25, rel=1e-12)

    def test_q_functional_of_constant_trace(self):
        f = gaussian(SPEC, 0.5, 2.0)
        r = 2.0 * 5 / 3
        expected = htilde_norm(f, 2.0) + lp_norm(fractional_derivative(f, 1.0), r) + lp_norm(
            fractional_derivative(f, 2.0), r
        )
        assert q_functional(constant_trace(f, [0.0, 0.25, 1.0]), 2.0) == pytest.approx(expected, rel=1e-10)

    def test_single_snapshot_is_rejected(self):
        trace = constant_trace(gaussian(SPEC, 0.5, 2.0), [0.0])
        with pytest.raises(AnalysisError):
            spacetime_norm(trace)
        with pytest.raises(AnalysisError):
            q_functional(trace, 2.0)


class TestCorrectionSplit:
    def test_parts_add_up(self):
        p = NonlinearityParams(gamma=0.2)
        tc = ThresholdConstants()
        f = gaussian(SPEC, 4.0, 1.0)
        split = correction_split(f, p, tc, ground_state_constants(3))
        assert split.total == pytest.approx(correction_X(f, p), rel=1e-12)
        assert split.large_part > 0

    @pytest.mark.parametrize("seed", range(5))
    def test_large_part_is_nonnegative_and_monotone_in_gamma(self, seed):
        tc = ThresholdConstants()
        constants = ground_state_constants(3)
        f = random_smooth(SPEC, seed, 1.0, 2.0)
        f = f * (4.0 / float(f.amplitude.max()))
        parts = [correction_split(f, NonlinearityParams(gamma=g), tc, constants).large_part for g in (0.01, 0.05, 0.1)]
        assert parts[0] >= 0
        assert parts == sorted(parts)

    def test_delta_bar(self):
        tc = ThresholdConstants(delta=0.05)
        assert delta_bar(tc, 0.0) == pytest.approx(0.05**1.01)
        assert delta_bar(tc, 0.5) < delta_bar(tc, 0.0)
