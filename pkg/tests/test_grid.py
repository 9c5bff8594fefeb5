"""
Fourier-Bessel grid: transforms, norms and the free propagator.

Oracles are scipy quadrature on closed-form Gaussians, which are band-limited
to double precision on these grids.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from nlslab.core.grid import (
    GridSpec,
    RadialField,
    SpectralField,
    ball_rule,
    ball_values,
    bessel_zeros,
    boundary_shell_fraction,
    build_basis,
    critical_exponent,
    fractional_derivative,
    free_propagator,
    from_spectral,
    laplacian,
    lp_norm,
    radial_derivative,
    sobolev_exponent,
    sobolev_seminorm,
    sphere_area,
    time_step_for,
    to_spectral,
)
from nlslab.errors import FieldError, GridError

SPECS = [GridSpec(dimension=n, r_max=20.0, modes=64) for n in (3, 4, 5)]


def gaussian_field(spec: GridSpec, amplitude: float = 1.0, width: float = 2.0) -> RadialField:
    basis = build_basis(spec)
    return RadialField(basis, amplitude * np.exp(-((basis.nodes / width) ** 2)))


def radial_quad(spec: GridSpec, density, upper: float | None = None) -> float:
    upper = spec.r_max if upper is None else upper
    value, _ = integrate.quad(lambda r: density(r) * r ** (spec.dimension - 1), 0.0, upper, limit=200, epsabs=1e-14)
    return sphere_area(spec.dimension) * value


class TestGridSpec:
    @pytest.mark.parametrize("kwargs", [{"dimension": 2}, {"dimension": 6}, {"modes": 4}, {"r_max": 0.0}, {"r_max": math.inf}])
    def test_rejects_bad_grids(self, kwargs):
        with pytest.raises(GridError):
            GridSpec(**kwargs)

    def test_derived_exponents(self):
        spec = GridSpec(dimension=3, r_max=10.0, modes=16)
        assert spec.critical_exponent == pytest.approx(6.0)
        assert spec.power == pytest.approx(4.0)
        assert spec.order == pytest.approx(0.5)
        assert critical_exponent(5) == pytest.approx(10 / 3)

    def test_sphere_area(self):
        assert sphere_area(3) == pytest.approx(4 * math.pi)
        assert sphere_area(4) == pytest.approx(2 * math.pi**2)

    def test_sobolev_exponent(self):
        assert sobolev_exponent(1.0, 2.0, 3) == pytest.approx(6.0)
        with pytest.raises(GridError):
            sobolev_exponent(1.5, 2.0, 3)


class TestBesselZeros:
    @pytest.mark.parametrize("order", [0.5, 1.0, 1.5])
    def test_zeros_are_roots(self, order):
        zeros = bessel_zeros(order, 40)
        assert np.all(np.diff(zeros) > 0)
        assert np.max(np.abs(special.jv(order, zeros))) < 1e-9

    def test_half_order_zeros_are_multiples_of_pi(self):
        np.testing.assert_allclose(bessel_zeros(0.5, 10), np.pi * np.arange(1, 11), rtol=1e-14)

    def test_rejects_empty_request(self):
        with pytest.raises(GridError):
            bessel_zeros(1.0, 0)


class TestTransforms:
    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"n{s.dimension}")
    def test_eigenvalues_match_scaled_zeros(self, spec):
        basis = build_basis(spec)
        np.testing.assert_allclose(basis.eigenvalues, (basis.zeros[: spec.modes] / spec.r_max) ** 2, rtol=1e-14)

    @settings(deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dimension=st.sampled_from([3, 4, 5]))
    def test_round_trip_and_parseval(self, seed, dimension):
        spec = GridSpec(dimension=dimension, r_max=20.0, modes=64)
        basis = build_basis(spec)
        rng = np.random.default_rng(seed)
        coefficients = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        field = from_spectral(SpectralField(basis, coefficients))
        back = to_spectral(field).coefficients
        np.testing.assert_allclose(back, coefficients, atol=1e-10 * np.max(np.abs(coefficients)))
        mass = float(np.dot(basis.weights, np.abs(field.values) ** 2))
        assert mass == pytest.approx(float(np.sum(np.abs(coefficients) ** 2)), rel=1e-10)

    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"n{s.dimension}")
    def test_laplacian_is_diagonal(self, spec):
        basis = build_basis(spec)
        for index in (1, 7, 30):
            mode = RadialField(basis, basis.mode(index))
            np.testing.assert_allclose(
                laplacian(mode).values, -basis.eigenvalues[index - 1] * mode.values, atol=1e-9 * basis.eigenvalues[index - 1]
            )

    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"n{s.dimension}")
    def test_laplacian_against_finite_differences(self, spec):
        f = gaussian_field(spec)
        r = f.nodes[(f.nodes > 1.0) & (f.nodes < 8.0)]
        spectral = laplacian(f).values[(f.nodes > 1.0) & (f.nodes < 8.0)].real

        def u(x):
            return np.exp(-(x**2) / 4)

        def error(h: float) -> float:
            second = (u(r + h) - 2 * u(r) + u(r - h)) / h**2
            first = (u(r + h) - u(r - h)) / (2 * h)
            return float(np.max(np.abs(spectral - second - (spec.dimension - 1) / r * first)))

        assert error(1e-2) < 1e-4
        assert error(1e-2) / error(5e-3) == pytest.approx(4.0, rel=0.1)

    def test_mode_index_is_checked(self):
        basis = build_basis(SPECS[0])
        with pytest.raises(FieldError):
            basis.mode(0)

    def test_field_shape_is_checked(self):
        with pytest.raises(FieldError):
            RadialField(build_basis(SPECS[0]), np.zeros(3))

    def test_non_finite_samples_rejected(self):
        values = np.zeros(64)
        values[3] = np.nan
        with pytest.raises(FieldError):
            RadialField(build_basis(SPECS[0]), values)


class TestNorms:
    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"n{s.dimension}")
    def test_mass_and_kinetic_against_quadrature(self, spec):
        f = gaussian_field(spec, 0.7, 2.0)
        mass = radial_quad(spec, lambda r: (0.7 * math.exp(-(r**2) / 4)) ** 2)
        gradient = radial_quad(spec, lambda r: (0.7 * r / 2 * math.exp(-(r**2) / 4)) ** 2)
        assert sobolev_seminorm(f, 0.0) ** 2 == pytest.approx(mass, rel=1e-9)
        assert sobolev_seminorm(f, 1.0) ** 2 == pytest.approx(gradient, rel=1e-8)

    def test_lp_norm_against_quadrature(self):
        spec = SPECS[0]
        f = gaussian_field(spec)
        expected = radial_quad(spec, lambda r: math.exp(-6 * r**2 / 4)) ** (1 / 6)
        assert lp_norm(f, 6.0) == pytest.approx(expected, rel=1e-9)
        assert lp_norm(f, math.inf) == pytest.approx(float(f.amplitude.max()))
        with pytest.raises(FieldError):
            lp_norm(f, 0.5)

    def test_zero_field(self):
        basis = build_basis(SPECS[1])
        zero = RadialField.zeros(basis)
        assert zero.is_zero()
        assert lp_norm(zero, 4.0) == 0.0
        assert sobolev_seminorm(zero, 2.0) == 0.0
        assert boundary_shell_fraction(zero) == 0.0

    def test_radial_derivative_of_gaussian(self):
        spec = SPECS[0]
        f = gaussian_field(spec)
        r = f.nodes
        np.testing.assert_allclose(radial_derivative(f), -r / 2 * np.exp(-(r**2) / 4), atol=1e-9)

    def test_fractional_derivative_orders(self):
        f = gaussian_field(SPECS[0])
        assert fractional_derivative(f, 0.0) is f
        assert sobolev_seminorm(fractional_derivative(f, 1.0), 0.0) == pytest.approx(sobolev_seminorm(f, 1.0), rel=1e-10)
        for s in (-0.5, 3.5):
            with pytest.raises(FieldError):
                fractional_derivative(f, s)

    def test_ball_values_integrate_the_inner_mass(self):
        spec = SPECS[0]
        f = gaussian_field(spec)
        values, weights = ball_values(f, 5.0)
        expected = radial_quad(spec, lambda r: math.exp(-(r**2) / 2), upper=5.0)
        assert float(np.dot(weights, np.abs(values) ** 2)) == pytest.approx(expected, rel=1e-9)

    def test_ball_rules_are_shared_between_nearby_radii(self):
        f = gaussian_field(SPECS[0])
        ball_values(f, 5.0)
        before = ball_rule.cache_info()
        ball_values(f, 5.0 * (1 + 1e-15))
        after = ball_rule.cache_info()
        assert after.hits == before.hits + 1
        assert after.currsize <= after.maxsize <= 4

    def test_boundary_shell_fraction(self):
        spec = SPECS[0]
        assert boundary_shell_fraction(gaussian_field(spec)) < 1e-12
        basis = build_basis(spec)
        ring = RadialField(basis, np.exp(-((basis.nodes - 19.0) ** 2)))
        assert boundary_shell_fraction(ring) > 0.5


class TestFreePropagator:
    @settings(deadline=None)
    @given(t=st.floats(-5.0, 5.0, allow_nan=False), s=st.sampled_from([0.0, 1.0, 2.0]))
    def test_isometry(self, t, s):
        f = gaussian_field(SPECS[0])
        assert sobolev_seminorm(free_propagator(f, t), s) == pytest.approx(sobolev_seminorm(f, s), rel=1e-10)

    def test_group_law(self):
        f = gaussian_field(SPECS[2])
        composed = free_propagator(free_propagator(f, 0.3), 0.4)
        direct = free_propagator(f, 0.7)
        np.testing.assert_allclose(composed.values, direct.values, atol=1e-10)

    def test_backward_undoes_forward(self):
        f = gaussian_field(SPECS[1])
        back = free_propagator(free_propagator(f, 1.5), -1.5)
        np.testing.assert_allclose(back.values, f.values, atol=1e-10)

    def test_rejects_infinite_time(self):
        with pytest.raises(FieldError):
            free_propagator(gaussian_field(SPECS[0]), math.inf)

    def test_default_time_step(self):
        spec = SPECS[0]
        assert time_step_for(spec) == pytest.approx((math.pi / 4) / build_basis(spec).eigenvalues[-1])
