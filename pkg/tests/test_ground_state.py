import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlslab.core.grid import GridSpec, RadialField, build_basis, lp_norm
from nlslab.core.ground_state import (
    fractional_sobolev_constant,
    ground_state,
    ground_state_constants,
    ground_state_derivative,
    ground_state_profile,
    interior_deviation,
    interior_window,
    remark_curve_F,
    remark_curve_slope,
    stationarity_residual,
    tapered_ground_state,
)
from nlslab.errors import FieldError, GridError, QuadratureError, ThresholdError


def talenti_kinetic(n: int) -> float:
    """||grad W||^2 = S_n^{n/2} with S_n = pi n (n-2) (Gamma(n/2)/Gamma(n))^{2/n}."""
    sharp = math.pi * n * (n - 2) * (math.gamma(n / 2) / math.gamma(n)) ** (2 / n)
    return sharp ** (n / 2)


class TestProfile:
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_normalized_at_origin(self, n):
        assert ground_state(0.0, n) == pytest.approx(1.0)

    @given(r=st.floats(0.0, 50.0), n=st.sampled_from([3, 4, 5]))
    def test_derivative_matches_finite_difference(self, r, n):
        h = 1e-6
        numeric = (ground_state(r + h, n) - ground_state(max(r - h, 0.0), n)) / (r + h - max(r - h, 0.0))
        assert ground_state_derivative(r, n) == pytest.approx(numeric, abs=1e-6)

    def test_scaling_and_phase(self):
        spec = GridSpec(dimension=4, r_max=20.0, modes=64)
        base = ground_state_profile(spec)
        scaled = ground_state_profile(spec, scale=2.0, phase=math.pi / 2)
        expected = 1j * 0.5 * ground_state(build_basis(spec).nodes / 2.0, 4)
        np.testing.assert_allclose(scaled.values, expected, atol=1e-14)
        assert np.all(base.values.imag == 0)

    def test_rejects_non_positive_scale(self):
        with pytest.raises(FieldError):
            ground_state_profile(GridSpec(dimension=3, r_max=10.0, modes=16), scale=0.0)


class TestConstants:
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_kinetic_matches_closed_form(self, n):
        constants = ground_state_constants(n)
        assert constants.kinetic == pytest.approx(talenti_kinetic(n), rel=1e-8)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_pohozaev_and_energy(self, n):
        constants = ground_state_constants(n)
        assert constants.potential == pytest.approx(constants.kinetic, rel=1e-8)
        assert constants.critical_energy == pytest.approx(constants.kinetic / n, rel=1e-8)
        assert constants.delta_bound == pytest.approx(n / 2, rel=1e-8)
        assert constants.quadrature_error < 1e-8

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_sobolev_constant_matches_sharp_formula(self, n):
        constants = ground_state_constants(n)
        assert constants.sobolev_constant == pytest.approx(fractional_sobolev_constant(n, 1.0), rel=1e-8)

    def test_three_dimensional_values(self):
        constants = ground_state_constants(3)
        assert constants.kinetic == pytest.approx(12.82, abs=5e-3)
        assert constants.sobolev_constant == pytest.approx(0.4273, abs=5e-4)
        assert constants.critical_energy == pytest.approx(4.274, abs=5e-3)

    def test_to_dict_carries_derived_values(self):
        data = ground_state_constants(3).to_dict()
        assert data["delta_bound"] == pytest.approx(1.5)
        assert data["critical_norm"] > 0

    def test_bad_inputs(self):
        with pytest.raises(GridError):
            ground_state_constants(2)
        with pytest.raises(QuadratureError):
            ground_state_constants(3, resolution=0)

    def test_fractional_constant_range(self):
        with pytest.raises(FieldError):
            fractional_sobolev_constant(3, 1.5)
        assert fractional_sobolev_constant(5, 1.125) > 0


class TestVariationalCurve:
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_peak_at_ground_state(self, n):
        constants = ground_state_constants(n)
        y_w = constants.critical_norm
        assert remark_curve_F(y_w, constants) == pytest.approx(constants.critical_energy, rel=1e-8)
        assert remark_curve_slope(y_w, constants) == pytest.approx(0.0, abs=1e-8)
        assert remark_curve_F(0.5 * y_w, constants) < constants.critical_energy
        assert remark_curve_F(1.5 * y_w, constants) < constants.critical_energy

    def test_ground_state_field_norm(self):
        spec = GridSpec(dimension=5, r_max=40.0, modes=256)
        constants = ground_state_constants(5)
        norm = lp_norm(ground_state_profile(spec), constants.critical_exponent)
        assert norm == pytest.approx(constants.critical_norm, rel=1e-3)

    def test_negative_argument(self):
        with pytest.raises(ThresholdError):
            remark_curve_F(-1.0, ground_state_constants(3))


class TestStationarity:
    def test_ground_state_is_stationary(self):
        spec = GridSpec(dimension=5, r_max=40.0, modes=256)
        assert stationarity_residual(ground_state_profile(spec)) < 1e-4

    def test_gaussian_is_not(self):
        spec = GridSpec(dimension=5, r_max=40.0, modes=256)
        basis = build_basis(spec)
        gaussian = RadialField(basis, np.exp(-(basis.nodes**2) / 4))
        assert stationarity_residual(gaussian) > 0.1

    def test_zero_field(self):
        zero = RadialField.zeros(build_basis(GridSpec(dimension=3, r_max=10.0, modes=16)))
        assert stationarity_residual(zero) == 0.0

    def test_tapered_ground_state_is_stationary_in_three_dimensions(self):
        spec = GridSpec(dimension=3, r_max=40.0, modes=256)
        tapered = tapered_ground_state(spec)
        assert stationarity_residual(tapered, 0.25) < 1e-4
        np.testing.assert_allclose(tapered.values[tapered.nodes <= 20.0], ground_state_profile(spec).values[tapered.nodes <= 20.0])
        assert np.all(tapered.values[tapered.nodes >= 36.0] == 0.0)


class TestWindows:
    def test_interior_window(self):
        r = np.array([0.0, 5.0, 7.5, 10.0, 12.0])
        window = interior_window(r, 5.0, 10.0)
        assert window[0] == window[1] == 1.0
        assert window[3] == window[4] == 0.0
        assert window[2] == pytest.approx(0.5)

    def test_taper_bounds(self):
        with pytest.raises(FieldError):
            tapered_ground_state(GridSpec(dimension=3, r_max=20.0, modes=64), start=0.9, end=0.5)

    def test_interior_deviation(self):
        spec = GridSpec(dimension=3, r_max=40.0, modes=256)
        w = tapered_ground_state(spec)
        assert interior_deviation(w, w) == 0.0
        assert interior_deviation(w * 1.01, w, 0.25) == pytest.approx(0.01, rel=1e-9)
        assert interior_deviation(w * 0.5, tapered_ground_state(spec, 0.3, 0.9), 0.25) > 0.1
        # A change confined to the taper is invisible on the core.
        assert interior_deviation(tapered_ground_state(spec, 0.6, 0.9), w, 0.25) == 0.0
