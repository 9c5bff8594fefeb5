import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlslab.core.evolution import EvolutionParams, evolve
from nlslab.core.functionals import NonlinearityParams, ThresholdConstants, functional_K, kinetic
from nlslab.core.grid import GridSpec, RadialField, build_basis
from nlslab.core.virial import (
    PLATEAU,
    H_of,
    H_values,
    build_weight,
    cutoff,
    identity_rhs,
    phi_derivatives,
    virial_functional,
    virial_error_constants,
    virial_identity_residual,
    virial_rhs,
)
from nlslab.errors import AnalysisError
from nlslab.runner.initial_data import gaussian

SPEC = GridSpec(dimension=3, r_max=20.0, modes=64)
TC = ThresholdConstants(dimension=3)


class TestWeight:
    def test_plateau(self):
        assert PLATEAU == pytest.approx(2.2, rel=1e-14)
        np.testing.assert_allclose(phi_derivatives(np.array([2.0, 3.0, 7.5]))[0], PLATEAU)

    @pytest.mark.parametrize("joint, side", [(1.0, 1.0), (2.0, -1.0)])
    def test_continuous_to_third_order(self, joint, side):
        # The joint itself evaluates the inner (rho <= 1) or plateau (rho >= 2) branch.
        exact, blend = phi_derivatives(np.array([joint, joint + side * 1e-12])).T
        np.testing.assert_allclose(blend[:4], exact[:4], atol=1e-9)
        assert abs(blend[4] - exact[4]) > 100.0

    def test_inner_region_is_quadratic(self):
        rho = np.linspace(0.1, 1.0, 7)
        phi, d1, d2, d3, d4 = phi_derivatives(rho)
        np.testing.assert_allclose(phi, rho**2)
        np.testing.assert_allclose(d1, 2 * rho)
        assert np.all(d2 == 2.0) and np.all(d3 == 0.0) and np.all(d4 == 0.0)

    def test_cutoff(self):
        values = cutoff(np.linspace(0.0, 3.0, 61))
        assert values[0] == 1.0 and values[-1] == 0.0
        assert np.all(np.diff(values) <= 0)
        assert cutoff(np.array([1.5]))[0] == pytest.approx(0.5)

    def test_weight_on_grid(self):
        w = build_weight(5.0, SPEC)
        inner = build_basis(SPEC).nodes <= 5.0
        np.testing.assert_allclose(w.a[inner], build_basis(SPEC).nodes[inner] ** 2)
        assert np.all(w.laplacian[inner] == 6.0)
        assert w.to_dict()["plateau"] == pytest.approx(PLATEAU * 25)

    @pytest.mark.parametrize("m", [0.0, -1.0, 10.0, 12.0])
    def test_scale_must_fit_inside_the_ball(self, m):
        with pytest.raises(AnalysisError):
            build_weight(m, SPEC)


class TestH:
    @given(
        y=st.floats(0.0, 50.0),
        gamma=st.floats(0.0, 1.0),
        n=st.sampled_from([3, 4, 5]),
    )
    def test_forms_agree(self, y, gamma, n):
        first, second = H_of(y, NonlinearityParams(gamma=gamma, dimension=n))
        assert first == pytest.approx(second, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_pure_power_limit(self, n):
        y = np.array([0.0, 0.5, 2.0, 9.0])
        expected = -(2.0 / n) * y ** (n / (n - 2))
        np.testing.assert_allclose(H_values(y, NonlinearityParams(gamma=0.0, dimension=n)), expected, atol=1e-12)

    def test_domain_and_form(self):
        p = NonlinearityParams(gamma=0.1, dimension=3)
        with pytest.raises(AnalysisError):
            H_values(-1.0, p)
        with pytest.raises(AnalysisError):
            H_values(1.0, p, form=3)


class TestIdentity:
    """Fields supported well inside r < m see a = r^2, where the identity reduces to 8 K."""

    def test_linear_part_is_eight_kinetic(self):
        f = gaussian(SPEC, 0.7, 1.5)
        w = build_weight(8.0, SPEC)
        assert identity_rhs(f, w, NonlinearityParams(gamma=0.1, dimension=3), nonlinear=False) == pytest.approx(
            8.0 * kinetic(f), rel=1e-8
        )

    def test_pure_power_is_eight_K(self):
        f = gaussian(SPEC, 0.7, 1.5)
        w = build_weight(8.0, SPEC)
        assert identity_rhs(f, w, NonlinearityParams(gamma=0.0, dimension=3)) == pytest.approx(
            8.0 * functional_K(f), rel=1e-8
        )

    def test_real_field_has_no_momentum(self):
        assert virial_functional(gaussian(SPEC, 0.7, 1.5), build_weight(5.0, SPEC)) == pytest.approx(0.0, abs=1e-14)

    def test_grid_mismatch(self):
        other = GridSpec(dimension=3, r_max=20.0, modes=32)
        with pytest.raises(AnalysisError):
            identity_rhs(gaussian(other, 0.5, 2.0), build_weight(5.0, SPEC), NonlinearityParams())

    def test_zero_field_row(self):
        zero = RadialField.zeros(build_basis(SPEC))
        row = virial_rhs(zero, build_weight(5.0, SPEC), NonlinearityParams(), TC)
        assert row.M_a == 0.0 and row.identity_rhs == 0.0 and row.h_term == 0.0

    def test_virial_inequality_holds(self):
        f = gaussian(SPEC, 0.7, 1.5)
        for m in (3.0, 5.0, 8.0):
            row = virial_rhs(f, build_weight(m, SPEC), NonlinearityParams(gamma=0.1, dimension=3), TC)
            assert row.inequality_holds
        # Well inside r < m the identity falls short of the bound by exactly 4(n - 2) X_m,
        # which C_X X_m pays back; the tail term C_Y Y_m is all that is left.
        c_x, c_y = virial_error_constants(3)
        assert c_x == 4.0
        inner = virial_rhs(f, build_weight(8.0, SPEC), NonlinearityParams(gamma=0.1, dimension=3), TC)
        assert inner.X_m > 0
        assert inner.inequality_margin == pytest.approx(c_y * inner.Y_m, abs=1e-7 * max(1.0, abs(inner.identity_rhs)))

    def test_row_quantities(self):
        f = gaussian(SPEC, 0.7, 1.5)
        row = virial_rhs(f, build_weight(5.0, SPEC), NonlinearityParams(gamma=0.1, dimension=3), TC, time=0.5)
        assert row.time == 0.5
        assert row.kmon_holds
        assert 0 < row.kmon_c2 < 1
        assert row.X_m >= 0 and row.Y_m >= 0
        assert len(row.as_row()) == len(row.columns())


class TestResidual:
    def test_numerical_derivative_matches_identity(self):
        p = NonlinearityParams(gamma=0.05, dimension=3)
        trace = evolve(gaussian(SPEC, 0.5, 2.0), EvolutionParams(nonlinearity=p, t_end=0.2, snapshot_stride=2))
        report = virial_identity_residual(trace, 5.0)
        assert len(report.residuals) == len(trace.times) - 2
        scale = max(abs(value) for value in report.derivative)
        assert scale > 1.0
        assert report.max_residual < 1e-2 * scale
        assert report.kmon_holds
        assert report.to_dict()["m"] == 5.0

    def test_residual_falls_fourfold_when_spacing_halves(self):
        p = NonlinearityParams(gamma=0.05, dimension=3)
        params = {"nonlinearity": p, "t_end": 1.28, "dt": 0.01}
        u0 = gaussian(SPEC, 0.5, 2.0)
        coarse, fine = (
            virial_identity_residual(evolve(u0, EvolutionParams(snapshot_stride=stride, **params)), 5.0) for stride in (16, 8)
        )
        fine_at = dict(zip(fine.interior_times, fine.residuals))
        shared = max(fine_at[t] for t in coarse.interior_times)
        assert coarse.max_residual / shared >= 1.4
        assert coarse.inequality_holds and fine.inequality_holds

    def test_needs_three_snapshots(self):
        trace = evolve(gaussian(SPEC, 0.5, 2.0), EvolutionParams(nonlinearity=NonlinearityParams(), t_end=0.0))
        with pytest.raises(AnalysisError):
            virial_identity_residual(trace, 5.0)
