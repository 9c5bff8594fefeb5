"""
Closed-form ground state W, its scalings and the variational constants.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy import special

from nlslab.core.grid import (
    GridSpec,
    RadialField,
    build_basis,
    critical_exponent,
    laplacian,
    radial_derivative,
    sobolev_seminorm,
    sphere_area,
)
from nlslab.errors import FieldError, QuadratureError, ThresholdError

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 64
TARGET_RELATIVE_ERROR = 1e-8
_PANELS = 60
_FIRST_EDGE = 1e-2
_CUTOFF_FACTOR = 1e3


def ground_state(r: np.ndarray | float, dimension: int) -> np.ndarray:
    """W(r) = (1 + r^2/(n(n-2)))^{-(n-2)/2}."""
    scale = dimension * (dimension - 2)
    return (1.0 + np.square(r) / scale) ** (-(dimension - 2) / 2)


def ground_state_derivative(r: np.ndarray | float, dimension: int) -> np.ndarray:
    scale = dimension * (dimension - 2)
    r = np.asarray(r, dtype=float)
    return -(dimension - 2) * r / scale * (1.0 + r**2 / scale) ** (-dimension / 2)


def ground_state_profile(spec: GridSpec, scale: float = 1.0, phase: float = 0.0) -> RadialField:
    """Samples of e^{i theta} lambda^{-(n-2)/2} W(r / lambda)."""
    if not scale > 0:
        raise FieldError(f"Ground-state scale must be positive, got {scale}")
    basis = build_basis(spec)
    n = spec.dimension
    values = np.exp(1j * phase) * scale ** (-(n - 2) / 2) * ground_state(basis.nodes / scale, n)
    return RadialField(basis, values)


@dataclass(frozen=True)
class GroundStateConstants:
    dimension: int
    kinetic: float
    potential: float
    sobolev_constant: float
    critical_energy: float
    delta_ceiling: float
    resolution: int
    quadrature_error: float

    @property
    def critical_exponent(self) -> float:
        return critical_exponent(self.dimension)

    @property
    def critical_norm(self) -> float:
        """||W||_{L^{2*}}."""
        return self.potential ** (1.0 / self.critical_exponent)

    @property
    def delta_bound(self) -> float:
        """Upper end of the admissible delta range, ||grad W||^2 / (2 E~(W))."""
        return self.delta_ceiling / self.critical_energy

    def to_dict(self) -> dict[str, float | int]:
        data = asdict(self)
        data["critical_norm"] = self.critical_norm
        data["delta_bound"] = self.delta_bound
        return data


def _graded_integral(integrand, cutoff: float, resolution: int) -> float:
    points, weights = legendre.leggauss(resolution)
    edges = np.concatenate(([0.0], np.geomspace(_FIRST_EDGE, cutoff, _PANELS)))
    half = np.diff(edges) / 2
    centres = edges[:-1] + half
    radii = centres[:, None] + half[:, None] * points[None, :]
    return float(np.sum(half[:, None] * weights[None, :] * integrand(radii)))


def _beta_tail(a: float, b: float, cutoff_ratio: float) -> float:
    """Integral of x^{a-1}(1+x)^{-a-b} over [X, inf) via the regularized incomplete beta."""
    return float(special.beta(a, b) * special.betainc(b, a, 1.0 / (1.0 + cutoff_ratio)))


def _constants_at(dimension: int, resolution: int) -> tuple[float, float]:
    n = dimension
    omega = sphere_area(n)
    scale = n * (n - 2)
    cutoff = _CUTOFF_FACTOR * math.sqrt(scale)
    exponent = critical_exponent(n)

    kinetic = _graded_integral(
        lambda r: omega * ground_state_derivative(r, n) ** 2 * r ** (n - 1), cutoff, resolution
    )
    potential = _graded_integral(lambda r: omega * ground_state(r, n) ** exponent * r ** (n - 1), cutoff, resolution)

    # In x = r^2/(n(n-2)) both integrands become beta densities, so the tails are exact.
    ratio = cutoff**2 / scale
    kinetic += omega * (n - 2) ** 2 * scale ** (n / 2 - 1) / 2 * _beta_tail(n / 2 + 1, n / 2 - 1, ratio)
    potential += omega * scale ** (n / 2) / 2 * _beta_tail(n / 2, n / 2, ratio)
    return kinetic, potential


@functools.lru_cache(maxsize=16)
def ground_state_constants(dimension: int, resolution: int = DEFAULT_RESOLUTION) -> GroundStateConstants:
    GridSpec(dimension=dimension)
    if resolution < 1:
        raise QuadratureError(f"Quadrature resolution must be positive, got {resolution}")

    coarse = _constants_at(dimension, resolution)
    fine = _constants_at(dimension, 2 * resolution)
    error = max(abs(c - f) / abs(f) for c, f in zip(coarse, fine))
    if error > TARGET_RELATIVE_ERROR:
        raise QuadratureError(
            f"Resolution {resolution} too low for n={dimension}: two-resolution gap {error:.3e} "
            f"exceeds {TARGET_RELATIVE_ERROR:.0e}"
        )

    kinetic, potential = fine
    exponent = critical_exponent(dimension)
    constants = GroundStateConstants(
        dimension=dimension,
        kinetic=kinetic,
        potential=potential,
        sobolev_constant=potential ** (1.0 / exponent) / math.sqrt(kinetic),
        critical_energy=0.5 * kinetic - potential / exponent,
        delta_ceiling=0.5 * kinetic,
        resolution=resolution,
        quadrature_error=error,
    )
    logger.debug("Ground-state constants for n=%d: %s", dimension, constants)
    return constants


def fractional_sobolev_constant(dimension: int, s: float) -> float:
    """Sharp C in ||f||_{L^{2n/(n-2s)}} <= C ||D^s f||_{L^2}, 0 < s < n/2."""
    n = dimension
    if not 0 < s < n / 2:
        raise FieldError(f"Sobolev order s={s} outside (0, {n / 2})")
    ratio = math.gamma((n - 2 * s) / 2) / math.gamma((n + 2 * s) / 2)
    volume = (math.gamma(n) / math.gamma(n / 2)) ** (s / n)
    return 2.0 ** (-s) * math.pi ** (-s / 2) * math.sqrt(ratio) * volume


def _smooth_step(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        rise = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        fall = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return rise / (rise + fall)


def interior_window(r: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """C^inf taper equal to 1 on r <= inner and 0 on r >= outer."""
    return 1.0 - _smooth_step((np.asarray(r) - inner) / (outer - inner))


def tapered_ground_state(spec: GridSpec, start: float = 0.5, end: float = 0.9) -> RadialField:
    """Gridded W cut off smoothly between start * R_max and end * R_max.

    For n = 3 W is not in L^2, so the untapered samples leave a jump at the
    Dirichlet wall and a tenth of the mass in the boundary shell.
    """
    if not 0 < start < end <= 1:
        raise FieldError(f"Taper needs 0 < start < end <= 1, got start={start}, end={end}")
    f = ground_state_profile(spec)
    return f.with_values(f.values * interior_window(f.nodes, start * spec.r_max, end * spec.r_max))


def interior_deviation(f: RadialField, reference: RadialField, interior_fraction: float = 0.5) -> float:
    """||D(f - reference)|| / ||D reference||, both windowed to r <= interior_fraction * R_max.

    The H~^1 norm is twice the gradient norm, so this is the relative H~^1 deviation.
    """
    inner = interior_fraction * f.spec.r_max
    window = interior_window(f.nodes, inner, min(f.spec.r_max, 1.2 * inner))
    scale = sobolev_seminorm(reference.with_values(reference.values * window), 1.0)
    difference = sobolev_seminorm(f.with_values((f.values - reference.values) * window), 1.0)
    return difference / scale if scale > 0 else difference


def stationarity_residual(f: RadialField, interior_fraction: float = 0.5) -> float:
    """||Delta f + |f|^{4/(n-2)} f|| on r <= interior_fraction * R_max, relative to ||f||_{H^1} there.

    The field is windowed to zero before R_max so the Dirichlet wall does not
    pollute the spectral Laplacian with its Gibbs response.
    """
    if f.is_zero():
        return 0.0
    r_max = f.spec.r_max
    inner = interior_fraction * r_max
    window = interior_window(f.nodes, inner, min(r_max, 1.5 * inner))
    windowed = f.with_values(f.values * window)

    residual = laplacian(windowed).values + np.abs(f.values) ** f.spec.power * f.values
    gradient = radial_derivative(windowed)
    mask = f.nodes <= inner
    weights = f.basis.weights[mask]
    numerator = math.sqrt(float(np.dot(weights, np.abs(residual[mask]) ** 2)))
    denominator = math.sqrt(float(np.dot(weights, np.abs(gradient[mask]) ** 2)))
    if denominator == 0:
        return numerator
    return numerator / denominator


def remark_curve_F(y: float, constants: GroundStateConstants) -> float:
    """F(y) = y^2 / (2 C*^2) - y^{2*}/2*, the lower envelope of E~ at ||f||_{2*} = y."""
    if y < 0:
        raise ThresholdError(f"Curve argument must be non-negative, got y={y}")
    exponent = constants.critical_exponent
    return 0.5 * y**2 / constants.sobolev_constant**2 - y**exponent / exponent


def remark_curve_slope(y: float, constants: GroundStateConstants) -> float:
    exponent = constants.critical_exponent
    return y / constants.sobolev_constant**2 - y ** (exponent - 1)


__all__ = [
    "GroundStateConstants",
    "fractional_sobolev_constant",
    "ground_state",
    "ground_state_constants",
    "ground_state_derivative",
    "ground_state_profile",
    "interior_deviation",
    "interior_window",
    "remark_curve_F",
    "remark_curve_slope",
    "stationarity_residual",
    "tapered_ground_state",
]
