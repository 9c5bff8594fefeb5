"""
Radial grid on a ball, Fourier-Bessel transforms and the norms built on them.

Fields are radial functions on B(0, R_max) in dimension n with a Dirichlet
wall at R_max. The discrete basis is the Bessel system r^{-nu} J_nu(k_j r)
collocated at scaled Bessel zeros, orthonormalized under Gauss-type weights so
that the transform pair is an exact isometry and the Laplacian stays diagonal
with eigenvalues (j_{nu,j} / R_max)^2.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg, optimize, special

from nlslab.errors import BasisError, FieldError, GridError

logger = logging.getLogger(__name__)

SUPPORTED_DIMENSIONS = (3, 4, 5)
MIN_MODES = 8
MAX_DERIVATIVE_ORDER = 3.0
DEFAULT_R_MAX = 40.0
DEFAULT_MODES = 512


def critical_exponent(dimension: int) -> float:
    """The energy-critical exponent 2n/(n-2)."""
    return 2.0 * dimension / (dimension - 2)


def sphere_area(dimension: int) -> float:
    """Surface area of the unit sphere S^{n-1}."""
    return 2.0 * math.pi ** (dimension / 2) / math.gamma(dimension / 2)


def sobolev_exponent(m: float, r: float, dimension: int) -> float:
    """m_r* with 1/m_r* = 1/r - m/n."""
    if r <= 0:
        raise GridError(f"Lebesgue exponent must be positive, got r={r}")
    if m >= dimension / r:
        raise GridError(f"Sobolev exponent undefined for m={m} >= n/r={dimension / r}")
    return 1.0 / (1.0 / r - m / dimension)


@dataclass(frozen=True)
class GridSpec:
    dimension: int = 3
    r_max: float = DEFAULT_R_MAX
    modes: int = DEFAULT_MODES

    def __post_init__(self) -> None:
        if self.dimension not in SUPPORTED_DIMENSIONS:
            raise GridError(f"Unsupported dimension n={self.dimension}; expected one of {SUPPORTED_DIMENSIONS}")
        if not (self.r_max > 0 and math.isfinite(self.r_max)):
            raise GridError(f"Ball radius must be positive and finite, got {self.r_max}")
        if self.modes < MIN_MODES:
            raise GridError(f"Mode count N={self.modes} is below the minimum {MIN_MODES}")

    @property
    def order(self) -> float:
        return self.dimension / 2 - 1

    @property
    def critical_exponent(self) -> float:
        return critical_exponent(self.dimension)

    @property
    def power(self) -> float:
        """Exponent 4/(n-2) of the energy-critical nonlinearity."""
        return 4.0 / (self.dimension - 2)

    @property
    def sphere_area(self) -> float:
        return sphere_area(self.dimension)

    def to_dict(self) -> dict[str, float | int]:
        return {"dimension": self.dimension, "r_max": self.r_max, "modes": self.modes}


def bessel_zeros(order: float, count: int) -> np.ndarray:
    """First `count` positive zeros of J_order for integer or half-integer order."""
    if count < 1:
        raise GridError(f"Need at least one zero, got count={count}")
    if float(order).is_integer():
        zeros = np.asarray(special.jn_zeros(int(order), count), dtype=float)
    elif float(2 * order).is_integer() and order > 0:
        zeros = _half_integer_zeros(order, count)
    else:
        raise BasisError(f"No zero solver for Bessel order {order}")

    if zeros.shape != (count,) or np.any(np.diff(zeros) <= 0) or zeros[0] <= 0:
        raise BasisError(f"Bessel zeros of order {order} are not strictly increasing")
    residual = np.max(np.abs(special.jv(order, zeros)))
    if not residual < 1e-9:
        raise BasisError(f"Bessel zeros of order {order} miss by {residual:.3e}")
    return zeros


def _half_integer_zeros(order: float, count: int) -> np.ndarray:
    # Zeros of J_{1/2} are m*pi; each higher order interlaces the previous one.
    steps = int(round(order - 0.5))
    zeros = np.pi * np.arange(1, count + steps + 1, dtype=float)
    current = 0.5
    for _ in range(steps):
        current += 1.0
        target = functools.partial(special.jv, current)
        try:
            zeros = np.array(
                [optimize.brentq(target, lo, hi, xtol=1e-14, maxiter=200) for lo, hi in zip(zeros[:-1], zeros[1:])]
            )
        except (ValueError, RuntimeError) as exc:
            raise BasisError(f"Bessel zero bracketing failed at order {current}") from exc
    return zeros[:count]


def _bessel_profile(order: float, wavenumbers: np.ndarray, radii: np.ndarray, shift: int = 0) -> np.ndarray:
    """Matrix r^{-nu} J_{nu+shift}(k r) with the r -> 0 limit filled in."""
    radii = np.asarray(radii, dtype=float)
    arg = np.outer(radii, wavenumbers)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = special.jv(order + shift, arg) / radii[:, None] ** order
    at_origin = radii == 0
    if np.any(at_origin):
        limit = (wavenumbers / 2) ** order / math.gamma(order + 1) if shift == 0 else np.zeros_like(wavenumbers)
        values[at_origin, :] = limit
    return values


@dataclass(frozen=True, eq=False)
class BesselBasis:
    """Immutable transform tables for one GridSpec; shareable across threads."""

    spec: GridSpec
    zeros: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    wavenumbers: np.ndarray
    eigenvalues: np.ndarray
    normalization: np.ndarray
    mixing: np.ndarray
    synthesis: np.ndarray
    analysis: np.ndarray
    derivative: np.ndarray

    @property
    def size(self) -> int:
        return self.spec.modes

    def raw_modes(self, radii: np.ndarray) -> np.ndarray:
        """Continuous Fourier-Bessel modes c_j r^{-nu} J_nu(k_j r) at arbitrary radii."""
        return _bessel_profile(self.spec.order, self.wavenumbers, radii) * self.normalization

    def evaluation_matrix(self, radii: np.ndarray) -> np.ndarray:
        """Maps coefficients to values of the interpolant at arbitrary radii."""
        return self.raw_modes(radii) @ self.mixing

    def mode(self, index: int) -> np.ndarray:
        """Samples of the index-th (1-based) orthonormal basis function."""
        if not 1 <= index <= self.size:
            raise FieldError(f"Mode index {index} outside 1..{self.size}")
        return self.synthesis[:, index - 1].copy()


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@functools.lru_cache(maxsize=8)
def build_basis(spec: GridSpec) -> BesselBasis:
    n, order, r_max, size = spec.dimension, spec.order, spec.r_max, spec.modes
    zeros = bessel_zeros(order, size + 1)
    roots, outer = zeros[:size], zeros[size]
    nodes = roots * r_max / outer
    omega = spec.sphere_area
    tail = special.jv(order + 1, roots)
    weights = 2.0 * omega * r_max**2 * nodes ** (n - 2) / (outer**2 * tail**2)
    wavenumbers = roots / r_max
    normalization = math.sqrt(2.0 / omega) / (r_max * np.abs(tail))

    raw = _bessel_profile(order, wavenumbers, nodes) * normalization
    gram = raw.T @ (weights[:, None] * raw)
    spectrum, vectors = linalg.eigh(gram)
    if not (spectrum.min() > 0.5 and spectrum.max() < 2.0):
        raise BasisError(
            f"Discrete Bessel system for n={n}, N={size} is not orthogonalizable "
            f"(Gram spectrum in [{spectrum.min():.3e}, {spectrum.max():.3e}])"
        )
    mixing = (vectors * spectrum**-0.5) @ vectors.T
    synthesis = raw @ mixing
    analysis = mixing @ (raw.T * weights)
    slope = -(normalization * wavenumbers) * _bessel_profile(order, wavenumbers, nodes, shift=1)
    derivative = slope @ mixing

    logger.info(
        "Built Bessel basis n=%d N=%d R_max=%g (Gram deviation %.2e)",
        n,
        size,
        r_max,
        float(np.max(np.abs(spectrum - 1.0))),
    )
    return BesselBasis(
        spec=spec,
        zeros=_freeze(zeros),
        nodes=_freeze(nodes),
        weights=_freeze(weights),
        wavenumbers=_freeze(wavenumbers),
        eigenvalues=_freeze(wavenumbers**2),
        normalization=_freeze(normalization),
        mixing=_freeze(mixing),
        synthesis=_freeze(synthesis),
        analysis=_freeze(analysis),
        derivative=_freeze(derivative),
    )


@dataclass(frozen=True, eq=False)
class RadialField:
    basis: BesselBasis
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.basis.size,):
            raise FieldError(f"Expected {self.basis.size} samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FieldError("Field contains non-finite samples")
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def zeros(cls, basis: BesselBasis) -> "RadialField":
        return cls(basis, np.zeros(basis.size, dtype=complex))

    @classmethod
    def from_function(cls, basis: BesselBasis, profile) -> "RadialField":
        return cls(basis, profile(basis.nodes))

    @property
    def spec(self) -> GridSpec:
        return self.basis.spec

    @property
    def nodes(self) -> np.ndarray:
        return self.basis.nodes

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.values)

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(self.basis, values)

    def conj(self) -> "RadialField":
        return self.with_values(np.conj(self.values))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __add__(self, other: "RadialField") -> "RadialField":
        _require_same_basis(self.basis, other.basis)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        _require_same_basis(self.basis, other.basis)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: complex) -> "RadialField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "RadialField":
        return self.with_values(-self.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    basis: BesselBasis
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        coefficients = np.array(self.coefficients, dtype=complex)
        if coefficients.shape != (self.basis.size,):
            raise FieldError(f"Expected {self.basis.size} coefficients, got shape {coefficients.shape}")
        object.__setattr__(self, "coefficients", _freeze(coefficients))


def _require_same_basis(left: BesselBasis, right: BesselBasis) -> None:
    if left is not right and left.spec != right.spec:
        raise FieldError(f"Basis mismatch: {left.spec} vs {right.spec}")


def to_spectral(f: RadialField, basis: BesselBasis | None = None) -> SpectralField:
    if basis is not None:
        _require_same_basis(basis, f.basis)
    return SpectralField(f.basis, f.basis.analysis @ f.values)


def from_spectral(c: SpectralField, basis: BesselBasis | None = None) -> RadialField:
    if basis is not None:
        _require_same_basis(basis, c.basis)
    return RadialField(c.basis, c.basis.synthesis @ c.coefficients)


def _check_order(s: float) -> None:
    if s < 0:
        raise FieldError(f"Derivative order must be non-negative, got s={s}")
    if s > MAX_DERIVATIVE_ORDER:
        raise FieldError(f"Derivative order s={s} exceeds {MAX_DERIVATIVE_ORDER}")


def fractional_derivative(f: RadialField, s: float) -> RadialField:
    """D^s f with multiplier lambda_j^{s/2} = |xi|^s."""
    _check_order(s)
    if s == 0:
        return f
    coefficients = to_spectral(f).coefficients * f.basis.eigenvalues ** (s / 2)
    return from_spectral(SpectralField(f.basis, coefficients))


def sobolev_seminorm(f: RadialField, s: float) -> float:
    """||D^s f||_{L^2} evaluated as a Parseval sum."""
    _check_order(s)
    coefficients = to_spectral(f).coefficients
    return float(math.sqrt(np.sum(f.basis.eigenvalues**s * np.abs(coefficients) ** 2)))


def laplacian(f: RadialField) -> RadialField:
    coefficients = -f.basis.eigenvalues * to_spectral(f).coefficients
    return from_spectral(SpectralField(f.basis, coefficients))


def radial_derivative(f: RadialField) -> np.ndarray:
    """Samples of d/dr f, differentiating the Bessel expansion exactly."""
    return f.basis.derivative @ to_spectral(f).coefficients


def free_propagator(f: RadialField, t: float) -> RadialField:
    """e^{it Delta} f: coefficients rotate by e^{-i t lambda_j}."""
    if not math.isfinite(t):
        raise FieldError(f"Propagation time must be finite, got {t}")
    if t == 0:
        return f
    coefficients = to_spectral(f).coefficients * np.exp(-1j * t * f.basis.eigenvalues)
    return from_spectral(SpectralField(f.basis, coefficients))


def integrate(basis: BesselBasis, density: np.ndarray) -> float:
    """Quadrature of a radial density over the ball with measure omega r^{n-1} dr."""
    return float(np.dot(basis.weights, np.real(density)))


def lp_norm(f: RadialField, p: float) -> float:
    if not p >= 1:
        raise FieldError(f"Lebesgue exponent must be >= 1, got p={p}")
    amplitude = f.amplitude
    if math.isinf(p):
        return float(amplitude.max(initial=0.0))
    if not amplitude.any():
        return 0.0
    return integrate(f.basis, amplitude**p) ** (1.0 / p)


def boundary_shell_fraction(f: RadialField, shell: float = 0.1) -> float:
    """Share of the L^2 mass carried by nodes with r >= (1 - shell) R_max."""
    density = f.amplitude**2
    total = integrate(f.basis, density)
    if total == 0:
        return 0.0
    outer = f.nodes >= (1.0 - shell) * f.spec.r_max
    return float(np.dot(f.basis.weights[outer], density[outer]) / total)


# Each entry holds a (16 N) x N evaluation matrix at the largest radii; keep few.
@functools.lru_cache(maxsize=4)
def ball_rule(basis: BesselBasis, radius: float, panel_order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on the ball |x| <= radius.

    Returns the matrix evaluating the spectral interpolant at the rule's radii
    and the matching weights (surface measure included).
    """
    if not 0 < radius <= basis.spec.r_max:
        raise FieldError(f"Ball radius {radius} outside (0, {basis.spec.r_max}]")
    points, base_weights = legendre.leggauss(panel_order)
    oscillations = basis.wavenumbers[-1] * radius / math.pi
    panels = max(4, int(math.ceil(oscillations)))
    edges = np.linspace(0.0, radius, panels + 1)
    half = np.diff(edges) / 2
    centres = edges[:-1] + half
    radii = (centres[:, None] + half[:, None] * points[None, :]).ravel()
    weights = (half[:, None] * base_weights[None, :]).ravel()
    weights = weights * basis.spec.sphere_area * radii ** (basis.spec.dimension - 1)
    matrix = basis.evaluation_matrix(radii)
    return _freeze(matrix), _freeze(weights)


def ball_values(f: RadialField, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Values of the interpolant of f on the Gauss rule of the ball, with weights."""
    matrix, weights = ball_rule(f.basis, float(f"{radius:.12g}"))
    return matrix @ to_spectral(f).coefficients, weights


def time_step_for(spec: GridSpec, max_phase: float = math.pi / 4) -> float:
    """Largest dt keeping the top free-propagator phase per step below max_phase."""
    basis = build_basis(spec)
    return max_phase / float(basis.eigenvalues[-1])


__all__ = [
    "BesselBasis",
    "GridSpec",
    "RadialField",
    "SpectralField",
    "ball_rule",
    "ball_values",
    "bessel_zeros",
    "boundary_shell_fraction",
    "build_basis",
    "critical_exponent",
    "fractional_derivative",
    "free_propagator",
    "from_spectral",
    "integrate",
    "laplacian",
    "lp_norm",
    "radial_derivative",
    "sobolev_exponent",
    "sobolev_seminorm",
    "sphere_area",
    "time_step_for",
]
