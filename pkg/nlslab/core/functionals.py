"""
Scalar functionals of a snapshot and the inequality chains built from them.

The nonlinearity is |u|^{4/(n-2)} u g(|u|) with g(s) = log^gamma(2 + s^2);
h = g - 1 and g~(y) = log^gamma(2 + y) (which is also g(sqrt(y))).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy import integrate as sp_integrate

from nlslab.core.grid import (
    SUPPORTED_DIMENSIONS,
    RadialField,
    ball_values,
    critical_exponent,
    fractional_derivative,
    integrate,
    lp_norm,
    sobolev_seminorm,
)
from nlslab.core.ground_state import GroundStateConstants, fractional_sobolev_constant
from nlslab.errors import AnalysisError, FieldError, GridError, QuadratureError, ThresholdError

if TYPE_CHECKING:
    from nlslab.core.evolution import Trace

logger = logging.getLogger(__name__)

# "<<" is read as "at most a tenth of".
MUCH_SMALLER = 0.1
# Numeric stand-in for the "a-"/"b+" exponent shifts.
EXPONENT_SHIFT = 0.01
SMALL_AMPLITUDE = 2.0


def _composite_unit_rule(panels: int = 19, order: int = 20) -> tuple[np.ndarray, np.ndarray]:
    # Geometric panels toward t=0 absorb the log singularity at t = -2/y.
    edges = np.concatenate(([0.0], np.geomspace(1e-9, 1.0, panels)))
    points, weights = legendre.leggauss(order)
    half = np.diff(edges) / 2
    centres = edges[:-1] + half
    nodes = (centres[:, None] + half[:, None] * points[None, :]).ravel()
    return nodes, (half[:, None] * weights[None, :]).ravel()


_UNIT_NODES, _UNIT_WEIGHTS = _composite_unit_rule()


def scaled_integral(upper: np.ndarray | float, weight: Callable[[np.ndarray], np.ndarray], beta: float) -> np.ndarray:
    """Vectorized int_0^upper weight(s) s^beta ds via s = upper * t."""
    upper = np.asarray(upper, dtype=float)
    samples = weight(upper[..., None] * _UNIT_NODES) * _UNIT_NODES**beta
    return upper ** (beta + 1) * (samples @ _UNIT_WEIGHTS)


@dataclass(frozen=True)
class NonlinearityParams:
    gamma: float = 0.0
    dimension: int = 3

    def __post_init__(self) -> None:
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise FieldError(f"gamma must be a finite non-negative number, got {self.gamma}")
        if self.dimension not in SUPPORTED_DIMENSIONS:
            raise GridError(f"Unsupported dimension n={self.dimension}")

    @property
    def critical_exponent(self) -> float:
        return critical_exponent(self.dimension)

    @property
    def power(self) -> float:
        return 4.0 / (self.dimension - 2)

    def g_tilde(self, y: np.ndarray | float) -> np.ndarray:
        """log^gamma(2 + y); equal to g(sqrt(y)), i.e. the g-breve of the text."""
        if self.gamma == 0:
            return np.ones_like(np.asarray(y, dtype=float))
        return np.log(2.0 + np.asarray(y, dtype=float)) ** self.gamma

    def g_tilde_prime(self, y: np.ndarray | float) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.gamma == 0:
            return np.zeros_like(y)
        return self.gamma * np.log(2.0 + y) ** (self.gamma - 1) / (2.0 + y)

    def g(self, amplitude: np.ndarray | float) -> np.ndarray:
        return self.g_tilde(np.square(amplitude))

    def h(self, amplitude: np.ndarray | float) -> np.ndarray:
        return self.g(amplitude) - 1.0


def g_of(amplitude: float, p: NonlinearityParams) -> float:
    if amplitude < 0:
        raise FieldError(f"Amplitude must be non-negative, got {amplitude}")
    return float(p.g(amplitude))


def g_breve(s: float, p: NonlinearityParams) -> float:
    return float(p.g_tilde(s))


def potential_density_F(amplitude: float, p: NonlinearityParams) -> float:
    """int_0^a s^{(n+2)/(n-2)} g(s) ds by adaptive quadrature."""
    if amplitude < 0:
        raise FieldError(f"Amplitude must be non-negative, got {amplitude}")
    if amplitude == 0:
        return 0.0
    exponent = p.critical_exponent - 1
    value, error, info = sp_integrate.quad(
        lambda s: s**exponent * float(p.g(s)), 0.0, amplitude, epsabs=0.0, epsrel=1e-12, limit=200, full_output=1
    )[:3]
    if not abs(error) <= 1e-10 * abs(value) + 1e-300:
        raise QuadratureError(f"F({amplitude}) did not converge (estimate {error:.3e}, {info.get('last')} intervals)")
    return float(value)


def correction_density(amplitude: np.ndarray, p: NonlinearityParams) -> np.ndarray:
    """Pointwise int_0^{|f|} h(s) s^{2*-1} ds."""
    amplitude = np.asarray(amplitude, dtype=float)
    if p.gamma == 0:
        return np.zeros_like(amplitude)
    return scaled_integral(amplitude, p.h, p.critical_exponent - 1)


def kinetic(f: RadialField) -> float:
    return sobolev_seminorm(f, 1.0) ** 2


def critical_power(f: RadialField) -> float:
    """||f||_{L^{2*}}^{2*}."""
    return integrate(f.basis, f.amplitude ** f.spec.critical_exponent)


def correction_X(f: RadialField, p: NonlinearityParams) -> float:
    return integrate(f.basis, correction_density(f.amplitude, p))


def critical_energy(f: RadialField) -> float:
    return 0.5 * kinetic(f) - critical_power(f) / f.spec.critical_exponent


def potential(f: RadialField, p: NonlinearityParams) -> float:
    """int F(f): the pure power part plus the log correction."""
    return critical_power(f) / f.spec.critical_exponent + correction_X(f, p)


def energy(f: RadialField, p: NonlinearityParams) -> float:
    return 0.5 * kinetic(f) - potential(f, p)


def functional_K(f: RadialField) -> float:
    return kinetic(f) - critical_power(f)


def mass(f: RadialField) -> float:
    return integrate(f.basis, f.amplitude**2)


def local_mass(f: RadialField, radius: float) -> float:
    """(int_{|x| <= R} |f|^2)^{1/2} from the spectral interpolant."""
    r_max = f.spec.r_max
    if not radius > 0:
        raise FieldError(f"Ball radius must be positive, got {radius}")
    if radius > r_max * (1 + 1e-12):
        raise FieldError(f"Ball radius {radius} exceeds R_max={r_max}")
    if f.is_zero():
        return 0.0
    if radius >= r_max:
        return math.sqrt(mass(f))
    values, weights = ball_values(f, radius)
    return math.sqrt(float(np.dot(weights, np.abs(values) ** 2)))


def mass_control_ratio(f: RadialField, radius: float) -> float:
    """local_mass / (R ||grad f||); bounded over any reasonable corpus."""
    gradient = sobolev_seminorm(f, 1.0)
    if gradient == 0:
        return 0.0
    return local_mass(f, radius) / (radius * gradient)


def htilde_norm(f: RadialField, k: float) -> float:
    """||D f|| + ||D^k f||."""
    if k < 1:
        raise FieldError(f"Regularity k must be >= 1, got {k}")
    return sobolev_seminorm(f, 1.0) + sobolev_seminorm(f, k)


@dataclass(frozen=True)
class EnergyReport:
    time: float
    mass: float
    kinetic: float
    potential: float
    energy: float
    critical_energy: float
    correction: float
    functional_k: float
    critical_power: float
    htilde_norm: float

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.__dataclass_fields__)

    def as_row(self) -> list[float]:
        return [getattr(self, name) for name in self.columns()]

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def energy_report(f: RadialField, p: NonlinearityParams, k: float, time: float = 0.0) -> EnergyReport:
    kin = kinetic(f)
    power = critical_power(f)
    correction = correction_X(f, p)
    exponent = f.spec.critical_exponent
    critical = 0.5 * kin - power / exponent
    return EnergyReport(
        time=time,
        mass=mass(f),
        kinetic=kin,
        potential=power / exponent + correction,
        energy=critical - correction,
        critical_energy=critical,
        correction=correction,
        functional_k=kin - power,
        critical_power=power,
        htilde_norm=htilde_norm(f, k),
    )


def sobolev_lower_bound(f: RadialField, constants: GroundStateConstants) -> float:
    """||grad f||^2 (1 - C*^2 ||f||_{2*}^{2*-2}), a lower bound for K~(f)."""
    exponent = f.spec.critical_exponent
    norm = lp_norm(f, exponent)
    return kinetic(f) * (1.0 - constants.sobolev_constant**2 * norm ** (exponent - 2))


def require_snapshots(trace: "Trace", minimum: int = 2) -> None:
    if len(trace.times) < minimum:
        raise AnalysisError(f"Need at least {minimum} snapshots, trace has {len(trace.times)}")


def default_spacetime_exponent(dimension: int) -> float:
    return 2.0 * (dimension + 2) / (dimension - 2)


def spacetime_density(fields: Sequence[RadialField], q: float) -> np.ndarray:
    """||u(t_i)||_{L^q}^q per snapshot."""
    return np.array([integrate(f.basis, f.amplitude**q) for f in fields])


def spacetime_norm(trace: "Trace", q: float | None = None) -> float:
    require_snapshots(trace)
    q = default_spacetime_exponent(trace.spec.dimension) if q is None else q
    density = spacetime_density(trace.fields, q)
    return float(sp_integrate.trapezoid(density, np.asarray(trace.times))) ** (1.0 / q)


def q_functional(trace: "Trace", k: float) -> float:
    """sup_t ||u||_{H~^k} plus the L^r_t L^r_x norms of D u and D^k u, r = 2(n+2)/n."""
    require_snapshots(trace)
    times = np.asarray(trace.times)
    r = 2.0 * (trace.spec.dimension + 2) / trace.spec.dimension
    sup_norm = max(htilde_norm(f, k) for f in trace.fields)
    total = sup_norm
    for order in (1.0, k):
        density = [lp_norm(fractional_derivative(f, order), r) ** r for f in trace.fields]
        total += float(sp_integrate.trapezoid(density, times)) ** (1.0 / r)
    return total


@dataclass(frozen=True)
class ThresholdConstants:
    delta: float = 0.05
    regularity: float = 2.0
    dimension: int = 3
    c_breve: float = 0.05
    C_breve: float = 20.0
    C_a: float = 1e3

    def __post_init__(self) -> None:
        if self.dimension not in SUPPORTED_DIMENSIONS:
            raise GridError(f"Unsupported dimension n={self.dimension}")
        if not self.delta > 0:
            raise ThresholdError(f"delta must be positive, got {self.delta}")
        if not self.regularity > 1:
            raise ThresholdError(f"Regularity k must exceed 1, got {self.regularity}")
        if not 0 < self.c_breve < 0.5:
            raise ThresholdError(f"c_breve must lie in (0, 1/2), got {self.c_breve}")
        if not self.C_breve > 0:
            raise ThresholdError(f"C_breve must be positive, got {self.C_breve}")
        if not self.C_a > 1:
            raise ThresholdError(f"C_a must exceed 1, got {self.C_a}")

    @property
    def critical_exponent(self) -> float:
        return critical_exponent(self.dimension)

    @property
    def k_bar(self) -> float:
        ceiling = (self.dimension + 2) / 4 - 1
        return 1.0 + min(self.regularity - 1, ceiling) / 2

    @property
    def k_bar_exponent(self) -> float:
        """k-bar_2* = 2n/(n - 2 k-bar)."""
        return 2.0 * self.dimension / (self.dimension - 2 * self.k_bar)

    @property
    def epsilon_breve(self) -> float:
        return self.c_breve * (self.k_bar_exponent - self.critical_exponent)

    @property
    def holder_exponent(self) -> float:
        return self.critical_exponent + 2 * self.epsilon_breve

    @property
    def theta(self) -> float:
        p1, p2, q = self.critical_exponent, self.k_bar_exponent, self.holder_exponent
        return p1 * (p2 - q) / (q * (p2 - p1))

    def h_breve_factor(self, gamma: float) -> float:
        return (self.C_breve / self.epsilon_breve) ** gamma

    def h_breve(self, s: np.ndarray | float, gamma: float) -> np.ndarray:
        """(C/eps)^gamma log^gamma(2 + s) - 1."""
        s = np.asarray(s, dtype=float)
        if gamma == 0:
            return np.zeros_like(s)
        return self.h_breve_factor(gamma) * np.log(2.0 + s) ** gamma - 1.0

    def to_dict(self) -> dict[str, float]:
        data = asdict(self)
        data.update(
            k_bar=self.k_bar,
            epsilon_breve=self.epsilon_breve,
            theta=self.theta,
            much_smaller=MUCH_SMALLER,
        )
        return data


def _monotone_chain(lines: Sequence[float], tolerance: float = 1e-9) -> list[int]:
    return [i for i in range(len(lines) - 1) if lines[i] > lines[i + 1] * (1 + tolerance) + 1e-300]


@dataclass(frozen=True)
class JensenChain:
    labels: tuple[str, ...]
    lines: tuple[float, ...]
    violations: tuple[int, ...] = field(default=())

    @property
    def lhs(self) -> float:
        return self.lines[0]

    @property
    def rhs(self) -> float:
        return self.lines[-1]

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, object]:
        return {"lines": dict(zip(self.labels, self.lines)), "violations": list(self.violations), "holds": self.holds}


JENSEN_LABELS = (
    "X2",
    "pointwise_jensen",
    "spatial_jensen",
    "holder",
    "sobolev",
    "final_shape",
)


def jensen_chain_check(f: RadialField, p: NonlinearityParams, tc: ThresholdConstants) -> JensenChain:
    """X_2(f) bounded through the two Jensen steps, Holder and Sobolev, line by line."""
    gamma = p.gamma
    exponent = f.spec.critical_exponent
    q = tc.holder_exponent
    eps = tc.epsilon_breve
    amplitude = f.amplitude
    large = amplitude >= SMALL_AMPLITUDE
    weights = f.basis.weights

    x2 = float(np.dot(weights[large], correction_density(amplitude[large], p)))
    if gamma == 0:
        lines = (x2,) + (0.0,) * (len(JENSEN_LABELS) - 1)
        return JensenChain(JENSEN_LABELS, lines, tuple(_monotone_chain(lines)))

    ratio = exponent / q * amplitude[large] ** (2 * eps)
    pointwise = float(np.dot(weights[large], amplitude[large] ** exponent / exponent * tc.h_breve(ratio, gamma)))

    power = critical_power(f)
    if power == 0:
        lines = (x2, pointwise, 0.0, 0.0, 0.0, 0.0)
        return JensenChain(JENSEN_LABELS, lines, tuple(_monotone_chain(lines)))

    high = integrate(f.basis, amplitude**q)
    spatial = power / exponent * float(tc.h_breve(exponent / q * high / power, gamma))

    norm_critical = power ** (1.0 / exponent)
    upper_exponent = q * (1 - tc.theta)
    lower_exponent = exponent - q * tc.theta
    holder_arg = exponent / q * lp_norm(f, tc.k_bar_exponent) ** upper_exponent / norm_critical**lower_exponent
    holder = power / exponent * float(tc.h_breve(holder_arg, gamma))

    sobolev_factor = fractional_sobolev_constant(f.spec.dimension, tc.k_bar) * htilde_norm(f, tc.regularity)
    sobolev_arg = exponent / q * sobolev_factor**upper_exponent / norm_critical**lower_exponent
    sobolev = power / exponent * float(tc.h_breve(sobolev_arg, gamma))

    shape_exponent = max(0.5, 2 * tc.c_breve * tc.k_bar_exponent)
    shape_arg = (
        exponent / q * max(1.0, sobolev_factor) ** shape_exponent / norm_critical ** (2 * tc.c_breve * exponent)
    )
    final = power / exponent * float(tc.h_breve(shape_arg, gamma))

    lines = (x2, pointwise, spatial, holder, sobolev, final)
    violations = _monotone_chain(lines)
    if violations:
        logger.warning("Jensen chain broken at steps %s: %s", violations, lines)
    return JensenChain(JENSEN_LABELS, lines, tuple(violations))


def dyadic_scales(m: float, depth: int) -> np.ndarray:
    """m' = 2^{-j} m for j = 0..depth."""
    if not m > 0 or depth < 0:
        raise AnalysisError(f"Dyadic family needs m > 0 and depth >= 0, got m={m}, depth={depth}")
    return m * 2.0 ** -np.arange(depth + 1)


def dyadic_measure_weights(r: np.ndarray, m: float, depth: int) -> np.ndarray:
    """Density of sum_{m'} (m'/|x|) 1_{|x| >= m'} at the radii r."""
    scales = dyadic_scales(m, depth)
    r = np.asarray(r, dtype=float)
    active = r[:, None] >= scales[None, :]
    return np.sum(np.where(active, scales[None, :] / r[:, None], 0.0), axis=1)


@dataclass(frozen=True)
class HolderCheck:
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-10) + 1e-300


def measure_holder_check(f: RadialField, m: float, depth: int, tc: ThresholdConstants) -> HolderCheck:
    """||f||_{L^q(mu)} <= ||f||^theta_{L^{2*}(mu)} ||f||^{1-theta}_{L^{k-bar 2*}(mu)}, q = 2* + 2 eps."""
    density = dyadic_measure_weights(f.nodes, m, depth) * f.basis.weights
    if not np.any(density > 0):
        raise AnalysisError(f"Measure for m={m}, depth={depth} has no mass on the grid")
    amplitude = f.amplitude

    def weighted_norm(exponent: float) -> float:
        return float(np.dot(density, amplitude**exponent)) ** (1.0 / exponent)

    lhs = weighted_norm(tc.holder_exponent)
    rhs = weighted_norm(tc.critical_exponent) ** tc.theta * weighted_norm(tc.k_bar_exponent) ** (1 - tc.theta)
    return HolderCheck(lhs=lhs, rhs=rhs)


def weighted_potential_Z(f: RadialField, m: float, depth: int, p: NonlinearityParams) -> float:
    """Z = int |f|^{2*} g(|f|) d mu over the dyadic measure."""
    density = dyadic_measure_weights(f.nodes, m, depth) * f.basis.weights
    amplitude = f.amplitude
    return float(np.dot(density, amplitude**f.spec.critical_exponent * p.g(amplitude)))


def hardy_sum(f: RadialField, m: float, depth: int) -> float:
    density = dyadic_measure_weights(f.nodes, m, depth) * f.basis.weights
    return float(np.dot(density, f.amplitude**2 / f.nodes**2))


@dataclass(frozen=True)
class CorrectionSplit:
    small_part: float
    large_part: float
    delta_bar: float
    above_delta_bar: bool
    bound: float

    @property
    def total(self) -> float:
        return self.small_part + self.large_part

    @property
    def bound_holds(self) -> bool:
        return self.total <= self.bound

    def to_dict(self) -> dict[str, float | bool]:
        data = asdict(self)
        data.update(total=self.total, bound_holds=self.bound_holds)
        return data


def delta_bar(tc: ThresholdConstants, gamma: float) -> float:
    scaled = (tc.epsilon_breve / tc.C_breve) ** gamma * tc.delta
    return scaled ** (1 + EXPONENT_SHIFT) if scaled <= MUCH_SMALLER else scaled


def correction_split(
    f: RadialField, p: NonlinearityParams, tc: ThresholdConstants, constants: GroundStateConstants
) -> CorrectionSplit:
    """X = X_1 (|f| < 2) + X_2 (|f| >= 2) with the delta-bar case split and X <= delta E~(W)."""
    density = correction_density(f.amplitude, p)
    large = f.amplitude >= SMALL_AMPLITUDE
    weights = f.basis.weights
    threshold = delta_bar(tc, p.gamma)
    return CorrectionSplit(
        small_part=float(np.dot(weights[~large], density[~large])),
        large_part=float(np.dot(weights[large], density[large])),
        delta_bar=threshold,
        above_delta_bar=critical_power(f) >= threshold,
        bound=tc.delta * constants.critical_energy,
    )


__all__ = [
    "CorrectionSplit",
    "EnergyReport",
    "HolderCheck",
    "JensenChain",
    "NonlinearityParams",
    "ThresholdConstants",
    "correction_X",
    "correction_density",
    "correction_split",
    "critical_energy",
    "critical_power",
    "default_spacetime_exponent",
    "delta_bar",
    "dyadic_measure_weights",
    "dyadic_scales",
    "energy",
    "energy_report",
    "functional_K",
    "g_breve",
    "g_of",
    "hardy_sum",
    "htilde_norm",
    "jensen_chain_check",
    "kinetic",
    "local_mass",
    "mass",
    "mass_control_ratio",
    "measure_holder_check",
    "potential",
    "potential_density_F",
    "q_functional",
    "require_snapshots",
    "scaled_integral",
    "sobolev_lower_bound",
    "spacetime_density",
    "spacetime_norm",
    "weighted_potential_Z",
]
