"""
Hypothesis checks on initial data and the trapping inequalities along a run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
from scipy import optimize

from nlslab.core.functionals import (
    MUCH_SMALLER,
    CorrectionSplit,
    NonlinearityParams,
    ThresholdConstants,
    correction_split,
    energy_report,
)
from nlslab.core.grid import RadialField, critical_exponent
from nlslab.core.ground_state import GroundStateConstants, ground_state_constants, remark_curve_F
from nlslab.errors import ThresholdError

if TYPE_CHECKING:
    from nlslab.core.evolution import Trace

logger = logging.getLogger(__name__)

# Below this k the low-regularity form of the smallness condition applies.
LOW_REGULARITY_CUTOFF = 1.1
SIZE_FLOOR = MUCH_SMALLER
_LOG10_MAX = math.log10(np.finfo(float).max)


class SmallnessRegime(str, Enum):
    LOW_REGULARITY = "Ass1"
    GENERIC = "Ass2"


@dataclass(frozen=True)
class GammaSmallness:
    regime: SmallnessRegime
    lhs: float
    margin: float
    log10_log10_tower: float
    log10_lhs_plus_one: float

    @property
    def passes(self) -> bool:
        return self.margin > 0

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["regime"] = self.regime.value
        data["passes"] = self.passes
        return data


def _pow10(exponent: float) -> float:
    return math.inf if exponent > _LOG10_MAX else 10.0**exponent


def _require_delta(delta: float, constants: GroundStateConstants) -> None:
    if not 0 < delta < constants.delta_bound:
        raise ThresholdError(f"delta={delta} outside (0, {constants.delta_bound:.6g})")


def gamma_smallness(
    gamma: float, delta: float, norm_u0: float, k: float, dimension: int, tc: ThresholdConstants
) -> GammaSmallness:
    """C_a log^gamma(T ||u0||) - 1 against delta/10 with T = C_a^{C_a^{C_a^{delta^{-1/2}}}}.

    Everything is carried as logarithms: log10(ln T) = C_a^{delta^{-1/2}} log10 C_a + log10 ln C_a.
    """
    if gamma < 0:
        raise ThresholdError(f"gamma must be non-negative, got {gamma}")
    if not delta > 0:
        raise ThresholdError(f"delta must be positive, got {delta}")
    if not norm_u0 > 0:
        raise ThresholdError(f"Smallness condition needs a non-zero ||u0||, got {norm_u0}")

    log10_ca = math.log10(tc.C_a)
    log10_top = delta**-0.5 * log10_ca
    log10_ln_tower = _pow10(log10_top) * log10_ca + math.log10(math.log(tc.C_a))

    regime = SmallnessRegime.LOW_REGULARITY if k < LOW_REGULARITY_CUTOFF else SmallnessRegime.GENERIC
    log10_factor = 0.0
    if regime is SmallnessRegime.LOW_REGULARITY:
        gap = 2.0 * dimension / (dimension - 2 * k) - critical_exponent(dimension)
        if not gap > 0:
            raise ThresholdError(f"Low-regularity smallness needs k > 1, got k={k}")
        log10_factor = -gamma * math.log10(gap)

    extra = math.log(norm_u0) + log10_factor * math.log(10.0)
    if log10_ln_tower > _LOG10_MAX - 1:
        log10_argument = log10_ln_tower
    else:
        argument = 10.0**log10_ln_tower + extra
        if not argument > 0:
            raise ThresholdError("Tower argument T*||u0|| is below 1; the logarithm is not positive")
        log10_argument = math.log10(argument)

    log10_lhs_plus_one = log10_ca + log10_factor + (gamma * log10_argument if gamma > 0 else 0.0)
    lhs = _pow10(log10_lhs_plus_one) - 1.0
    margin = MUCH_SMALLER * delta - lhs
    return GammaSmallness(
        regime=regime,
        lhs=lhs,
        margin=margin,
        log10_log10_tower=log10_ln_tower - math.log10(math.log(10.0)),
        log10_lhs_plus_one=log10_lhs_plus_one,
    )


@dataclass(frozen=True)
class AdmissibilityReport:
    delta: float
    gamma: float
    energy: float
    critical_energy: float
    energy_ceiling: float
    critical_norm: float
    ground_state_norm: float
    htilde_norm: float
    smallness: GammaSmallness | None
    correction: CorrectionSplit

    @property
    def energy_margin(self) -> float:
        return self.energy_ceiling - self.energy

    @property
    def norm_margin(self) -> float:
        return self.ground_state_norm - self.critical_norm

    @property
    def size_margin(self) -> float:
        return self.htilde_norm - SIZE_FLOOR

    @property
    def admissible(self) -> bool:
        return self.energy_margin > 0 and self.norm_margin > 0 and self.size_margin > 0

    @property
    def small_data_route(self) -> bool:
        """Below the size floor the small-data argument applies instead."""
        return self.size_margin <= 0

    def to_dict(self) -> dict[str, object]:
        data = {
            key: value for key, value in asdict(self).items() if key not in ("smallness", "correction")
        }
        data.update(
            energy_margin=self.energy_margin,
            norm_margin=self.norm_margin,
            size_margin=self.size_margin,
            admissible=self.admissible,
            small_data_route=self.small_data_route,
        )
        if self.smallness is not None:
            data.update({f"smallness_{key}": value for key, value in self.smallness.to_dict().items()})
        data.update({f"correction_{key}": value for key, value in self.correction.to_dict().items()})
        return data


def check_initial_assumptions(
    u0: RadialField,
    delta: float,
    p: NonlinearityParams,
    tc: ThresholdConstants,
    constants: GroundStateConstants | None = None,
) -> AdmissibilityReport:
    constants = constants or ground_state_constants(u0.spec.dimension)
    _require_delta(delta, constants)
    report = energy_report(u0, p, tc.regularity)
    exponent = u0.spec.critical_exponent
    norm = report.htilde_norm
    smallness = (
        gamma_smallness(p.gamma, delta, norm, tc.regularity, u0.spec.dimension, tc) if norm > 0 else None
    )
    result = AdmissibilityReport(
        delta=delta,
        gamma=p.gamma,
        energy=report.energy,
        critical_energy=report.critical_energy,
        energy_ceiling=(1 - 2 * delta) * constants.critical_energy,
        critical_norm=report.critical_power ** (1.0 / exponent),
        ground_state_norm=constants.critical_norm,
        htilde_norm=norm,
        smallness=smallness,
        correction=correction_split(u0, p, tc, constants),
    )
    logger.info(
        "Admissibility: energy margin %.4g, norm margin %.4g, size margin %.4g -> %s",
        result.energy_margin,
        result.norm_margin,
        result.size_margin,
        result.admissible,
    )
    return result


def delta_prime(delta: float, constants: GroundStateConstants) -> float:
    """The trapping constant delta' from the variational curve F.

    y_delta solves F(y) = (1 - delta) F(y_W) below y_W. Every f with
    ||f||_{2*} <= y_delta and E~(f) <= (1 - delta) E~(W) then has
    ||grad f||^2 <= (1 - delta'_1) ||grad W||^2 and K~(f) >= delta'_2 ||grad f||^2.
    """
    _require_delta(delta, constants)
    if delta >= 1:
        raise ThresholdError(f"delta={delta} leaves no level set below the ground state")
    exponent = constants.critical_exponent
    y_w = constants.critical_norm
    target = (1 - delta) * remark_curve_F(y_w, constants)
    try:
        y_delta, result = optimize.brentq(
            lambda y: remark_curve_F(y, constants) - target, 0.0, y_w, xtol=1e-15, rtol=1e-15, full_output=True, disp=False
        )
    except (ValueError, RuntimeError) as exc:
        raise ThresholdError(f"Root search for y_delta failed for delta={delta}: {exc}") from exc
    if not result.converged:
        raise ThresholdError(f"Root search for y_delta failed after {result.iterations} iterations ({result.flag})")

    virial_gap = 1.0 - constants.sobolev_constant**2 * y_delta ** (exponent - 2)
    kinetic_gap = 1.0 - (2 * (1 - delta) * constants.critical_energy + 2 / exponent * y_delta**exponent) / constants.kinetic
    return float(min(virial_gap, kinetic_gap))


@dataclass(frozen=True)
class TrappingRow:
    time: float
    kinetic_margin: float
    virial_margin: float
    energy_margin: float
    correction_within_bound: bool

    @property
    def holds(self) -> bool:
        return self.kinetic_margin >= 0 and self.virial_margin >= 0 and self.energy_margin > 0


@dataclass(frozen=True)
class TrappingReport:
    delta: float
    delta_prime: float
    rows: tuple[TrappingRow, ...]

    @property
    def violations(self) -> int:
        return sum(not row.holds for row in self.rows)

    @property
    def first_violation(self) -> float | None:
        return next((row.time for row in self.rows if not row.holds), None)

    def worst_margins(self) -> dict[str, float]:
        return {
            name: min(getattr(row, name) for row in self.rows)
            for name in ("kinetic_margin", "virial_margin", "energy_margin")
        }

    def to_dict(self) -> dict[str, object]:
        return {
            "delta": self.delta,
            "delta_prime": self.delta_prime,
            "violations": self.violations,
            "first_violation": self.first_violation,
            **{f"worst_{key}": value for key, value in self.worst_margins().items()},
        }


def trapping_monitor(
    trace: "Trace", delta: float, tc: ThresholdConstants, constants: GroundStateConstants | None = None
) -> TrappingReport:
    constants = constants or ground_state_constants(trace.spec.dimension)
    trapped = delta_prime(delta, constants)
    reports = trace.reports or trace.evaluate_reports()
    p = trace.params.nonlinearity
    rows = []
    for snapshot, report in zip(trace.fields, reports):
        # Rounding slack so the zero solution sits on the boundary, not past it.
        slack = 1e-12 * max(1.0, report.kinetic)
        rows.append(
            TrappingRow(
                time=report.time,
                kinetic_margin=(1 - trapped) * constants.kinetic - report.kinetic + slack,
                virial_margin=report.functional_k - trapped * report.kinetic + slack,
                energy_margin=(1 - delta) * constants.critical_energy - report.critical_energy,
                correction_within_bound=correction_split(snapshot, p, tc, constants).bound_holds,
            )
        )
    result = TrappingReport(delta=delta, delta_prime=trapped, rows=tuple(rows))
    if result.violations:
        logger.warning("Trapping violated at %d snapshots, first at t=%.6g", result.violations, result.first_violation)
    return result


def constg_value(M: float, delta: float, tc: ThresholdConstants, gamma: float) -> float:
    """h-breve(M delta^{-1} eps^{-gamma})."""
    if M < 1:
        raise ThresholdError(f"Q bound M must be >= 1, got {M}")
    argument = M / delta * tc.epsilon_breve ** (-gamma)
    return float(tc.h_breve(argument, gamma))


def constg_check(M: float, delta: float, tc: ThresholdConstants, gamma: float) -> bool:
    return constg_value(M, delta, tc, gamma) <= MUCH_SMALLER * delta


__all__ = [
    "AdmissibilityReport",
    "GammaSmallness",
    "SmallnessRegime",
    "TrappingReport",
    "TrappingRow",
    "check_initial_assumptions",
    "constg_check",
    "constg_value",
    "delta_prime",
    "gamma_smallness",
    "trapping_monitor",
]
