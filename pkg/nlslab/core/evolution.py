"""
Strang-split time stepping of i u_t + Delta u = -|u|^{4/(n-2)} u g(|u|).

Both substeps are exact: the free flow is a diagonal phase in the Bessel
basis and the nonlinear flow preserves |u| pointwise, so it is a pointwise
phase rotation.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from nlslab.core.functionals import EnergyReport, NonlinearityParams, energy_report, htilde_norm
from nlslab.core.grid import (
    GridSpec,
    RadialField,
    boundary_shell_fraction,
    free_propagator,
    time_step_for,
)
from nlslab.core.ground_state import GroundStateConstants, ground_state_constants
from nlslab.errors import AnalysisError, EvolutionError

logger = logging.getLogger(__name__)

AMPLITUDE_CAP_FACTOR = 1e3
ROUNDOFF_FLOOR = 1e-10


class HaltStatus(str, Enum):
    COMPLETED = "completed"
    KINETIC_ESCAPE = "kinetic-escape"
    AMPLITUDE_CAP = "amplitude-cap"
    BOUNDARY_MASS = "boundary-mass"


@dataclass(frozen=True)
class EvolutionParams:
    nonlinearity: NonlinearityParams = field(default_factory=NonlinearityParams)
    t_end: float = 1.0
    dt: float | None = None
    snapshot_stride: int = 10
    amplitude_cap: float | None = None
    kinetic_cap: float = 5.0
    boundary_mass_tol: float = 1e-6
    boundary_shell: float = 0.1
    horizon_tol: float = 1e-8
    regularity: float = 2.0
    nonlinear: bool = True

    def __post_init__(self) -> None:
        if self.dt is not None and not self.dt > 0:
            raise EvolutionError(f"Time step must be positive, got dt={self.dt}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise EvolutionError(f"t_end must be finite and non-negative, got {self.t_end}")
        if self.snapshot_stride < 1:
            raise EvolutionError(f"Snapshot stride must be >= 1, got {self.snapshot_stride}")
        if self.amplitude_cap is not None and not self.amplitude_cap > 0:
            raise EvolutionError(f"Amplitude cap must be positive, got {self.amplitude_cap}")
        if not self.kinetic_cap > 0:
            raise EvolutionError(f"Kinetic cap must be positive, got {self.kinetic_cap}")
        if not (self.boundary_mass_tol > 0 and 0 < self.boundary_shell < 1):
            raise EvolutionError("Boundary guard needs a positive tolerance and a shell fraction in (0, 1)")

    def resolved_dt(self, spec: GridSpec) -> float:
        return self.dt if self.dt is not None else time_step_for(spec)

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["nonlinearity"] = asdict(self.nonlinearity)
        return data


@dataclass
class Trace:
    """Time-ordered snapshots of one run plus its halt status."""

    spec: GridSpec
    params: EvolutionParams
    dt: float
    times: list[float] = field(default_factory=list)
    fields: list[RadialField] = field(default_factory=list)
    reports: list[EnergyReport] = field(default_factory=list)
    status: HaltStatus | None = None
    halt_time: float | None = None
    trusted_horizon: float | None = None

    def record(self, time: float, snapshot: RadialField) -> None:
        if self.times and not time > self.times[-1]:
            raise EvolutionError(f"Snapshot time {time} does not follow {self.times[-1]}")
        self.times.append(float(time))
        self.fields.append(snapshot)

    def halt(self, status: HaltStatus, time: float) -> None:
        if self.status is not None:
            raise EvolutionError(f"Halt status already set to {self.status.value}")
        self.status = HaltStatus(status)
        self.halt_time = float(time)

    @property
    def completed(self) -> bool:
        return self.status is HaltStatus.COMPLETED

    @property
    def final_time(self) -> float:
        return self.times[-1] if self.times else 0.0

    def nearest_index(self, time: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - time)))

    def evaluate_reports(self, workers: int | None = None) -> list[EnergyReport]:
        p, k = self.params.nonlinearity, self.params.regularity
        with ThreadPoolExecutor(max_workers=workers) as pool:
            self.reports = list(pool.map(lambda pair: energy_report(pair[1], p, k, pair[0]), zip(self.times, self.fields)))
        return self.reports

    def metadata(self) -> dict[str, object]:
        return {
            "status": self.status.value if self.status else None,
            "halt_time": self.halt_time,
            "trusted_horizon": self.trusted_horizon,
            "dt": self.dt,
            "snapshots": len(self.times),
        }


def _phase_rotation(values: np.ndarray, tau: float, p: NonlinearityParams, power: float) -> np.ndarray:
    amplitude = np.abs(values)
    return values * np.exp(1j * tau * amplitude**power * p.g(amplitude))


def nonlinear_phase_step(f: RadialField, tau: float, p: NonlinearityParams) -> RadialField:
    """u -> u exp(i tau |u|^{4/(n-2)} g(|u|)), the exact flow of the nonlinear part."""
    if not math.isfinite(tau):
        raise EvolutionError(f"Phase step must be finite, got tau={tau}")
    if tau == 0:
        return f
    return f.with_values(_phase_rotation(f.values, tau, p, f.spec.power))


def strang_step(f: RadialField, dt: float, p: NonlinearityParams, nonlinear: bool = True) -> RadialField:
    basis = f.basis
    half = np.exp(-0.5j * dt * basis.eigenvalues)
    values = basis.synthesis @ (half * (basis.analysis @ f.values))
    if nonlinear:
        values = _phase_rotation(values, dt, p, f.spec.power)
    return f.with_values(basis.synthesis @ (half * (basis.analysis @ values)))


def evolve(
    u0: RadialField,
    params: EvolutionParams,
    constants: GroundStateConstants | None = None,
) -> Trace:
    spec, basis = u0.spec, u0.basis
    p = params.nonlinearity
    if p.dimension != spec.dimension:
        raise EvolutionError(f"Nonlinearity dimension {p.dimension} does not match grid dimension {spec.dimension}")
    constants = constants or ground_state_constants(spec.dimension)

    initial_shell = boundary_shell_fraction(u0, params.boundary_shell)
    if initial_shell > params.boundary_mass_tol:
        raise EvolutionError(
            f"Initial data carries {initial_shell:.3e} of its mass in the boundary shell "
            f"(tolerance {params.boundary_mass_tol:.0e})"
        )

    dt = params.resolved_dt(spec)
    steps = int(round(params.t_end / dt))
    if steps > 0:
        dt = params.t_end / steps
    trace = Trace(spec=spec, params=params, dt=dt)
    trace.record(0.0, u0)

    sup0 = float(u0.amplitude.max(initial=0.0))
    amplitude_cap = params.amplitude_cap or (AMPLITUDE_CAP_FACTOR * sup0 if sup0 > 0 else math.inf)
    kinetic_cap = params.kinetic_cap * constants.kinetic
    horizon = None if initial_shell <= params.horizon_tol else 0.0

    eigenvalues = basis.eigenvalues
    half = np.exp(-0.5j * dt * eigenvalues)
    coefficients = basis.analysis @ u0.values
    power = spec.power
    progress_every = max(1, steps // 10)
    logger.info("Evolving n=%d N=%d for %d steps of dt=%.3e (gamma=%g)", spec.dimension, spec.modes, steps, dt, p.gamma)

    status = HaltStatus.COMPLETED
    time = 0.0
    for step in range(1, steps + 1):
        coefficients = half * coefficients
        values = basis.synthesis @ coefficients
        if params.nonlinear:
            values = _phase_rotation(values, dt, p, power)
        coefficients = half * (basis.analysis @ values)
        time = step * dt
        if not np.all(np.isfinite(coefficients)):
            raise EvolutionError(f"Non-finite state at step {step} (t={time:.6g}); last finite snapshot t={trace.final_time}")

        # |u| is untouched by the phase, so the midpoint samples carry the guard data.
        amplitude = np.abs(values)
        density = amplitude**2
        total = float(np.dot(basis.weights, density))
        shell = 0.0
        if total > 0:
            outer = basis.nodes >= (1.0 - params.boundary_shell) * spec.r_max
            shell = float(np.dot(basis.weights[outer], density[outer])) / total
        if horizon is None and shell > params.horizon_tol:
            horizon = time

        kinetic = float(np.dot(eigenvalues, np.abs(coefficients) ** 2))
        if kinetic > kinetic_cap:
            status = HaltStatus.KINETIC_ESCAPE
        elif amplitude.max() > amplitude_cap:
            status = HaltStatus.AMPLITUDE_CAP
        elif shell > params.boundary_mass_tol:
            status = HaltStatus.BOUNDARY_MASS

        halted = status is not HaltStatus.COMPLETED
        if halted or step % params.snapshot_stride == 0 or step == steps:
            trace.record(time, RadialField(basis, basis.synthesis @ coefficients))
        if halted:
            logger.warning("Run halted at t=%.6g with status %s", time, status.value)
            break
        if step % progress_every == 0:
            logger.info("t=%.4g (%d/%d steps), kinetic=%.6g, boundary share=%.2e", time, step, steps, kinetic, shell)

    trace.halt(status, time)
    trace.trusted_horizon = trace.final_time if horizon is None else horizon
    trace.evaluate_reports()
    return trace


def time_reversal_defect(u0: RadialField, p: NonlinearityParams, dt: float, steps: int, nonlinear: bool = True) -> float:
    """Relative L^2 defect of forward stepping, conjugation, forward stepping, conjugation."""
    state = u0
    for _ in range(steps):
        state = strang_step(state, dt, p, nonlinear)
    state = state.conj()
    for _ in range(steps):
        state = strang_step(state, dt, p, nonlinear)
    state = state.conj()
    difference = np.dot(u0.basis.weights, np.abs(state.values - u0.values) ** 2)
    scale = np.dot(u0.basis.weights, np.abs(u0.values) ** 2)
    return float(math.sqrt(difference / scale)) if scale > 0 else float(math.sqrt(difference))


@dataclass(frozen=True)
class ScatteringReport:
    times: tuple[float, ...]
    residuals: tuple[float, ...]
    scattered: bool
    u_plus: RadialField

    def to_dict(self) -> dict[str, object]:
        return {"times": list(self.times), "residuals": list(self.residuals), "scattered": self.scattered}


def dyadic_times(t_end: float) -> list[float]:
    times, t = [], 1.0
    while t <= t_end * (1 + 1e-12):
        times.append(t)
        t *= 2
    return times


def scattering_detector(trace: Trace, k: float, tol: float) -> ScatteringReport:
    """Cauchy test of v(t) = e^{-it Delta} u(t) across dyadic times."""
    if not trace.completed:
        status = trace.status.value if trace.status else "unfinished"
        raise AnalysisError(f"Scattering detection needs a completed trace, got {status}")
    if trace.final_time < 4:
        raise AnalysisError(f"Scattering detection needs t_end >= 4, trace ends at {trace.final_time}")

    indices: list[int] = []
    for target in dyadic_times(trace.final_time):
        index = trace.nearest_index(target)
        if not indices or index != indices[-1]:
            indices.append(index)
    profiles = [free_propagator(trace.fields[i], -trace.times[i]) for i in indices]
    # Differences at roundoff level of the profile count as zero.
    floor = ROUNDOFF_FLOOR * max(htilde_norm(profile, k) for profile in profiles)
    residuals = [htilde_norm(later - earlier, k) for earlier, later in zip(profiles, profiles[1:])]
    residuals = [0.0 if r <= floor else r for r in residuals]

    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(residuals, residuals[1:]))
    scattered = bool(residuals) and monotone and residuals[-1] < tol
    u_plus = free_propagator(trace.fields[-1], -trace.times[-1])
    logger.info("Cauchy residuals %s -> scattered=%s", ["%.3e" % r for r in residuals], scattered)
    return ScatteringReport(
        times=tuple(trace.times[i] for i in indices),
        residuals=tuple(residuals),
        scattered=scattered,
        u_plus=u_plus,
    )


__all__ = [
    "EvolutionParams",
    "HaltStatus",
    "ScatteringReport",
    "Trace",
    "dyadic_times",
    "evolve",
    "nonlinear_phase_step",
    "scattering_detector",
    "strang_step",
    "time_reversal_defect",
]
