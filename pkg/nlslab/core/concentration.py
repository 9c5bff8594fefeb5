"""
Interval bookkeeping on a finished trace.

The time axis is cut into pieces that each carry eta_1 of the spacetime
L^q mass, q = 2(n+2)/(n-2). On top of that partition sit the exceptional
classification, origin mass concentration, the largest-interval ratio, the
tower search over nested intervals and the count report.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize

from nlslab.core.functionals import (
    default_spacetime_exponent,
    local_mass,
    require_snapshots,
    spacetime_density,
)
from nlslab.core.grid import RadialField, ball_values, free_propagator, sobolev_seminorm
from nlslab.errors import AnalysisError

if TYPE_CHECKING:
    from nlslab.core.evolution import Trace

logger = logging.getLogger(__name__)

DEFAULT_ETA1 = 0.1
DEFAULT_C_TILDE_1 = 10.0
DEFAULT_C_PRIME_SMALL = 0.5
DEFAULT_C_PRIME_LARGE = 4.0
EXHAUSTIVE_LIMIT = 12


def _cumulative(times: np.ndarray, density: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(np.diff(times) * (density[1:] + density[:-1]) / 2)))


def _cumulative_at(t: float, times: np.ndarray, density: np.ndarray, cumulative: np.ndarray) -> float:
    """Exact integral of the piecewise-linear density from times[0] to t."""
    i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    h = times[i + 1] - times[i]
    tau = t - times[i]
    return float(cumulative[i] + density[i] * tau + (density[i + 1] - density[i]) * tau**2 / (2 * h))


def interval_masses(times: np.ndarray, density: np.ndarray, boundaries: Sequence[float]) -> np.ndarray:
    cumulative = _cumulative(times, density)
    values = np.array([_cumulative_at(b, times, density, cumulative) for b in boundaries])
    return np.diff(values)


@dataclass(frozen=True)
class IntervalPartition:
    eta1: float
    exponent: float
    boundaries: tuple[float, ...]
    masses: tuple[float, ...]
    total: float
    below_threshold: bool

    @property
    def count(self) -> int:
        return len(self.masses)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def interval(self, index: int) -> tuple[float, float]:
        return self.boundaries[index], self.boundaries[index + 1]

    def span(self, run: tuple[int, int]) -> tuple[float, float]:
        return self.boundaries[run[0]], self.boundaries[run[1] + 1]

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["count"] = self.count
        return data


def partition_intervals(trace: "Trace", eta1: float = DEFAULT_ETA1, q: float | None = None) -> IntervalPartition:
    if not eta1 > 0:
        raise AnalysisError(f"eta_1 must be positive, got {eta1}")
    require_snapshots(trace)
    q = default_spacetime_exponent(trace.spec.dimension) if q is None else q
    times = np.asarray(trace.times)
    density = spacetime_density(trace.fields, q)
    cumulative = _cumulative(times, density)
    total = float(cumulative[-1])

    below = total < eta1
    if below:
        logger.warning("Total spacetime mass %.3e is below eta_1=%.3e; single interval", total, eta1)
    count = 1 if below else max(1, math.ceil(total / eta1 * (1 - 1e-12)))

    xtol = max(1e-14 * (times[-1] - times[0]), 1e-300)
    boundaries = [float(times[0])]
    for level in range(1, count):
        target = level * eta1
        j = int(np.searchsorted(cumulative, target))
        lo, hi = times[max(j - 1, 0)], times[min(j, len(times) - 1)]
        if cumulative[j] == target:
            boundaries.append(float(times[j]))
            continue
        root = optimize.bisect(
            lambda t: _cumulative_at(t, times, density, cumulative) - target, lo, hi, xtol=xtol, maxiter=400
        )
        boundaries.append(float(root))
    boundaries.append(float(times[-1]))

    levels = [0.0] + [_cumulative_at(b, times, density, cumulative) for b in boundaries[1:-1]] + [total]
    masses = tuple(float(x) for x in np.diff(levels))
    logger.info("Partitioned [%g, %g] into %d intervals (total %.6g, eta_1=%g)", times[0], times[-1], count, total, eta1)
    return IntervalPartition(
        eta1=eta1,
        exponent=q,
        boundaries=tuple(boundaries),
        masses=masses,
        total=total,
        below_threshold=below,
    )


@dataclass(frozen=True)
class ExceptionalFlags:
    eta2: float
    forward_masses: tuple[float, ...]
    backward_masses: tuple[float, ...]
    flags: tuple[bool, ...]
    small_linear: tuple[bool, ...]

    @property
    def count(self) -> int:
        return sum(self.flags)

    @property
    def bound_shape(self) -> float:
        return 1.0 / self.eta2

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data.update(count=self.count, bound_shape=self.bound_shape)
        return data


def _free_density(start: RadialField, t0: float, times: np.ndarray, q: float, workers: int | None) -> np.ndarray:
    with ThreadPoolExecutor(max_workers=workers) as pool:
        fields = list(pool.map(lambda t: free_propagator(start, t - t0), times))
    return spacetime_density(fields, q)


def classify_exceptional(
    trace: "Trace", partition: IntervalPartition, eta2: float, workers: int | None = None
) -> ExceptionalFlags:
    """Flag J_l when the free evolutions from both ends of the trace carry >= eta_2 on it."""
    if not eta2 > 0:
        raise AnalysisError(f"eta_2 must be positive, got {eta2}")
    if not trace.fields or trace.times[0] != partition.boundaries[0] or trace.times[-1] != partition.boundaries[-1]:
        raise AnalysisError("Partition endpoints do not match the trace's first and last snapshots")
    times = np.asarray(trace.times)
    q = partition.exponent
    forward = interval_masses(times, _free_density(trace.fields[0], times[0], times, q, workers), partition.boundaries)
    backward = interval_masses(times, _free_density(trace.fields[-1], times[-1], times, q, workers), partition.boundaries)
    flags = tuple(bool(a + b >= eta2) for a, b in zip(forward, backward))
    small = tuple(bool(max(a, 0.0) ** (1.0 / q) < eta2) for a in forward)
    result = ExceptionalFlags(
        eta2=eta2,
        forward_masses=tuple(float(x) for x in forward),
        backward_masses=tuple(float(x) for x in backward),
        flags=flags,
        small_linear=small,
    )
    logger.info("%d of %d intervals exceptional at eta_2=%.3e", result.count, partition.count, eta2)
    return result


def unexceptional_runs(flags: Sequence[bool]) -> list[tuple[int, int]]:
    """Maximal runs (first, last) of consecutive unexceptional intervals."""
    runs: list[tuple[int, int]] = []
    for is_exceptional, group in itertools.groupby(enumerate(flags), key=lambda pair: pair[1]):
        if not is_exceptional:
            members = [index for index, _ in group]
            runs.append((members[0], members[-1]))
    return runs


@dataclass(frozen=True)
class ConcentrationRecord:
    index: int
    start: float
    end: float
    radius: float
    verifiable: bool
    min_ratio: float | None
    lipschitz_ratio: float | None
    passes: bool | None

    def to_dict(self) -> dict[str, object]:
        return asdict(self)


def _snapshots_in(times: np.ndarray, start: float, end: float) -> np.ndarray:
    inside = np.flatnonzero((times >= start) & (times <= end))
    if inside.size == 0:
        inside = np.array([int(np.argmin(np.abs(times - 0.5 * (start + end))))])
    return inside


def mass_concentration_check(
    trace: "Trace",
    partition: IntervalPartition,
    c_prime: float = DEFAULT_C_PRIME_SMALL,
    C_prime: float = DEFAULT_C_PRIME_LARGE,
    exceptional: Sequence[bool] | None = None,
) -> list[ConcentrationRecord]:
    """Mass(u(t), B(0, C'|J|^{1/2})) / |J|^{1/2} on every unexceptional J, plus its time-Lipschitz ratio."""
    times = np.asarray(trace.times)
    r_max = trace.spec.r_max
    if exceptional is None:
        exceptional = (False,) * partition.count
    gradients = np.maximum.accumulate([sobolev_seminorm(f, 1.0) for f in trace.fields])
    records = []
    for index in range(partition.count):
        if exceptional[index]:
            continue
        start, end = partition.interval(index)
        length = end - start
        radius = C_prime * math.sqrt(max(length, 0.0))
        if not 0 < radius <= r_max:
            records.append(ConcentrationRecord(index, start, end, radius, False, None, None, None))
            continue
        inside = _snapshots_in(times, start, end)
        masses = np.array([local_mass(trace.fields[i], radius) for i in inside])
        ratio = float(masses.min() / math.sqrt(length))

        lipschitz = 0.0
        if inside.size >= 2:
            slopes = np.abs(np.diff(masses)) / np.diff(times[inside])
            scale = gradients[inside[1:]]
            lipschitz = float(np.max(np.where(scale > 0, slopes * radius / np.where(scale > 0, scale, 1.0), 0.0)))
        records.append(ConcentrationRecord(index, start, end, radius, True, ratio, lipschitz, ratio >= c_prime))
    return records


def largest_interval_ratio(partition: IntervalPartition, run: tuple[int, int]) -> float:
    first, last = run
    if last < first or first < 0 or last >= partition.count:
        raise AnalysisError(f"Empty or out-of-range run {run} for {partition.count} intervals")
    lengths = partition.lengths[first : last + 1]
    total = float(lengths.sum())
    if total <= 0:
        raise AnalysisError(f"Run {run} has zero length")
    return float(lengths.max() / total)


@dataclass(frozen=True)
class LargeIntervalCheck:
    run: tuple[int, int]
    ratio: float
    log10_threshold: float

    @property
    def passes(self) -> bool:
        return math.log10(self.ratio) >= self.log10_threshold

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["passes"] = self.passes
        return data


def large_interval_check(
    partition: IntervalPartition, run: tuple[int, int], delta: float, c_prime: float = DEFAULT_C_PRIME_SMALL
) -> LargeIntervalCheck:
    """Compare the ratio with (c')^{delta^{-1/2}}, kept as a base-10 logarithm."""
    return LargeIntervalCheck(
        run=run,
        ratio=largest_interval_ratio(partition, run),
        log10_threshold=delta**-0.5 * math.log10(c_prime),
    )


@dataclass(frozen=True)
class TowerReport:
    eta: float
    anchor: float
    indices: tuple[int, ...]
    lower_bound: float
    size_ok: bool
    distance_ok: bool
    certified: bool | None

    @property
    def K(self) -> int:
        return len(self.indices)

    @property
    def meets_bound(self) -> bool:
        return self.K >= self.lower_bound

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data.update(K=self.K, meets_bound=self.meets_bound)
        return data


def _windows(starts: np.ndarray, ends: np.ndarray, eta: float) -> tuple[np.ndarray, np.ndarray]:
    reach = (ends - starts) / eta
    return starts - reach, ends + reach


def _greedy_chain(eligible: np.ndarray, lengths: np.ndarray) -> list[int]:
    """Longest chain with each length at least twice the previous, shortest first."""
    chain: list[int] = []
    for i in sorted(eligible, key=lambda j: (lengths[j], j)):
        if not chain or lengths[i] >= 2 * lengths[chain[-1]]:
            chain.append(int(i))
    return chain[::-1]


def _dyadic_ok(lengths: Sequence[float]) -> bool:
    return all(a >= 2 * b for a, b in zip(lengths, lengths[1:]))


def _exhaustive_best(starts, ends, lengths, eta: float, span: tuple[float, float]) -> int:
    left, right = _windows(starts, ends, eta)
    positive = [j for j in range(len(lengths)) if lengths[j] > 0]
    for size in range(len(positive), 0, -1):
        for subset in itertools.combinations(positive, size):
            ordered = sorted(subset, key=lambda j: -lengths[j])
            if not _dyadic_ok([lengths[j] for j in ordered]):
                continue
            lo = max(span[0], max(left[j] for j in subset))
            hi = min(span[1], min(right[j] for j in subset))
            if lo <= hi:
                return size
    return 0


def bourgain_tower_search(
    partition: IntervalPartition, eta: float, run: tuple[int, int] | None = None
) -> TowerReport:
    """Anchor time and nested intervals |J_1| >= 2|J_2| >= ... with dist(anchor, J_k) <= |J_k| / eta."""
    if not 0 < eta <= 1:
        raise AnalysisError(f"Tower eta must lie in (0, 1], got {eta}")
    run = run or (0, partition.count - 1)
    first, last = run
    starts = np.asarray(partition.boundaries[first : last + 1])
    ends = np.asarray(partition.boundaries[first + 1 : last + 2])
    lengths = ends - starts
    span = (float(starts[0]), float(ends[-1]))
    count = len(lengths)
    lower_bound = -math.log(count) / (2 * math.log(eta / 8))

    left, right = _windows(starts, ends, eta)
    candidates = np.unique(np.clip(np.concatenate((starts, ends, left, right)), *span))
    best_anchor, best_chain = span[0], []
    for anchor in candidates:
        eligible = np.flatnonzero((left <= anchor) & (anchor <= right) & (lengths > 0))
        chain = _greedy_chain(eligible, lengths)
        if len(chain) > len(best_chain):
            best_anchor, best_chain = float(anchor), chain

    chosen_lengths = [lengths[j] for j in best_chain]
    distances = [max(starts[j] - best_anchor, best_anchor - ends[j], 0.0) for j in best_chain]
    size_ok = _dyadic_ok(chosen_lengths)
    distance_ok = all(d <= lengths[j] / eta * (1 + 1e-12) for d, j in zip(distances, best_chain))

    certified = None
    if count <= EXHAUSTIVE_LIMIT:
        certified = _exhaustive_best(starts, ends, lengths, eta, span) == len(best_chain)
        if not certified:
            logger.error("Tower search found K=%d but exhaustive search disagrees", len(best_chain))

    return TowerReport(
        eta=eta,
        anchor=best_anchor,
        indices=tuple(first + j for j in best_chain),
        lower_bound=lower_bound,
        size_ok=size_ok,
        distance_ok=distance_ok,
        certified=certified,
    )


@dataclass(frozen=True)
class TowerBall:
    index: int
    radius: float
    mass: float | None
    ratio: float | None

    @property
    def verifiable(self) -> bool:
        return self.mass is not None


def tower_ball_masses(
    trace: "Trace", partition: IntervalPartition, tower: TowerReport, C_prime: float = DEFAULT_C_PRIME_LARGE
) -> list[TowerBall]:
    """Local mass of the snapshot nearest the anchor in each tower ball B(0, C'|J_i|^{1/2})."""
    if not tower.indices:
        return []
    snapshot = trace.fields[trace.nearest_index(tower.anchor)]
    balls = []
    for index in tower.indices:
        length = partition.lengths[index]
        radius = C_prime * math.sqrt(length)
        if not 0 < radius <= trace.spec.r_max:
            balls.append(TowerBall(index, radius, None, None))
            continue
        value = local_mass(snapshot, radius)
        balls.append(TowerBall(index, radius, value, value / math.sqrt(length)))
    return balls


@dataclass(frozen=True)
class PotentialDecay:
    run: tuple[int, int]
    depth: int
    inner_radius: float
    minimum: float
    minimum_time: float
    average: float
    bound_shape: float

    def to_dict(self) -> dict[str, object]:
        return asdict(self)


def potential_decay_report(
    trace: "Trace", partition: IntervalPartition, run: tuple[int, int], delta: float, C_tilde_3: float = 1.0
) -> PotentialDecay:
    """int_{|x| <= m-bar} |u|^{2*} over J-tilde, with m = |J-tilde|^{1/2} and m-bar = 2^{-K-bar} m."""
    start, end = partition.span(run)
    length = end - start
    if not length > 0:
        raise AnalysisError(f"Run {run} has zero length")
    depth = math.ceil(C_tilde_3 * delta**-0.5)
    m = math.sqrt(length)
    radius = min(2.0**-depth * m, trace.spec.r_max)
    exponent = trace.spec.critical_exponent
    times = np.asarray(trace.times)
    inside = _snapshots_in(times, start, end)

    def inner_power(i: int) -> float:
        values, weights = ball_values(trace.fields[i], radius)
        return float(np.dot(weights, np.abs(values) ** exponent))

    values = np.array([inner_power(i) for i in inside])
    lowest = int(np.argmin(values))
    if inside.size >= 2:
        average = float(sp_integrate.trapezoid(values, times[inside])) / (times[inside[-1]] - times[inside[0]])
    else:
        average = float(values[0])
    return PotentialDecay(
        run=run,
        depth=depth,
        inner_radius=radius,
        minimum=float(values[lowest]),
        minimum_time=float(times[inside[lowest]]),
        average=average,
        bound_shape=delta**-0.5 / depth * (m**2 + length) / length,
    )


@dataclass(frozen=True)
class RunSummary:
    run: tuple[int, int]
    intervals: int
    length: float
    largest_ratio: float
    tower_K: int


@dataclass(frozen=True)
class CountReport:
    intervals: int
    exceptional: int
    runs: tuple[RunSummary, ...]
    exceptional_bound_shape: float
    log10_log10_count_bound: float

    def to_dict(self) -> dict[str, object]:
        return {
            "intervals": self.intervals,
            "exceptional": self.exceptional,
            "runs": len(self.runs),
            "exceptional_bound_shape": self.exceptional_bound_shape,
            "log10_log10_count_bound": self.log10_log10_count_bound,
            "run_table": [asdict(run) for run in self.runs],
        }


def count_bound_report(
    partition: IntervalPartition,
    flags: ExceptionalFlags,
    delta: float,
    C_1: float = 10.0,
    tower_eta: float | None = None,
    c_prime: float = DEFAULT_C_PRIME_SMALL,
) -> CountReport:
    """L, the exceptional count and the runs, with L <= C_1^{C_1^{delta^{-1/2}}} in log-log form."""
    if not C_1 > 1:
        raise AnalysisError(f"C_1 must exceed 1, got {C_1}")
    log_log_bound = delta**-0.5 * math.log10(C_1) + math.log10(math.log10(C_1))
    if partition.total == 0:
        return CountReport(0, 0, (), flags.bound_shape, log_log_bound)
    eta = tower_eta if tower_eta is not None else tower_eta_for(delta, c_prime)
    summaries = []
    for run in unexceptional_runs(flags.flags):
        start, end = partition.span(run)
        if end <= start:
            continue
        summaries.append(
            RunSummary(
                run=run,
                intervals=run[1] - run[0] + 1,
                length=end - start,
                largest_ratio=largest_interval_ratio(partition, run),
                tower_K=bourgain_tower_search(partition, eta, run).K,
            )
        )
    return CountReport(
        intervals=partition.count,
        exceptional=flags.count,
        runs=tuple(summaries),
        exceptional_bound_shape=flags.bound_shape,
        log10_log10_count_bound=log_log_bound,
    )


def tower_eta_for(delta: float, c_prime: float = DEFAULT_C_PRIME_SMALL) -> float:
    """eta = (c')^{delta^{-1/2}}, floored at the smallest positive double."""
    return max(c_prime ** (delta**-0.5), np.finfo(float).tiny)


@dataclass
class ConcentrationAnalysis:
    partition: IntervalPartition
    exceptional: ExceptionalFlags
    records: list[ConcentrationRecord]
    large_intervals: list[LargeIntervalCheck]
    towers: list[TowerReport]
    tower_balls: list[list[TowerBall]]
    decay: list[PotentialDecay]
    counts: CountReport
    settings: dict[str, float] = field(default_factory=dict)


def concentration_analysis(
    trace: "Trace",
    delta: float,
    eta1: float = DEFAULT_ETA1,
    C_tilde_1: float = DEFAULT_C_TILDE_1,
    c_prime: float = DEFAULT_C_PRIME_SMALL,
    C_prime: float = DEFAULT_C_PRIME_LARGE,
    C_tilde_3: float = 1.0,
    C_1: float = 10.0,
    tower_eta: float | None = None,
) -> ConcentrationAnalysis:
    partition = partition_intervals(trace, eta1)
    eta2 = eta1**C_tilde_1
    flags = classify_exceptional(trace, partition, eta2)
    eta = tower_eta if tower_eta is not None else tower_eta_for(delta, c_prime)
    runs = [run for run in unexceptional_runs(flags.flags) if partition.span(run)[1] > partition.span(run)[0]]
    towers = [bourgain_tower_search(partition, eta, run) for run in runs]
    return ConcentrationAnalysis(
        partition=partition,
        exceptional=flags,
        records=mass_concentration_check(trace, partition, c_prime, C_prime, flags.flags),
        large_intervals=[large_interval_check(partition, run, delta, c_prime) for run in runs],
        towers=towers,
        tower_balls=[tower_ball_masses(trace, partition, tower, C_prime) for tower in towers],
        decay=[potential_decay_report(trace, partition, run, delta, C_tilde_3) for run in runs],
        counts=count_bound_report(partition, flags, delta, C_1, eta, c_prime),
        settings={
            "delta": delta,
            "eta1": eta1,
            "eta2": eta2,
            "C_tilde_1": C_tilde_1,
            "c_prime": c_prime,
            "C_prime": C_prime,
            "C_tilde_3": C_tilde_3,
            "C_1": C_1,
            "tower_eta": eta,
        },
    )


__all__ = [
    "ConcentrationAnalysis",
    "ConcentrationRecord",
    "CountReport",
    "ExceptionalFlags",
    "IntervalPartition",
    "LargeIntervalCheck",
    "PotentialDecay",
    "RunSummary",
    "TowerBall",
    "TowerReport",
    "bourgain_tower_search",
    "classify_exceptional",
    "concentration_analysis",
    "count_bound_report",
    "interval_masses",
    "large_interval_check",
    "largest_interval_ratio",
    "mass_concentration_check",
    "partition_intervals",
    "potential_decay_report",
    "tower_ball_masses",
    "tower_eta_for",
    "unexceptional_runs",
]
