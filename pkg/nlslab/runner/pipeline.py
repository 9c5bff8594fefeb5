"""
classify -> evolve -> analyze -> persist, for one config or a sweep grid.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from nlslab.core.concentration import concentration_analysis
from nlslab.core.evolution import Trace, evolve, scattering_detector
from nlslab.core.functionals import MUCH_SMALLER, EnergyReport, correction_split, jensen_chain_check
from nlslab.core.grid import RadialField
from nlslab.core.ground_state import ground_state_constants
from nlslab.core.threshold import AdmissibilityReport, check_initial_assumptions, trapping_monitor
from nlslab.core.virial import VirialRow, virial_identity_residual
from nlslab.db import RunRecord, record_run
from nlslab.errors import NlslabError
from nlslab.runner.config import RunConfig, validate_config, write_config
from nlslab.runner.initial_data import make_initial_data
from nlslab.runner.persistence import write_key_values, write_table, write_trace

logger = logging.getLogger(__name__)


@contextmanager
def run_context(run_id: str, stage: str) -> Iterator[None]:
    """Re-raise library errors with the run id and stage in front."""
    try:
        yield
    except NlslabError as exc:
        raise type(exc)(f"run {run_id} ({stage}): {exc}") from exc


@dataclass
class RunResult:
    run_id: str
    directory: Path
    admissibility: AdmissibilityReport
    trace: Trace | None = None
    files: list[Path] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)


def run_directory(config: RunConfig) -> Path:
    return Path(config.output_dir) / config.run_id


def _header(config: RunConfig, kind: str, **extra: Any) -> dict[str, Any]:
    return {"kind": kind, "run_id": config.run_id, "much_smaller": MUCH_SMALLER, "config": config.record(), **extra}


def initial_field(config: RunConfig) -> RadialField:
    return make_initial_data(config.initial_data, config.grid_spec(), config.seed, config.thresholds.regularity)


def classify(config: RunConfig, write: bool = True) -> RunResult:
    directory = run_directory(config)
    with run_context(config.run_id, "classify"):
        u0 = initial_field(config)
        report = check_initial_assumptions(
            u0, config.delta, config.nonlinearity_params(), config.threshold_constants()
        )
    result = RunResult(config.run_id, directory, report, summary={"admissible": report.admissible})
    if write:
        result.files.append(write_config(config, directory / "config.yaml"))
        result.files.append(write_key_values(directory / "classify.txt", report.to_dict(), _header(config, "classify")))
    return result


def simulate(config: RunConfig, result: RunResult | None = None) -> RunResult:
    result = result or classify(config)
    with run_context(config.run_id, "simulate"):
        trace = evolve(initial_field(config), config.evolution_params())
    result.trace = trace
    result.summary.update(trace.metadata())
    directory = result.directory
    result.files.append(write_trace(trace, config.record(), directory / "trace.csv"))
    result.files.append(
        write_table(
            directory / "energy.csv",
            EnergyReport.columns(),
            (report.as_row() for report in trace.reports),
            _header(config, "energy"),
        )
    )
    return result


def analyze(config: RunConfig, trace: Trace, result: RunResult) -> RunResult:
    """Every analysis the config switches on, each written as its own report."""
    directory = result.directory
    settings = config.analysis
    tc = config.threshold_constants()
    p = config.nonlinearity_params()
    constants = ground_state_constants(config.grid.dimension)
    if not trace.reports:
        trace.evaluate_reports()

    if settings.jensen:
        with run_context(config.run_id, "jensen"):
            chains = [jensen_chain_check(f, p, tc) for f in trace.fields]
            splits = [correction_split(f, p, tc, constants) for f in trace.fields]
        rows = [
            [time, *chain.lines, chain.holds, split.small_part, split.large_part, split.bound_holds]
            for time, chain, split in zip(trace.times, chains, splits)
        ]
        columns = ["time", *chains[0].labels, "holds", "X1", "X2", "X_within_bound"]
        result.files.append(write_table(directory / "jensen.csv", columns, rows, _header(config, "jensen")))
        result.summary["jensen_violations"] = sum(not chain.holds for chain in chains)

    if settings.trapping:
        with run_context(config.run_id, "trapping"):
            trapping = trapping_monitor(trace, config.delta, tc, constants)
        rows = [
            [row.time, row.kinetic_margin, row.virial_margin, row.energy_margin, row.correction_within_bound, row.holds]
            for row in trapping.rows
        ]
        columns = ["time", "kinetic_margin", "virial_margin", "energy_margin", "X_within_bound", "holds"]
        result.files.append(write_table(directory / "trapping.csv", columns, rows, _header(config, "trapping")))
        result.files.append(write_key_values(directory / "trapping.txt", trapping.to_dict(), _header(config, "trapping")))
        result.summary["trapping_violations"] = trapping.violations

    if settings.scattering:
        summary: dict[str, Any]
        if trace.completed and trace.final_time >= 4:
            with run_context(config.run_id, "scattering"):
                scattering = scattering_detector(trace, tc.regularity, settings.scattering_tol)
            summary = scattering.to_dict()
        else:
            summary = {"skipped": f"needs a completed trace reaching t=4 (status {trace.status.value}, t={trace.final_time})"}
        result.files.append(write_key_values(directory / "scattering.txt", summary, _header(config, "scattering")))
        result.summary["scattered"] = summary.get("scattered")

    for m in settings.virial_scales:
        if len(trace.times) < 3 or not 2 * m < trace.spec.r_max:
            logger.warning("Skipping virial scale m=%g for this trace", m)
            continue
        with run_context(config.run_id, f"virial m={m}"):
            virial = virial_identity_residual(trace, m, tc, constants)
        residuals = {time: value for time, value in zip(virial.interior_times, virial.residuals)}
        rows = [[*row.as_row(), row.kmon_holds, row.inequality_holds, residuals.get(row.time)] for row in virial.rows]
        result.files.append(
            write_table(
                directory / f"virial_m{m:g}.csv",
                [*VirialRow.columns(), "kmon_holds", "inequality_holds", "residual"],
                rows,
                _header(config, "virial", m=m),
            )
        )
        result.summary[f"virial_max_residual_m{m:g}"] = virial.max_residual
        result.summary[f"virial_inequality_holds_m{m:g}"] = virial.inequality_holds

    if settings.concentration and len(trace.times) >= 2:
        with run_context(config.run_id, "concentration"):
            analysis = concentration_analysis(
                trace,
                config.delta,
                eta1=settings.eta1,
                C_tilde_1=settings.C_tilde_1,
                c_prime=settings.c_prime,
                C_prime=settings.C_prime,
                C_tilde_3=settings.C_tilde_3,
                C_1=settings.C_1,
                tower_eta=settings.tower_eta,
            )
        partition, flags = analysis.partition, analysis.exceptional
        records = {record.index: record for record in analysis.records}
        rows = []
        for index in range(partition.count):
            start, end = partition.interval(index)
            record = records.get(index)
            rows.append(
                [
                    index,
                    start,
                    end,
                    partition.masses[index],
                    flags.forward_masses[index],
                    flags.backward_masses[index],
                    flags.flags[index],
                    flags.small_linear[index],
                    record.radius if record else None,
                    record.min_ratio if record else None,
                    record.lipschitz_ratio if record else None,
                    record.passes if record else None,
                ]
            )
        columns = [
            "interval",
            "start",
            "end",
            "mass",
            "forward_mass",
            "backward_mass",
            "exceptional",
            "small_linear",
            "radius",
            "min_mass_ratio",
            "lipschitz_ratio",
            "concentrates",
        ]
        header = _header(config, "concentration", settings=analysis.settings)
        result.files.append(write_table(directory / "concentration.csv", columns, rows, header))

        summary = {
            "intervals": partition.count,
            "total_mass": partition.total,
            "below_threshold": partition.below_threshold,
            **{f"count_{key}": value for key, value in analysis.counts.to_dict().items() if key != "run_table"},
        }
        for check, tower, balls, decay in zip(analysis.large_intervals, analysis.towers, analysis.tower_balls, analysis.decay):
            key = f"run_{check.run[0]}_{check.run[1]}"
            summary.update(
                {
                    f"{key}_largest_ratio": check.ratio,
                    f"{key}_log10_threshold": check.log10_threshold,
                    f"{key}_large_interval": check.passes,
                    f"{key}_tower_K": tower.K,
                    f"{key}_tower_anchor": tower.anchor,
                    f"{key}_tower_indices": list(tower.indices),
                    f"{key}_tower_lower_bound": tower.lower_bound,
                    f"{key}_tower_certified": tower.certified,
                    f"{key}_tower_ball_ratios": [ball.ratio for ball in balls if ball.verifiable],
                    f"{key}_decay_minimum": decay.minimum,
                    f"{key}_decay_minimum_time": decay.minimum_time,
                    f"{key}_decay_average": decay.average,
                    f"{key}_decay_bound_shape": decay.bound_shape,
                }
            )
        result.files.append(write_key_values(directory / "concentration.txt", summary, header))
        result.summary["exceptional"] = flags.count

    return result


def run(config: RunConfig, sweep_id: str = "", index: bool = True) -> RunResult:
    logger.info("Run %s: %s data, gamma=%g", config.run_id, config.initial_data.family, config.nonlinearity.gamma)
    result = simulate(config, classify(config))
    analyze(config, result.trace, result)
    result.files.append(write_key_values(result.directory / "summary.txt", result.summary, _header(config, "summary")))
    if index:
        final = result.trace.reports[-1] if result.trace.reports else None
        record_run(
            RunRecord(
                run_id=config.run_id,
                sweep_id=sweep_id,
                parameters=config.record(),
                status=result.trace.status.value,
                admissible=result.admissibility.admissible,
                energy=final.energy if final else 0.0,
                final_time=result.trace.final_time,
            )
        )
    return result


def sweep_configs(config: RunConfig) -> list[RunConfig]:
    """The gamma x amplitude grid, in row-major order."""
    gammas = config.sweep.gamma or [config.nonlinearity.gamma]
    amplitude_key = "target_norm" if config.initial_data.family == "random_smooth" else "amplitude"
    amplitudes = config.sweep.amplitude or [getattr(config.initial_data, amplitude_key)]
    configs = []
    for gamma, amplitude in itertools.product(gammas, amplitudes):
        record = config.record()
        record["nonlinearity"]["gamma"] = gamma
        record["initial_data"][amplitude_key] = amplitude
        record["sweep"] = {"gamma": [], "amplitude": [], "workers": None}
        configs.append(validate_config(record, f"sweep gamma={gamma} amplitude={amplitude}"))
    return configs


def sweep(config: RunConfig) -> tuple[Path, list[RunResult]]:
    sweep_id = config.run_id
    configs = sweep_configs(config)
    logger.info("Sweep %s: %d runs", sweep_id, len(configs))
    with ThreadPoolExecutor(max_workers=config.sweep.workers) as pool:
        results = list(pool.map(lambda c: run(c, sweep_id), configs))

    rows = [
        [
            result.run_id,
            c.nonlinearity.gamma,
            getattr(c.initial_data, "amplitude", getattr(c.initial_data, "target_norm", None)),
            result.trace.status.value,
            result.admissibility.admissible,
            result.trace.reports[-1].energy if result.trace.reports else None,
            result.trace.final_time,
        ]
        for c, result in zip(configs, results)
    ]
    columns = ["run_id", "gamma", "amplitude", "status", "admissible", "energy", "final_time"]
    path = write_table(
        Path(config.output_dir) / f"sweep-{sweep_id}" / "index.csv",
        columns,
        rows,
        {"kind": "sweep", "run_id": sweep_id, "config": config.record()},
    )
    return path, results


def ground_state_report(config: RunConfig) -> Path:
    constants = ground_state_constants(config.grid.dimension)
    directory = Path(config.output_dir) / f"ground-state-n{config.grid.dimension}"
    write_config(config, directory / "config.yaml")
    return write_key_values(directory / "constants.txt", constants.to_dict(), _header(config, "ground-state"))


__all__ = [
    "RunResult",
    "analyze",
    "classify",
    "ground_state_report",
    "initial_field",
    "run",
    "run_context",
    "run_directory",
    "simulate",
    "sweep",
    "sweep_configs",
]
