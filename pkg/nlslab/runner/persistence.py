"""
Trace and report files.

Every file opens with `# nlslab <version> <json>` carrying the effective
config; floats are written with 17 significant digits so a reload and
re-serialize reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from nlslab import __version__
from nlslab.core.evolution import EvolutionParams, HaltStatus, Trace
from nlslab.core.functionals import NonlinearityParams
from nlslab.core.grid import GridSpec, RadialField, build_basis
from nlslab.errors import ConfigError

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# nlslab "


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (list, tuple)):
        return " ".join(format_value(item) for item in value)
    return str(value)


def header_line(payload: Mapping[str, Any], version: str = __version__) -> str:
    return f"{HEADER_PREFIX}{version} {json.dumps(payload, sort_keys=True)}\n"


def parse_header(line: str) -> tuple[str, dict[str, Any]]:
    if not line.startswith(HEADER_PREFIX):
        raise ConfigError(f"Missing nlslab header, got {line[:40]!r}")
    version, _, payload = line[len(HEADER_PREFIX) :].rstrip("\n").partition(" ")
    try:
        return version, json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Corrupt header payload: {exc}") from exc


@dataclass
class TraceFile:
    version: str
    header: dict[str, Any]
    times: list[float]
    samples: np.ndarray

    @classmethod
    def from_trace(cls, trace: Trace, config: Mapping[str, Any]) -> "TraceFile":
        header = {"kind": "trace", "config": dict(config), **trace.metadata()}
        samples = np.array([f.values for f in trace.fields]) if trace.fields else np.zeros((0, trace.spec.modes), complex)
        return cls(version=__version__, header=header, times=list(trace.times), samples=samples)

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(header_line(self.header, self.version))
        for time, row in zip(self.times, self.samples):
            interleaved = np.empty(2 * row.size)
            interleaved[0::2], interleaved[1::2] = row.real, row.imag
            out.write(",".join([format_value(float(time))] + [format(x, ".17g") for x in interleaved]))
            out.write("\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "TraceFile":
        lines = text.splitlines()
        if not lines:
            raise ConfigError("Empty trace file")
        version, header = parse_header(lines[0])
        times, rows = [], []
        for number, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) % 2 != 1:
                raise ConfigError(f"Trace line {number}: expected t plus re/im pairs, got {len(parts)} fields")
            numbers = np.array([float(x) for x in parts[1:]])
            row = np.empty(numbers.size // 2, dtype=complex)
            # Assigned by component so signed zeros survive.
            row.real, row.imag = numbers[0::2], numbers[1::2]
            times.append(float(parts[0]))
            rows.append(row)
        samples = np.array(rows) if rows else np.zeros((0, 0), complex)
        return cls(version=version, header=header, times=times, samples=samples)

    def to_trace(self) -> Trace:
        """Rebuild a Trace (without energy reports) on the grid recorded in the header."""
        config = self.header["config"]
        spec = GridSpec(**config["grid"])
        basis = build_basis(spec)
        params = EvolutionParams(
            nonlinearity=NonlinearityParams(gamma=config["nonlinearity"]["gamma"], dimension=spec.dimension),
            regularity=config["thresholds"]["regularity"],
            **config["evolution"],
        )
        trace = Trace(spec=spec, params=params, dt=self.header["dt"])
        for time, row in zip(self.times, self.samples):
            trace.record(time, RadialField(basis, row))
        if self.header.get("status"):
            trace.halt(HaltStatus(self.header["status"]), self.header["halt_time"])
        trace.trusted_horizon = self.header.get("trusted_horizon")
        return trace


def write_trace(trace: Trace, config: Mapping[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(TraceFile.from_trace(trace, config).dumps(), encoding="utf-8")
    logger.info("Wrote %d snapshots to %s", len(trace.times), path)
    return path


def read_trace(path: str | Path) -> TraceFile:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Trace file not found: {path}")
    return TraceFile.loads(path.read_text(encoding="utf-8"))


def write_table(
    path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], header: Mapping[str, Any]
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = io.StringIO()
    out.write(header_line(header))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(value) for value in row])
    path.write_text(out.getvalue(), encoding="utf-8")
    return path


def write_key_values(path: str | Path, values: Mapping[str, Any], header: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [header_line(header)]
    lines += [f"{key}={format_value(value)}\n" for key, value in values.items()]
    path.write_text("".join(lines), encoding="utf-8")
    return path


def read_key_values(path: str | Path) -> tuple[dict[str, Any], dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    _, header = parse_header(lines[0])
    values = dict(line.split("=", 1) for line in lines[1:] if line)
    return header, values


__all__ = [
    "TraceFile",
    "format_value",
    "header_line",
    "parse_header",
    "read_key_values",
    "read_trace",
    "write_key_values",
    "write_table",
    "write_trace",
]
