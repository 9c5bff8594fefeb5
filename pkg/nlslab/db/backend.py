"""Run-index backend abstraction with a default SQLite implementation.

The db facade delegates to the configured backend so the index can move
to another store via configuration without touching the runner.
"""

import os
from pathlib import Path
from typing import Protocol, runtime_checkable

from . import run_store
from .models import RunRecord


@runtime_checkable
class RunIndexBackend(Protocol):
    """Minimal contract for recording and fetching runs."""

    def record_run(self, record: RunRecord) -> None: ...

    def get_run(self, run_id: str) -> RunRecord | None: ...

    def list_runs(self, sweep_id: str | None = None) -> list[RunRecord]: ...


class SQLiteBackend:
    """Thin adapter over the SQLite run store."""

    def __init__(self, path: Path | None = None) -> None:
        self.path = path

    def record_run(self, record: RunRecord) -> None:
        run_store.record_run(record, self.path)

    def get_run(self, run_id: str) -> RunRecord | None:
        return run_store.get_run(run_id, self.path)

    def list_runs(self, sweep_id: str | None = None) -> list[RunRecord]:
        return run_store.list_runs(sweep_id, self.path)


_backend: RunIndexBackend | None = None


def configure_backend(backend: RunIndexBackend | None) -> None:
    """Override the current backend; None resets to the environment default."""
    global _backend
    _backend = backend


def _default_backend_name() -> str:
    return os.getenv("NLSLAB_INDEX_BACKEND", "sqlite").lower()


def get_backend(name: str | None = None) -> RunIndexBackend:
    global _backend
    if _backend is not None:
        return _backend

    backend_name = name or _default_backend_name()
    if backend_name == "sqlite":
        _backend = SQLiteBackend()
        return _backend

    raise ValueError(f"Unsupported run-index backend: {backend_name}")


__all__ = [
    "RunIndexBackend",
    "SQLiteBackend",
    "configure_backend",
    "get_backend",
]
