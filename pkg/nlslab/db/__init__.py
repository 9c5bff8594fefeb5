"""DB package exposing the run index."""

from .backend import RunIndexBackend, SQLiteBackend, configure_backend, get_backend
from .models import RunRecord


def record_run(record: RunRecord) -> None:
    get_backend().record_run(record)


def get_run(run_id: str) -> RunRecord | None:
    return get_backend().get_run(run_id)


def list_runs(sweep_id: str | None = None) -> list[RunRecord]:
    return get_backend().list_runs(sweep_id)


__all__ = [
    "RunIndexBackend",
    "RunRecord",
    "SQLiteBackend",
    "configure_backend",
    "get_backend",
    "get_run",
    "list_runs",
    "record_run",
]
