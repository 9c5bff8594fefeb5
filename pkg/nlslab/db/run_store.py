"""Run-index persistence: one row per executed run."""

from pathlib import Path

from nlslab.db.connection import db_lock, get_conn, init_db
from nlslab.db.models import RunRecord


def record_run(record: RunRecord, path: Path | None = None) -> None:
    init_db(path)
    with db_lock, get_conn(path) as conn:
        order = conn.execute("SELECT COALESCE(MAX(created_order), 0) + 1 FROM runs").fetchone()[0]
        conn.execute(
            """
            INSERT INTO runs (
                run_id, sweep_id, parameters, status, admissible, energy, final_time, created_order
            )
            VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            ON CONFLICT(run_id) DO UPDATE SET
                sweep_id=excluded.sweep_id,
                parameters=excluded.parameters,
                status=excluded.status,
                admissible=excluded.admissible,
                energy=excluded.energy,
                final_time=excluded.final_time
            """,
            (
                record.run_id,
                record.sweep_id,
                record.parameters_json(),
                record.status,
                int(record.admissible),
                float(record.energy),
                float(record.final_time),
                int(order),
            ),
        )


def get_run(run_id: str, path: Path | None = None) -> RunRecord | None:
    init_db(path)
    with db_lock, get_conn(path) as conn:
        row = conn.execute("SELECT * FROM runs WHERE run_id = ?", (run_id,)).fetchone()
    return RunRecord.from_row(row)


def list_runs(sweep_id: str | None = None, path: Path | None = None) -> list[RunRecord]:
    init_db(path)
    query = "SELECT * FROM runs"
    args: tuple[str, ...] = ()
    if sweep_id is not None:
        query += " WHERE sweep_id = ?"
        args = (sweep_id,)
    with db_lock, get_conn(path) as conn:
        rows = conn.execute(query + " ORDER BY created_order", args).fetchall()
    return [record for record in (RunRecord.from_row(row) for row in rows) if record is not None]


__all__ = ["get_run", "list_runs", "record_run"]
