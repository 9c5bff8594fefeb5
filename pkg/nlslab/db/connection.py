"""SQLite connection + initialization for the run index."""

import os
import sqlite3
from pathlib import Path
from threading import Lock


db_lock = Lock()


def db_path() -> Path:
    root = Path(os.getenv("NLSLAB_OUTPUT_ROOT", "runs"))
    return Path(os.getenv("NLSLAB_INDEX_DB", root / "index.db"))


def get_conn(path: Path | None = None) -> sqlite3.Connection:
    path = path or db_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(path, check_same_thread=False)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(path: Path | None = None) -> None:
    with get_conn(path) as conn:
        conn.executescript(
            """
            CREATE TABLE IF NOT EXISTS runs (
                run_id TEXT PRIMARY KEY,
                sweep_id TEXT NOT NULL,
                parameters TEXT NOT NULL,
                status TEXT NOT NULL,
                admissible INTEGER NOT NULL,
                energy REAL NOT NULL,
                final_time REAL NOT NULL,
                created_order INTEGER NOT NULL
            );
            """
        )


__all__ = ["db_lock", "db_path", "get_conn", "init_db"]
