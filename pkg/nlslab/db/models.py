"""Run-index records independent of SQLite plumbing."""

import json
import sqlite3
from dataclasses import asdict, dataclass, field
from typing import Any, Dict


@dataclass
class RunRecord:
    run_id: str
    sweep_id: str = ""
    parameters: Dict[str, Any] = field(default_factory=dict)
    status: str = "completed"
    admissible: bool = False
    energy: float = 0.0
    final_time: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def parameters_json(self) -> str:
        return json.dumps(self.parameters, sort_keys=True)

    @classmethod
    def from_row(cls, row: sqlite3.Row | None) -> "RunRecord | None":
        if not row:
            return None
        return cls(
            run_id=str(row["run_id"]),
            sweep_id=str(row["sweep_id"]),
            parameters=_load_parameters(row["parameters"]),
            status=str(row["status"]),
            admissible=bool(row["admissible"]),
            energy=float(row["energy"]),
            final_time=float(row["final_time"]),
        )


def _load_parameters(raw: str | None) -> Dict[str, Any]:
    if not raw:
        return {}
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError:
        return {}
    return parsed if isinstance(parsed, dict) else {}


__all__ = ["RunRecord"]
