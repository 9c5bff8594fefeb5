"""Admissibility router: classify initial data without evolving it."""

import logging
import math
from typing import Any

import numpy as np
from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from nlslab.errors import NlslabError
from nlslab.runner.config import validate_config
from nlslab.runner.config_loader import load_defaults
from nlslab.runner.pipeline import classify

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/classify", tags=["classify"])


def json_safe(value: Any) -> Any:
    """Numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class ClassifyRequest(BaseModel):
    grid: dict[str, Any] = Field(default_factory=dict, description="Overrides for the grid section.")
    nonlinearity: dict[str, Any] = Field(default_factory=dict)
    thresholds: dict[str, Any] = Field(default_factory=dict)
    initial_data: dict[str, Any] | None = Field(None, description="Initial-data descriptor with a `family` key.")
    seed: int = Field(0, ge=0)


@router.post("")
async def classify_initial_data(body: ClassifyRequest):
    """Run the initial-assumption checks on the bundled defaults patched with the request body."""

    record = load_defaults()
    for section in ("grid", "nonlinearity", "thresholds"):
        record[section] = {**record.get(section, {}), **getattr(body, section)}
    if body.initial_data is not None:
        record["initial_data"] = body.initial_data
    record["seed"] = body.seed
    try:
        config = validate_config(record, "request")
        result = classify(config, write=False)
    except NlslabError as exc:
        logger.warning("Rejected classify request: %s", exc)
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return {"status": "ok", "run_id": config.run_id, "report": json_safe(result.admissibility.to_dict())}


__all__ = ["json_safe", "router"]
