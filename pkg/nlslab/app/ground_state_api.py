"""Ground-state constants router."""

from typing import Literal

from fastapi import APIRouter

from nlslab.app.classify_api import json_safe
from nlslab.core.ground_state import ground_state_constants

router = APIRouter(prefix="/ground-state", tags=["ground-state"])


@router.get("/{dimension}")
async def read_constants(dimension: Literal[3, 4, 5]):
    constants = ground_state_constants(dimension)
    return {"status": "ok", "dimension": dimension, "constants": json_safe(constants.to_dict())}


__all__ = ["router"]
