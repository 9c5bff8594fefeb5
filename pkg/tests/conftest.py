import pytest

from nlslab.db import SQLiteBackend, configure_backend
from nlslab.runner.config import RunConfig, validate_config


@pytest.fixture
def index_backend(tmp_path):
    backend = SQLiteBackend(tmp_path / "index.db")
    configure_backend(backend)
    yield backend
    configure_backend(None)


@pytest.fixture
def small_config(tmp_path):
    """A desk-sized run writing under tmp_path; keyword overrides patch whole sections."""

    def build(**sections) -> RunConfig:
        record = {
            "grid": {"dimension": 3, "r_max": 20.0, "modes": 64},
            "nonlinearity": {"gamma": 0.05},
            "evolution": {"t_end": 0.2, "snapshot_stride": 2},
            "initial_data": {"family": "gaussian", "amplitude": 0.5, "width": 2.0},
            "analysis": {"virial_scales": [5.0]},
            "output_dir": str(tmp_path / "runs"),
        }
        record.update(sections)
        return validate_config(record, "test")

    return build
