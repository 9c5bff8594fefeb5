"""Run orchestration: config, initial data, persistence, pipeline and the verify suite."""

from .config import RunConfig, dump_config, parse_config
from .pipeline import analyze, classify, run, simulate, sweep
from .verify import verify

__all__ = ["RunConfig", "analyze", "classify", "dump_config", "parse_config", "run", "simulate", "sweep", "verify"]
