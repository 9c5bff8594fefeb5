"""Exception hierarchy shared by every nlslab layer."""


class NlslabError(Exception):
    """Base class; the CLI maps it to exit code 2 and the HTTP layer to 400."""


class GridError(NlslabError, ValueError):
    pass


class BasisError(NlslabError, RuntimeError):
    pass


class FieldError(NlslabError, ValueError):
    pass


class QuadratureError(NlslabError, RuntimeError):
    pass


class EvolutionError(NlslabError, RuntimeError):
    pass


class ThresholdError(NlslabError, ValueError):
    pass


class AnalysisError(NlslabError, ValueError):
    pass


class ConfigError(NlslabError, ValueError):
    pass


__all__ = [
    "AnalysisError",
    "BasisError",
    "ConfigError",
    "EvolutionError",
    "FieldError",
    "GridError",
    "NlslabError",
    "QuadratureError",
    "ThresholdError",
]
