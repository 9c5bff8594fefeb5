"""Radial simulator and diagnostics for the focusing log energy-supercritical NLS."""

__version__ = "0.1.0"

__all__ = ["__version__"]
