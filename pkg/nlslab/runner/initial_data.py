"""Initial-data families sampled on the grid."""

from __future__ import annotations

import logging

import numpy as np

from nlslab.core.functionals import htilde_norm
from nlslab.core.grid import GridSpec, RadialField, build_basis
from nlslab.core.ground_state import ground_state_profile
from nlslab.errors import ConfigError
from nlslab.runner.config import GaussianData, GroundStateData, InitialData, RandomSmoothData, RingData

logger = logging.getLogger(__name__)


def gaussian(spec: GridSpec, amplitude: float, width: float) -> RadialField:
    """a exp(-r^2 / sigma^2)."""
    basis = build_basis(spec)
    return RadialField(basis, amplitude * np.exp(-((basis.nodes / width) ** 2)))


def ring(spec: GridSpec, amplitude: float, radius: float, width: float) -> RadialField:
    basis = build_basis(spec)
    return RadialField(basis, amplitude * np.exp(-(((basis.nodes - radius) / width) ** 2)))


def random_smooth(spec: GridSpec, seed: int, target_norm: float, regularity: float, components: int = 6, max_width: float = 4.0) -> RadialField:
    """Seeded sum of complex Gaussians rescaled to ||f||_{H~^k} = target_norm."""
    basis = build_basis(spec)
    rng = np.random.default_rng(seed)
    widths = rng.uniform(0.5, max_width, size=components)
    centres = rng.uniform(0.0, max_width, size=components)
    weights = rng.standard_normal(components) + 1j * rng.standard_normal(components)
    r = basis.nodes[:, None]
    values = np.exp(-(((r - centres) / widths) ** 2)) @ weights
    field = RadialField(basis, values)
    norm = htilde_norm(field, regularity)
    if target_norm == 0 or norm == 0:
        return RadialField.zeros(basis)
    return field * (target_norm / norm)


def make_initial_data(descriptor: InitialData, spec: GridSpec, seed: int = 0, regularity: float = 2.0) -> RadialField:
    if isinstance(descriptor, GaussianData):
        field = gaussian(spec, descriptor.amplitude, descriptor.width)
    elif isinstance(descriptor, GroundStateData):
        field = ground_state_profile(spec, descriptor.scale, descriptor.phase) * descriptor.amplitude
    elif isinstance(descriptor, RingData):
        field = ring(spec, descriptor.amplitude, descriptor.radius, descriptor.width)
    elif isinstance(descriptor, RandomSmoothData):
        field = random_smooth(
            spec, seed, descriptor.target_norm, regularity, descriptor.components, descriptor.max_width
        )
    else:
        raise ConfigError(f"Unknown initial-data family: {getattr(descriptor, 'family', descriptor)!r}")
    logger.debug("Built %s initial data on %s", descriptor.family, spec)
    return field


__all__ = ["gaussian", "make_initial_data", "random_smooth", "ring"]
