"""
Field builders - closed-form data used by experiments and synthetic mixtures.
"""

import numpy as np

from src.models import Grid
from src.spectral.grid import Direction, Field, SpectralField, lattice, transform


def gaussian(grid: Grid, width: float = 1.0, amplitude: complex = 1.0) -> Field:
    """amplitude * exp(-|x|^2 / (2 width^2))."""
    r = lattice(grid).radius
    return Field(grid, amplitude * np.exp(-(r ** 2) / (2.0 * width ** 2)))


def plane_wave(grid: Grid, index: tuple, amplitude: complex = 1.0) -> Field:
    """amplitude * exp(i x.xi0) for the on-lattice frequency xi0 = (pi/L) * index."""
    lat = lattice(grid)
    xs = np.meshgrid(*([lat.x_axis] * grid.dim), indexing="ij")
    phase = sum(grid.dxi * k * x for k, x in zip(index, xs))
    return Field(grid, amplitude * np.exp(1j * phase))


def annular_profile(grid: Grid, band: int, mass: float = 1.0) -> Field:
    """
    Radial profile whose spectrum is a smooth bump filling one octave.

    The spectrum is exp(1 - 1/(1 - u^2)) with u = 2 (log2|xi| - band), so it
    is supported in 2^(band-1/2) < |xi| < 2^(band+1/2).
    """
    xi = lattice(grid).xi_norm
    with np.errstate(divide="ignore"):
        u = 2.0 * (np.log2(np.where(xi > 0, xi, 1e-300)) - band)
    spec = np.zeros(grid.shape)
    inside = np.abs(u) < 1.0
    spec[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    field = transform(SpectralField(grid, spec), Direction.INVERSE)
    current = float(np.sum(np.abs(field.values) ** 2) * grid.cell_volume)
    if current == 0.0:
        return field
    return field * np.sqrt(mass / current)
