"""
Spectral grid toolkit - transforms, Fourier multipliers and dyadic projections.

Fields live on the periodic box [-L, L)^d. The forward transform follows the
continuum convention f^(xi) = int e^{-ix.xi} f dx, so coefficients carry the
cell volume dx^d and the inverse carries (dxi / 2pi)^d. Coefficients are kept
in FFT order; the sign pattern (-1)^k accounts for the box starting at -L.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Union

import numpy as np
from scipy import fft as sfft
from scipy.special import gamma

from src.errors import DomainError, EmptyBandError, ResolutionError, StructuralError
from src.models import Grid

logger = logging.getLogger(__name__)

# The Riesz multiplier is singular at xi = 0; that mode is evaluated at
# |xi| = RIESZ_ZERO_MODE_SCALE * pi / L, the smallest nonzero lattice frequency.
RIESZ_ZERO_MODE_SCALE = 1.0

# 2/3 rule: keep signed indices with |k| < N/3 on every axis.
DEALIAS_FRACTION = 2.0 / 3.0


class Direction(str, Enum):
    """Transform direction."""
    FORWARD = "forward"
    INVERSE = "inverse"


@dataclass
class Field:
    """
    Complex samples of a function on a grid (physical space).

    Attributes:
        grid: Grid the samples live on
        values: Complex array of shape (N,)*d
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_grid_array(self.grid, self.values)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __add__(self, other: "Field") -> "Field":
        _require_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _require_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: complex) -> "Field":
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass
class SpectralField:
    """
    Continuum-normalized Fourier coefficients of a Field, in FFT order.

    Attributes:
        grid: Grid of the physical partner
        coefficients: Complex array of shape (N,)*d
    """

    grid: Grid
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = _as_grid_array(self.grid, self.coefficients)


def _as_grid_array(grid: Grid, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.complex128)
    if values.shape == grid.shape:
        return values
    if values.size == grid.n ** grid.dim:
        return values.reshape(grid.shape)
    raise StructuralError(
        f"array of size {values.size} does not fit grid with shape {grid.shape}"
    )


def _require_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise StructuralError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True)
class Lattice:
    """Precomputed coordinate and frequency arrays for one grid."""

    x_axis: np.ndarray
    radius: np.ndarray
    signed_index: np.ndarray
    xi_axis: np.ndarray
    xi_norm: np.ndarray
    sign: np.ndarray
    shell_inverse: np.ndarray
    shell_count: int


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@lru_cache(maxsize=32)
def lattice(grid: Grid) -> Lattice:
    """Coordinate/frequency registry, cached per grid (lru_cache is thread-safe)."""
    n, d = grid.n, grid.dim
    x_axis = -grid.half_width + grid.dx * np.arange(n)
    signed = np.rint(sfft.fftfreq(n, d=1.0 / n)).astype(np.int64)
    xi_axis = signed * grid.dxi

    xs = np.meshgrid(*([x_axis] * d), indexing="ij")
    radius = np.sqrt(sum(x ** 2 for x in xs))
    xis = np.meshgrid(*([xi_axis] * d), indexing="ij")
    xi_norm = np.sqrt(sum(k ** 2 for k in xis))

    parity = np.where(signed % 2 == 0, 1.0, -1.0)
    sign = np.ones(grid.shape)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = n
        sign = sign * parity.reshape(shape)

    # Exact shells: integer a1^2 + ... + ad^2 with a = j - N/2.
    offsets = np.arange(n, dtype=np.int64) - n // 2
    keys = sum(a ** 2 for a in np.meshgrid(*([offsets] * d), indexing="ij"))
    _, inverse = np.unique(keys.ravel(), return_inverse=True)

    return Lattice(
        x_axis=_frozen(x_axis),
        radius=_frozen(radius),
        signed_index=_frozen(signed),
        xi_axis=_frozen(xi_axis),
        xi_norm=_frozen(xi_norm),
        sign=_frozen(sign),
        shell_inverse=_frozen(inverse),
        shell_count=int(inverse.max()) + 1,
    )


def transform(
    f: Union[Field, SpectralField], direction: Union[Direction, str]
) -> Union[SpectralField, Field]:
    """
    Continuum-normalized discrete Fourier transform.

    Args:
        f: Field for forward, SpectralField for inverse
        direction: "forward" or "inverse"

    Returns:
        SpectralField (forward) or Field (inverse)

    Raises:
        StructuralError: If the input type does not match the direction
    """
    direction = Direction(direction)
    lat = lattice(f.grid)
    if direction == Direction.FORWARD:
        if not isinstance(f, Field):
            raise StructuralError("forward transform expects a physical-space Field")
        coeffs = sfft.fftn(f.values) * lat.sign * f.grid.cell_volume
        return SpectralField(f.grid, coeffs)
    if not isinstance(f, SpectralField):
        raise StructuralError("inverse transform expects a SpectralField")
    values = sfft.ifftn(f.coefficients * lat.sign) / f.grid.cell_volume
    return Field(f.grid, values)


def spectral_mass(s: SpectralField) -> float:
    """(2pi)^-d sum |f^|^2 dxi^d, equal to the physical mass by Parseval."""
    grid = s.grid
    weight = (grid.dxi / (2.0 * math.pi)) ** grid.dim
    return float(np.sum(np.abs(s.coefficients) ** 2) * weight)


def apply_symbol(f: Field, symbol: np.ndarray) -> Field:
    """Apply a Fourier multiplier given in FFT order."""
    return Field(f.grid, sfft.ifftn(sfft.fftn(f.values) * symbol))


def abs_derivative(f: Field, order: float) -> Field:
    """|grad|^order f for any order >= 0."""
    if order < 0:
        raise DomainError(f"order must be nonnegative, got {order}")
    return apply_symbol(f, lattice(f.grid).xi_norm ** order)


def fractional_laplacian_apply(f: Field, alpha: float) -> Field:
    """
    (-Delta)^{alpha/2} f = F^-1 |xi|^alpha F f.

    Raises:
        DomainError: If alpha is outside (1, 2]
    """
    if not (1.0 < alpha <= 2.0):
        raise DomainError(f"alpha={alpha} outside (1, 2]")
    return abs_derivative(f, alpha)


def riesz_constant(dim: int, alpha: float) -> float:
    """c_{d,alpha} with (|x|^-alpha)^(xi) = c_{d,alpha} |xi|^{alpha-d}."""
    return (
        math.pi ** (dim / 2.0)
        * 2.0 ** (dim - alpha)
        * gamma((dim - alpha) / 2.0)
        / gamma(alpha / 2.0)
    )


@lru_cache(maxsize=32)
def riesz_symbol(grid: Grid, alpha: float) -> np.ndarray:
    """Riesz multiplier on the lattice with the clamped zero mode."""
    lat = lattice(grid)
    c = riesz_constant(grid.dim, alpha)
    xi = lat.xi_norm.copy()
    xi[xi == 0] = RIESZ_ZERO_MODE_SCALE * grid.dxi
    return _frozen(c * xi ** (alpha - grid.dim))


def riesz_convolve(rho: Field, alpha: float) -> Field:
    """
    |x|^-alpha * rho as a Fourier multiplier.

    Raises:
        DomainError: If alpha is outside (1, d)
    """
    if not (1.0 < alpha < rho.grid.dim):
        raise DomainError(
            f"alpha={alpha} outside (1, {rho.grid.dim}); the Riesz kernel needs alpha < d"
        )
    return apply_symbol(rho, riesz_symbol(rho.grid, alpha))


def lp_eta(r: np.ndarray) -> np.ndarray:
    """Smoothed step: 1 on r <= 1, exp(1 - 1/(1 - (r-1)^2)) on (1, 2), 0 on r >= 2."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    out[r <= 1.0] = 1.0
    mid = (r > 1.0) & (r < 2.0)
    s = r[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - s * s))
    return out


def lp_chi(r: np.ndarray) -> np.ndarray:
    """Littlewood-Paley bump chi = eta(r) - eta(2r), supported in 1/2 < r < 2."""
    r = np.asarray(r, dtype=np.float64)
    return lp_eta(r) - lp_eta(2.0 * r)


@lru_cache(maxsize=256)
def band_symbol(grid: Grid, k: int) -> np.ndarray:
    """chi(xi / 2^k) on the lattice."""
    return _frozen(lp_chi(lattice(grid).xi_norm / 2.0 ** k))


def resolved_bands(grid: Grid) -> List[int]:
    """
    Bands whose symbols sum to one on dxi <= |xi| <= 2^k_max.

    The top band is the largest k with 2^k <= Nyquist.
    """
    k_lo = math.floor(math.log2(grid.dxi))
    k_hi = math.floor(math.log2(grid.nyquist))
    return list(range(k_lo, k_hi + 1))


def dyadic_project(f: Field, k: int) -> Field:
    """
    Littlewood-Paley projection P_k.

    Raises:
        EmptyBandError: If A_k holds no lattice frequency
    """
    symbol = band_symbol(f.grid, k)
    if not np.any(symbol > 0):
        raise EmptyBandError(f"band k={k} has no frequency on grid n={f.grid.n} L={f.grid.half_width}")
    return apply_symbol(f, symbol)


@lru_cache(maxsize=256)
def octave_mask(grid: Grid, k: int) -> np.ndarray:
    """Indicator of the octave 2^(k-1/2) < |xi| <= 2^(k+1/2); octaves tile the lattice."""
    xi = lattice(grid).xi_norm
    lo, hi = 2.0 ** (k - 0.5), 2.0 ** (k + 0.5)
    return _frozen(((xi > lo) & (xi <= hi)).astype(np.float64))


@lru_cache(maxsize=32)
def dealias_mask(grid: Grid) -> np.ndarray:
    signed = lattice(grid).signed_index
    keep = (np.abs(signed) < grid.n * DEALIAS_FRACTION / 2.0).astype(np.float64)
    mask = np.ones(grid.shape)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.n
        mask = mask * keep.reshape(shape)
    return _frozen(mask)


def dealias(f: Field) -> Field:
    """2/3-rule truncation."""
    return apply_symbol(f, dealias_mask(f.grid))


def spectral_tail_fraction(f: Field) -> float:
    """Fraction of spectral mass outside the 2/3-rule band."""
    power = np.abs(sfft.fftn(f.values)) ** 2
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    return float((power * (1.0 - dealias_mask(f.grid))).sum()) / total


def radial_symmetrize(f: Field) -> Field:
    """
    Average values over exact lattice shells |x| = const.

    Shells are closed under coordinate permutations and sign flips, so the
    output is invariant under the hyperoctahedral group; the map is a
    projection, hence idempotent.
    """
    lat = lattice(f.grid)
    flat = f.values.ravel()
    counts = np.bincount(lat.shell_inverse, minlength=lat.shell_count)
    re = np.bincount(lat.shell_inverse, weights=flat.real, minlength=lat.shell_count)
    im = np.bincount(lat.shell_inverse, weights=flat.imag, minlength=lat.shell_count)
    mean = (re + 1j * im) / counts
    return Field(f.grid, mean[lat.shell_inverse])


def dyadic_exponent(h: float) -> int:
    """Integer m with h = 2^m.

    Raises:
        DomainError: If h is not a power of two
    """
    if h <= 0:
        raise DomainError(f"scale must be positive, got {h}")
    m = round(math.log2(h))
    if not math.isclose(2.0 ** m, h, rel_tol=1e-12):
        raise DomainError(f"scale {h} is not dyadic")
    return m


def dilate(f: Field, h: float, tolerance: float = 1e-6) -> Field:
    """
    L^2-isometric dilation h^{-d/2} f(x / h) for dyadic h on the same grid.

    Concentration (h < 1) samples f at the grid points h^{-1} x_j, which are
    grid points; spreading (h > 1) samples f^ at h xi_k, which are lattice
    frequencies. Either way the output holds exact samples when f is
    resolved, and the discarded part is measured.

    Raises:
        ResolutionError: If more than *tolerance* of the mass is discarded
    """
    m = dyadic_exponent(h)
    if m == 0:
        return f.copy()

    grid = f.grid
    n, d = grid.n, grid.dim
    s = 2 ** abs(m)
    total = float(np.sum(np.abs(f.values) ** 2))
    lat = lattice(grid)

    if m < 0:
        # Frequencies of f above Nyquist/s would land beyond Nyquist.
        keep = np.abs(lat.signed_index) < n // (2 * s)
        power = np.abs(sfft.fftn(f.values)) ** 2
        kept = power[np.ix_(*([keep] * d))].sum()
        lost = 0.0 if total == 0.0 else 1.0 - float(kept) / float(power.sum())

        j = np.arange(n)
        src = s * j - (n // 2) * (s - 1)
        valid = (src >= 0) & (src < n)
        out = np.zeros(grid.shape, dtype=np.complex128)
        out[np.ix_(*([np.flatnonzero(valid)] * d))] = f.values[np.ix_(*([src[valid]] * d))]
        result = Field(grid, out * s ** (d / 2.0))
    else:
        # Mass of f outside the central box [-L/s, L/s)^d cannot fit after spreading.
        central = np.abs(lat.x_axis) < grid.half_width / s
        inner = np.sum(np.abs(f.values[np.ix_(*([central] * d))]) ** 2)
        lost = 0.0 if total == 0.0 else 1.0 - float(inner) / total

        spec = transform(f, Direction.FORWARD).coefficients
        target = s * lat.signed_index
        valid = (target >= -(n // 2)) & (target <= n // 2 - 1)
        pos = np.flatnonzero(valid)
        src = target[valid] % n
        out = np.zeros(grid.shape, dtype=np.complex128)
        out[np.ix_(*([pos] * d))] = spec[np.ix_(*([src] * d))] * s ** (d / 2.0)
        result = transform(SpectralField(grid, out), Direction.INVERSE)

    if lost > tolerance:
        raise ResolutionError(
            f"dilation h={h} discards {lost:.3e} of the mass (tolerance {tolerance:.1e})"
        )
    if lost > 0:
        logger.debug("dilate h=%s discarded_fraction=%.3e", h, lost)
    return result
