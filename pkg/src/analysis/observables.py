"""
Observables - conserved quantities, space-time norms and concentration integrals.

Mass and energy follow M(u) = int |u|^2 and
E(u) = 1/2 int conj(u) |grad|^alpha u - (lam/4) int conj(u) (|x|^-alpha * |u|^2) u.
Space-time norms use left-endpoint rectangles on the snapshot times.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.errors import DomainError
from src.models import ExtractionConfig
from src.spectral.grid import (
    Direction,
    Field,
    band_symbol,
    lattice,
    resolved_bands,
    riesz_convolve,
    transform,
)


@dataclass(frozen=True)
class StrichartzSpec:
    """
    Space-time exponent pair (q, r) for a Levy index alpha in dimension d.

    Exponents are stored as exact fractions so the scaling gap
    beta = d/2 - d/r - alpha/q of a constructed admissible pair is exactly 0.
    """

    q: Fraction
    r: Fraction
    alpha: Fraction
    dim: int

    def __post_init__(self):
        if self.q <= 2 or self.r <= 2:
            # also rules out the endpoint (2, 2(2d-1)/(2d-3))
            raise DomainError(f"Strichartz exponents must exceed 2, got q={self.q}, r={self.r}")

    @classmethod
    def from_exponents(cls, q: float, r: float, alpha: float, dim: int) -> "StrichartzSpec":
        return cls(Fraction(q), Fraction(r), Fraction(alpha), dim)

    @classmethod
    def scaling_pair(cls, alpha: float, dim: int) -> "StrichartzSpec":
        """(q0, r0) = (3, 6d / (3d - 2 alpha))."""
        a = Fraction(alpha)
        return cls(Fraction(3), Fraction(6 * dim) / (3 * dim - 2 * a), a, dim)

    @classmethod
    def for_space_exponent(cls, r: float, alpha: float, dim: int) -> "StrichartzSpec":
        """
        Admissible pair with a given space exponent.

        Any r in [6d/(3d - alpha), 6d/(3d - 2 alpha)] gives a pair usable for
        well-posedness; q solves alpha/q + d/r = d/2.
        """
        a, rr = Fraction(alpha), Fraction(r)
        lo = Fraction(6 * dim) / (3 * dim - a)
        hi = Fraction(6 * dim) / (3 * dim - 2 * a)
        if not (lo <= rr <= hi):
            raise DomainError(f"r={r} outside [{float(lo):.6g}, {float(hi):.6g}]")
        q = a / (Fraction(dim, 2) - Fraction(dim) / rr)
        return cls(q, rr, a, dim)

    @property
    def gap(self) -> Fraction:
        return Fraction(self.dim, 2) - Fraction(self.dim) / self.r - self.alpha / self.q

    @property
    def is_admissible(self) -> bool:
        return abs(float(self.gap)) < 1e-12


@dataclass(frozen=True)
class ConservationSample:
    """Mass and energy split at one time."""

    t: float
    mass: float
    energy: float
    kinetic: float
    potential: float


@dataclass(frozen=True)
class RefinedStrichartzParams:
    """
    Exponents of the refined functional sup_k 2^{kd(1/2-1/p)} ||(P_k f)^||_p.

    theta is carried for the amplitude cap of scale extraction; the
    functional itself does not use it.
    """

    p: float = 1.5
    theta: float = 1.0 / 3.0

    def __post_init__(self):
        if not (1.0 < self.p < 2.0):
            raise DomainError(f"p={self.p} outside (1, 2)")
        if not (0.0 < self.theta < 1.0):
            raise DomainError(f"theta={self.theta} outside (0, 1)")

    @classmethod
    def from_extraction(cls, cfg: ExtractionConfig) -> "RefinedStrichartzParams":
        return cls(p=cfg.p, theta=cfg.theta)

    def weight_exponent(self, dim: int) -> float:
        return dim * (0.5 - 1.0 / self.p)


def mass(u: Field) -> float:
    return float(np.sum(np.abs(u.values) ** 2) * u.grid.cell_volume)


def lebesgue_norm(u: Field, r: float) -> float:
    """(sum |u|^r dx^d)^(1/r)."""
    return float(np.sum(np.abs(u.values) ** r) * u.grid.cell_volume) ** (1.0 / r)


def inner_product(a: Field, b: Field) -> complex:
    """<a, b> = sum conj(a) b dx^d."""
    return complex(np.vdot(a.values, b.values) * a.grid.cell_volume)


def hseminorm(u: Field, alpha: float) -> float:
    """||(-Delta)^{alpha/4} u||_2, evaluated on the spectrum."""
    grid = u.grid
    coeffs = transform(u, Direction.FORWARD).coefficients
    weight = (grid.dxi / (2.0 * math.pi)) ** grid.dim
    total = np.sum(lattice(grid).xi_norm ** alpha * np.abs(coeffs) ** 2) * weight
    return float(math.sqrt(max(total, 0.0)))


def energy(u: Field, alpha: float, lam: int, t: float = 0.0) -> ConservationSample:
    """
    Mass, kinetic and potential energy of u.

    lam = 0 freezes the Hartree term and leaves the kinetic part only.
    """
    kinetic = 0.5 * hseminorm(u, alpha) ** 2
    potential = 0.0
    if lam != 0:
        density = np.abs(u.values) ** 2
        potential_field = riesz_convolve(u.with_values(density), alpha).values.real
        potential = float(
            -(lam / 4.0) * np.sum(potential_field * density) * u.grid.cell_volume
        )
    return ConservationSample(
        t=t,
        mass=mass(u),
        energy=kinetic + potential,
        kinetic=kinetic,
        potential=potential,
    )


def strichartz_sum(times: Sequence[float], fields: Sequence[Field], spec: StrichartzSpec) -> float:
    """sum_i (t_{i+1} - t_i) ||u(t_i)||_r^q; the q-th power of the norm, additive over windows."""
    q, r = float(spec.q), float(spec.r)
    total = 0.0
    for i in range(len(times) - 1):
        total += (times[i + 1] - times[i]) * lebesgue_norm(fields[i], r) ** q
    return total


def strichartz_norm(traj, spec: StrichartzSpec) -> float:
    """L^q_t L^r_x norm of a trajectory's snapshots."""
    return strichartz_sum(traj.times, traj.fields, spec) ** (1.0 / float(spec.q))


def band_weights(f: Field, params: RefinedStrichartzParams) -> Dict[int, float]:
    """2^{kd(1/2-1/p)} ||chi(xi/2^k) f^||_p for every resolved band k."""
    grid = f.grid
    coeffs = np.abs(transform(f, Direction.FORWARD).coefficients)
    dvol = grid.dxi ** grid.dim
    exponent = params.weight_exponent(grid.dim)
    weights = {}
    for k in resolved_bands(grid):
        piece = band_symbol(grid, k) * coeffs
        norm_p = float(np.sum(piece ** params.p) * dvol) ** (1.0 / params.p)
        weights[k] = 2.0 ** (k * exponent) * norm_p
    return weights


def refined_strichartz_functional(
    f: Field, params: RefinedStrichartzParams
) -> Tuple[float, Optional[int]]:
    """
    sup over resolved bands of the weighted band norm.

    Returns:
        (value, argmax band); (0.0, None) for the zero field. Ties go to the lower band.
    """
    weights = band_weights(f, params)
    if not weights:
        return 0.0, None
    bands = sorted(weights)
    values = np.array([weights[k] for k in bands])
    best = int(np.argmax(values))
    if values[best] == 0.0:
        return 0.0, None
    return float(values[best]), bands[best]


def concentration_mass(u: Field, radius: float) -> float:
    """sum over |x| <= radius of |u|^2 dx^d."""
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    inside = lattice(u.grid).radius <= radius
    return float(np.sum(np.abs(u.values[inside]) ** 2) * u.grid.cell_volume)
