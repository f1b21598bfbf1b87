"""
Profile extraction - greedy scale selection and time-shift deflation.

Scale extraction peels the dyadic octave carrying the largest refined
Strichartz band weight off the running residual until the functional drops
below delta * ||u||. Time-shift extraction then searches a shift lattice for
the linear-flow translate with the most mass near the origin and deflates it.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.analysis.observables import (
    RefinedStrichartzParams,
    band_weights,
    mass,
    refined_strichartz_functional,
)
from src.errors import DomainError
from src.models import ExtractionConfig
from src.solver.propagator import linear_propagate
from src.spectral.grid import (
    Direction,
    Field,
    SpectralField,
    dilate,
    lattice,
    octave_mask,
    transform,
)

logger = logging.getLogger(__name__)


@dataclass
class ScalePiece:
    """Octave-restricted piece removed in one pass."""

    band: int
    field: Field
    functional: float


@dataclass
class ScaleGroup:
    """
    Pieces whose bands are within the orthogonality ratio of the leading band.

    Attributes:
        band: Band of the first piece placed in the group
        pieces: Pieces in extraction order
    """

    band: int
    pieces: List[ScalePiece] = field(default_factory=list)

    @property
    def bands(self) -> List[int]:
        return [p.band for p in self.pieces]

    @property
    def field(self) -> Field:
        total = self.pieces[0].field.copy()
        for piece in self.pieces[1:]:
            total = total + piece.field
        return total


@dataclass
class ScaleExtraction:
    """Result of extract_scales; u = sum of group fields + leftover."""

    groups: List[ScaleGroup]
    leftover: Field
    functional_history: List[float]
    warnings: List[str] = field(default_factory=list)

    @property
    def pieces(self) -> List[ScalePiece]:
        return [p for g in self.groups for p in g.pieces]


@dataclass
class ShiftProfile:
    """
    One time-shift profile.

    Attributes:
        profile: Profile in the unit frame
        native: Same profile in the frame of the input sequence
        shift: Unit-frame shift s
        time: Native-frame time h^alpha * s
        correlation: Score c(s) at acceptance
    """

    profile: Field
    native: Field
    shift: float
    time: float
    correlation: float


@dataclass
class ShiftExtraction:
    """Result of extract_time_shifts; remainders are the deflated sequence."""

    profiles: List[ShiftProfile]
    remainders: List[Field]
    correlations: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def amplitude_cap(norm: float, band: int, dim: int, cfg: ExtractionConfig) -> float:
    """Level above which Fourier values are left in the residual."""
    p, theta = cfg.p, cfg.theta
    rho = 2.0 ** (band + 0.5)
    return (
        norm
        * (cfg.cap_constant / 2.0) ** (p / (2.0 - p))
        * rho ** (-dim / 2.0)
        * cfg.delta ** (p / (theta * (p - 2.0)))
    )


def _group_pieces(pieces: List[ScalePiece], ratio: float) -> List[ScaleGroup]:
    groups: List[ScaleGroup] = []
    for piece in pieces:
        for group in groups:
            if 2.0 ** abs(piece.band - group.band) < ratio:
                group.pieces.append(piece)
                break
        else:
            groups.append(ScaleGroup(band=piece.band, pieces=[piece]))
    return groups


def extract_scales(u: Field, cfg: ExtractionConfig) -> ScaleExtraction:
    """
    Split u into octave-restricted pieces grouped by scale.

    Each pass takes the argmax band of the refined functional on the residual
    and removes the residual's spectrum inside that octave, except values
    above the amplitude cap. Octaves with nothing left to remove are skipped.

    Args:
        u: Nonzero field
        cfg: Extraction settings

    Returns:
        ScaleExtraction with exact telescoping u = sum of pieces + leftover

    Raises:
        DomainError: If u is zero
    """
    norm = math.sqrt(mass(u))
    if norm == 0.0:
        raise DomainError("scale extraction needs a nonzero field")
    params = RefinedStrichartzParams.from_extraction(cfg)
    threshold = cfg.delta * norm
    grid = u.grid

    coeffs = transform(u, Direction.FORWARD).coefficients.copy()
    residual = u.copy()
    value, _ = refined_strichartz_functional(residual, params)
    history = [value]
    pieces: List[ScalePiece] = []
    exhausted = set()
    warnings: List[str] = []
    stopped = False

    for _ in range(cfg.max_passes):
        weights = band_weights(residual, params)
        open_bands = sorted(k for k in weights if k not in exhausted)
        best = max(open_bands, key=lambda k: (weights[k], -k), default=None)
        if best is None or weights[best] < threshold:
            if history[-1] >= threshold:
                warnings.append(
                    f"functional {history[-1]:.3e} stays above {threshold:.3e}: "
                    "the rest sits above the amplitude cap or in spent octaves"
                )
            stopped = True
            break

        cap = amplitude_cap(norm, best, grid.dim, cfg)
        take = (octave_mask(grid, best) > 0) & (np.abs(coeffs) <= cap)
        if not np.any(take & (coeffs != 0)):
            exhausted.add(best)
            continue

        piece = transform(SpectralField(grid, np.where(take, coeffs, 0.0)), Direction.INVERSE)
        coeffs = np.where(take, 0.0, coeffs)
        residual = transform(SpectralField(grid, coeffs), Direction.INVERSE)
        exhausted.add(best)
        pieces.append(ScalePiece(band=best, field=piece, functional=weights[best]))
        value, _ = refined_strichartz_functional(residual, params)
        history.append(value)
        logger.debug("extract_scales band=%d functional=%.3e", best, value)

    if not stopped:
        warnings.append(f"no convergence within {cfg.max_passes} passes")
        logger.warning("extract_scales passes=%d functional=%.3e", cfg.max_passes, history[-1])

    # Leftover by subtraction keeps the telescoping exact.
    leftover = u.copy()
    for piece in pieces:
        leftover = leftover - piece.field
    groups = _group_pieces(pieces, cfg.orthogonality_ratio)
    logger.info(
        "extract_scales pieces=%d groups=%s leftover=%.3e",
        len(pieces), [g.band for g in groups], math.sqrt(mass(leftover)),
    )
    return ScaleExtraction(groups=groups, leftover=leftover, functional_history=history, warnings=warnings)


def shift_lattice(cfg: ExtractionConfig) -> List[float]:
    """Candidate shifts ordered by |s|, then s, so strict maxima break ties toward 0."""
    k_max = int(math.floor(cfg.shift_max / cfg.shift_step + 1e-9))
    shifts = [k * cfg.shift_step for k in range(-k_max, k_max + 1)]
    return sorted(shifts, key=lambda s: (abs(s), s))


def _l2(values: np.ndarray, cell_volume: float) -> float:
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * cell_volume))


def extract_time_shifts(
    sequence: Sequence[Field],
    cfg: ExtractionConfig,
    alpha: float,
    scale: float = 1.0,
) -> ShiftExtraction:
    """
    Extract time-translated profiles from a sequence living at one scale.

    Scores are c(s) = ||1_{|x| <= h R_focus} U(-h^alpha s) F_avg||_2 where
    F_avg averages the sequence tail. The accepted profile is the window
    restriction of U(-h^alpha s*) F_avg and every member is deflated by its
    forward translate, so the profile is orthogonal to the deflated average.

    Args:
        sequence: Fields at a common scale on one grid
        cfg: Extraction settings
        alpha: Levy index of the linear flow
        scale: Dyadic scale h of the sequence; windows scale with h, times with h^alpha

    Returns:
        ShiftExtraction with unit-frame profiles and deflated members
    """
    if not sequence:
        return ShiftExtraction(profiles=[], remainders=[])

    grid = sequence[0].grid
    cell = grid.cell_volume
    radius = lattice(grid).radius
    focus = radius <= scale * cfg.focus_radius
    window = radius <= scale * cfg.window_radius
    time_unit = scale ** alpha

    members = [f.copy() for f in sequence]
    tail_len = cfg.tail_length or len(members)
    reference = math.sqrt(np.mean([mass(f) for f in members[-tail_len:]]))
    floor = cfg.mu_floor * reference
    candidates = shift_lattice(cfg)

    result = ShiftExtraction(profiles=[], remainders=members)
    if reference == 0.0:
        return result

    for _ in range(cfg.max_profiles):
        tail = members[-tail_len:]
        average = tail[0].with_values(np.mean([f.values for f in tail], axis=0))
        scores: Dict[float, float] = {}
        for s in candidates:
            back = linear_propagate(average, -time_unit * s, alpha)
            scores[s] = _l2(np.where(focus, back.values, 0.0), cell)

        accepted = [p.shift for p in result.profiles]
        best_any: Optional[float] = None
        best_free: Optional[float] = None
        for s in candidates:
            if best_any is None or scores[s] > scores[best_any]:
                best_any = s
            if any(abs(s - a) < cfg.time_separation for a in accepted):
                continue
            if best_free is None or scores[s] > scores[best_free]:
                best_free = s

        if best_free is None or scores[best_free] < floor:
            if best_any is not None and scores[best_any] >= floor:
                result.warnings.append(
                    f"separation conflict: shift {best_any:g} scores {scores[best_any]:.3e} "
                    f"but lies within {cfg.time_separation:g} of an accepted shift"
                )
                logger.warning("extract_time_shifts separation_conflict shift=%g", best_any)
            break

        s_star = best_free
        back = linear_propagate(average, -time_unit * s_star, alpha)
        native = back.with_values(np.where(window, back.values, 0.0))
        forward = linear_propagate(native, time_unit * s_star, alpha)
        members = [f - forward for f in members]
        result.remainders = members

        profile = dilate(native, 1.0 / scale, tolerance=cfg.resolution_tolerance)
        result.profiles.append(
            ShiftProfile(
                profile=profile,
                native=native,
                shift=s_star,
                time=time_unit * s_star,
                correlation=scores[s_star],
            )
        )
        result.correlations.append(scores[s_star])
        logger.debug("extract_time_shifts shift=%g score=%.3e", s_star, scores[s_star])

    logger.info(
        "extract_time_shifts scale=%g profiles=%d shifts=%s",
        scale, len(result.profiles), [p.shift for p in result.profiles],
    )
    return result
