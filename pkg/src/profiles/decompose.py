"""
Profile decomposition - synthesis, assembly and orthogonality diagnostics.

A component (phi, h, t) contributes Gamma phi = U(t)[h^{-d/2} phi(./h)] to a
field. decompose chains scale extraction, per-group time-shift extraction and
the back-map (h, t) = (rho^-1, rho^-alpha s); the remainder is defined by
subtraction so synthesize(decompose(u)) reproduces u.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from src.analysis.observables import (
    StrichartzSpec,
    lebesgue_norm,
    mass,
    strichartz_sum,
)
from src.models import AdaptiveConfig, EventKind, ExtractionConfig, SimConfig
from src.profiles.extract import extract_scales, extract_time_shifts
from src.solver.propagator import evolve, hartree_nonlinearity, linear_propagate
from src.spectral.grid import (
    Direction,
    Field,
    SpectralField,
    dilate,
    dyadic_exponent,
    octave_mask,
    transform,
)

logger = logging.getLogger(__name__)


@dataclass
class ProfileComponent:
    """
    One bubble of a decomposition.

    Attributes:
        profile: Unit-frame profile phi, stored raw
        h: Dyadic scale
        t: Time shift in the frame of the decomposed field
        index: Position after sorting by mass
    """

    profile: Field
    h: float
    t: float
    index: int = 0

    def __post_init__(self):
        dyadic_exponent(self.h)

    @property
    def mass(self) -> float:
        return mass(self.profile)

    def embed(self, alpha: float, tolerance: float = 1e-6) -> Field:
        """Gamma phi = U(t)[h^{-d/2} phi(./h)]."""
        return linear_propagate(dilate(self.profile, self.h, tolerance), self.t, alpha)


@dataclass
class Decomposition:
    """
    Components plus remainder; remainder is None only for an empty input.

    The components are fitted to the last member, so remainder is that
    member's omega. member_remainders holds u_n - sum Gamma phi_j for every
    member in input order; its last entry is remainder.

    diagnostics holds pythagorean_defect, remainder_mass, remainder_strichartz,
    member_remainder_masses and the parameter-level orthogonality classification.
    """

    components: List[ProfileComponent]
    remainder: Optional[Field]
    alpha: float
    member_remainders: List[Field] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return self.remainder is None


@dataclass
class PairReport:
    j: int
    k: int
    classification: str
    bilinear: float
    product: float
    defect: float


@dataclass
class NonlinearCheckReport:
    """
    Comparison of the nonlinear flow of u with the superposed profile flows.

    Attributes:
        applicable: False when any run stopped on an event
        reason: Why the check is inapplicable
        error_sup: max over the window of ||e(t)||_2
        error_strichartz: L^q0 L^r0 norm of e on the window
        error_norm: error_sup + error_strichartz
        beta: Cross-interaction size of the nonlinearity
        reference_norm: ||u||_2
        times: Window lattice
    """

    applicable: bool
    reason: str = ""
    error_sup: float = float("nan")
    error_strichartz: float = float("nan")
    error_norm: float = float("nan")
    beta: float = float("nan")
    reference_norm: float = 0.0
    times: List[float] = field(default_factory=list)


def classify_pair(a: ProfileComponent, b: ProfileComponent, alpha: float, cfg: ExtractionConfig) -> str:
    """Which finite-n orthogonality alternative holds for a pair."""
    if a is b:
        return "same"
    ratio = max(a.h / b.h, b.h / a.h)
    if ratio >= cfg.orthogonality_ratio:
        return "scale"
    if a.h == b.h and abs(a.t - b.t) / a.h ** alpha >= cfg.time_separation:
        return "time"
    return "none"


def synthesize(
    components: Sequence[ProfileComponent],
    remainder: Optional[Field],
    alpha: float,
    tolerance: float = 1e-6,
) -> Field:
    """
    Sum of U(t_j)[h_j^{-d/2} phi_j(./h_j)] plus the remainder.

    Raises:
        ValueError: If there is neither a component nor a remainder
        ResolutionError: If a dilation pushes a profile off the grid
    """
    if remainder is None and not components:
        raise ValueError("nothing to synthesize")
    total = remainder.copy() if remainder is not None else None
    for component in components:
        piece = component.embed(alpha, tolerance)
        total = piece if total is None else total + piece
    return total


def _restrict(u: Field, bands: Sequence[int]) -> Field:
    grid = u.grid
    mask = np.zeros(grid.shape)
    for k in bands:
        mask = np.maximum(mask, octave_mask(grid, k))
    coeffs = transform(u, Direction.FORWARD).coefficients * mask
    return transform(SpectralField(grid, coeffs), Direction.INVERSE)


def _window_lattice(window_end: float, steps: int) -> List[float]:
    return [window_end * i / steps for i in range(steps + 1)]


def remainder_strichartz(remainder: Field, alpha: float, window_end: float, steps: int) -> float:
    """L^q0 L^r0 size of U(t) remainder on [0, window_end]."""
    spec = StrichartzSpec.scaling_pair(alpha, remainder.grid.dim)
    times = _window_lattice(window_end, steps)
    fields = [linear_propagate(remainder, t, alpha) for t in times]
    return strichartz_sum(times, fields, spec) ** (1.0 / float(spec.q))


def decompose(
    sequence: Sequence[Field],
    cfg: ExtractionConfig,
    alpha: float,
    window_end: float = 1.0,
    window_steps: int = 20,
) -> Decomposition:
    """
    Profile decomposition of a radial sequence.

    Scale groups come from the last member; every member is split with the
    same octave masks and each group is handed to time-shift extraction at
    its scale h = 2^-k. Each member's remainder is that member minus the
    synthesized components; the reported remainder is the last member's.

    Args:
        sequence: Fields u_n on one grid
        cfg: Extraction settings
        alpha: Levy index of the linear flow
        window_end: Window for the remainder's dispersive size
        window_steps: Rectangles on that window

    Returns:
        Decomposition with components sorted by mass, largest first
    """
    if not sequence:
        return Decomposition(components=[], remainder=None, alpha=alpha)

    reference = sequence[-1]
    scales = extract_scales(reference, cfg)
    warnings = list(scales.warnings)
    found: List[ProfileComponent] = []

    for group in scales.groups:
        h = 2.0 ** (-group.band)
        members = [_restrict(u, group.bands) for u in sequence]
        shifts = extract_time_shifts(members, cfg, alpha, scale=h)
        warnings.extend(shifts.warnings)
        for p in shifts.profiles:
            found.append(ProfileComponent(profile=p.profile, h=h, t=p.time))

    found.sort(key=lambda c: (-c.mass, c.h, c.t))
    for i, component in enumerate(found):
        component.index = i

    embedded = Field(reference.grid, np.zeros(reference.grid.shape))
    for component in found:
        embedded = embedded + component.embed(alpha, cfg.resolution_tolerance)
    member_remainders = [u - embedded for u in sequence]
    remainder = member_remainders[-1]

    total = mass(reference)
    defect = total - (sum(c.mass for c in found) + mass(remainder))
    classes = [[classify_pair(a, b, alpha, cfg) for b in found] for a in found]
    diagnostics = {
        "total_mass": total,
        "pythagorean_defect": defect,
        "remainder_mass": mass(remainder),
        "remainder_strichartz": remainder_strichartz(remainder, alpha, window_end, window_steps),
        "member_remainder_masses": [mass(w) for w in member_remainders],
        "scale_bands": [g.band for g in scales.groups],
        "orthogonality": classes,
    }
    logger.info(
        "decompose members=%d components=%d defect=%.3e remainder=%.3e",
        len(sequence), len(found), defect, math.sqrt(mass(remainder)),
    )
    return Decomposition(
        components=found,
        remainder=remainder,
        alpha=alpha,
        member_remainders=member_remainders,
        diagnostics=diagnostics,
        warnings=warnings,
    )


def _space_time_norm(series: Sequence[Field], times: Sequence[float], q: float, r: float) -> float:
    total = 0.0
    for i in range(len(times) - 1):
        total += (times[i + 1] - times[i]) * lebesgue_norm(series[i], r) ** q
    return total ** (1.0 / q)


def orthogonality_report(
    dec: Decomposition,
    cfg: ExtractionConfig,
    window_end: float = 1.0,
    window_steps: int = 20,
) -> List[PairReport]:
    """
    Pairwise orthogonality of the linear evolutions of the components.

    For every pair j <= k: the classification, the bilinear norm
    ||U Phi_j U Phi_k||_{L^{q/2} L^{r/2}}, the product of the individual
    L^q L^r norms and the defect ||U Phi_j + U Phi_k||^2 - ||U Phi_j||^2 - ||U Phi_k||^2,
    with (q, r) the scaling pair.

    Raises:
        ValueError: If the decomposition has no components
    """
    if not dec.components:
        raise ValueError("orthogonality report needs at least one component")
    alpha = dec.alpha
    grid = dec.components[0].profile.grid
    spec = StrichartzSpec.scaling_pair(alpha, grid.dim)
    q, r = float(spec.q), float(spec.r)
    times = _window_lattice(window_end, window_steps)

    series = []
    for component in dec.components:
        start = component.embed(alpha, cfg.resolution_tolerance)
        series.append([linear_propagate(start, t, alpha) for t in times])
    norms = [_space_time_norm(s, times, q, r) for s in series]

    pairs = []
    for j, a in enumerate(dec.components):
        for k in range(j, len(dec.components)):
            b = dec.components[k]
            products = [x.with_values(x.values * y.values) for x, y in zip(series[j], series[k])]
            bilinear = _space_time_norm(products, times, q / 2.0, r / 2.0)
            sums = [x + y for x, y in zip(series[j], series[k])]
            joint = _space_time_norm(sums, times, q, r)
            pairs.append(
                PairReport(
                    j=j,
                    k=k,
                    classification=classify_pair(a, b, alpha, cfg),
                    bilinear=bilinear,
                    product=norms[j] * norms[k],
                    defect=joint ** 2 - (norms[j] ** 2 + norms[k] ** 2),
                )
            )
    return pairs


def nonlinear_decomposition_check(
    dec: Decomposition, sim: SimConfig, window_end: float = 1.0
) -> NonlinearCheckReport:
    """
    Compare u(t) with sum_j psi_j(t) + U(t) remainder on [0, window_end].

    psi_j is the nonlinear evolution of the embedded component Gamma phi_j,
    which by the scaling symmetry is the rescaled flow of phi_j. All runs use
    the fixed step sim.dt so their snapshot times coincide.

    Returns:
        NonlinearCheckReport; applicable is False when any run recorded an event
    """
    if dec.is_empty:
        return NonlinearCheckReport(applicable=False, reason="empty decomposition")

    fixed = sim.model_copy(
        update={"t_end": window_end, "adaptive": AdaptiveConfig(enabled=False), "snapshot_every": 1}
    )
    u0 = synthesize(dec.components, dec.remainder, dec.alpha)
    starts = [c.embed(dec.alpha) for c in dec.components]

    runs = []
    for label, start in [("u", u0)] + [(f"profile {c.index}", s) for c, s in zip(dec.components, starts)]:
        traj = evolve(start, fixed)
        if traj.events:
            kinds = ",".join(e.kind.value for e in traj.events)
            blocked = traj.has_event(EventKind.BLOWUP_TRIGGER) or traj.has_event(EventKind.INTEGRATOR_DIVERGED)
            reason = f"{label} run stopped on {kinds}"
            logger.warning("nonlinear_check inapplicable %s blowup=%s", reason, blocked)
            return NonlinearCheckReport(applicable=False, reason=reason, reference_norm=math.sqrt(mass(u0)))
        runs.append(traj)

    reference, profiles = runs[0], runs[1:]
    times = list(reference.times)
    spec = reference.spec
    errors, interactions = [], []
    for i, t in enumerate(times):
        free = linear_propagate(dec.remainder, t, dec.alpha)
        superposed = free.copy()
        separate = Field(u0.grid, np.zeros(u0.grid.shape))
        for run in profiles:
            superposed = superposed + run.fields[i]
            separate = separate + hartree_nonlinearity(run.fields[i], sim.alpha, sim.lam)
        errors.append(reference.fields[i] - superposed)
        cross = hartree_nonlinearity(superposed, sim.alpha, sim.lam) - separate
        interactions.append(math.sqrt(mass(cross)))

    error_sup = max(math.sqrt(mass(e)) for e in errors)
    error_strichartz = strichartz_sum(times, errors, spec) ** (1.0 / float(spec.q))
    beta = sum((times[i + 1] - times[i]) * interactions[i] for i in range(len(times) - 1))
    logger.info(
        "nonlinear_check error_sup=%.3e error_strichartz=%.3e beta=%.3e",
        error_sup, error_strichartz, beta,
    )
    return NonlinearCheckReport(
        applicable=True,
        error_sup=error_sup,
        error_strichartz=error_strichartz,
        error_norm=error_sup + error_strichartz,
        beta=beta,
        reference_norm=math.sqrt(mass(u0)),
        times=times,
    )
