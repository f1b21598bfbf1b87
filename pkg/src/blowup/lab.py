"""
Blowup lab - negative-energy data, blowup verdicts, minimal-mass brackets,
concentration scans and witness rescaling.

T* is the time at which the adaptive step fell below dt_min. Witness
snapshots sit at the first accepted steps past t_n = T* - T* 2^-n, collected
by a second deterministic run of the same configuration.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.analysis.observables import (
    RefinedStrichartzParams,
    concentration_mass,
    energy,
    mass,
    refined_strichartz_functional,
)
from src.errors import BracketError, ParameterError, ResolutionError, ScheduleError
from src.models import EventKind, SimConfig, Verdict
from src.solver.propagator import Trajectory, evolve
from src.spectral.builders import gaussian
from src.spectral.grid import Field, dilate, resolved_bands

logger = logging.getLogger(__name__)

WITNESS_COUNT = 12
WIDTH_HALVINGS = 10

Schedule = Callable[[float], float]
Family = Callable[[float], Field]


@dataclass
class Witness:
    """Snapshot at the first accepted step with t >= T* - T* 2^-n."""

    n: int
    t: float
    field: Field


@dataclass
class BlowupReport:
    """
    Verdict and evidence of one adaptive run.

    Attributes:
        verdict: Run classification
        alpha: Levy index of the run
        trigger_time: T*, set only for blowup-trigger verdicts
        reference_time: Time the witnesses approach; T* or one borrowed from a twin run
        dt_min: Step floor in force
        final_time: Last accepted time
        growth_history: (t, ||u||_{H^{alpha/2}}) per accepted step
        growth_factor: Largest seminorm over the initial one
        lqlr_partial: Final L^q0 L^r0 partial norm
        witnesses: Snapshots with strictly increasing times
        events: Event kinds recorded by the run
    """

    verdict: Verdict
    alpha: float
    trigger_time: Optional[float]
    reference_time: Optional[float]
    dt_min: float
    final_time: float
    growth_history: List[Tuple[float, float]] = field(default_factory=list)
    growth_factor: float = 1.0
    lqlr_partial: float = 0.0
    witnesses: List[Witness] = field(default_factory=list)
    events: List[str] = field(default_factory=list)

    @property
    def witness_times(self) -> List[float]:
        return [w.t for w in self.witnesses]


@dataclass
class MassTrial:
    mass: float
    verdict: Verdict


@dataclass
class MinimalMassEstimate:
    """
    Family-relative bracket on the blowup threshold.

    The bracket bounds where this data family starts to blow up; it is an
    upper-side estimate of the minimal blowup mass, not that mass itself.
    """

    lo: float
    hi: float
    family: str
    trials: List[MassTrial] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass
class ConcentrationRow:
    n: int
    t: float
    radius: float
    concentrated: float
    fraction: float
    ratio: float
    running_max: float


@dataclass
class ConcentrationReport:
    reference_time: float
    rows: List[ConcentrationRow] = field(default_factory=list)

    @property
    def fractions(self) -> List[float]:
        return [r.fraction for r in self.rows]


@dataclass
class RescaledSnapshot:
    t: float
    h: float
    band: int
    field: Field
    ratio: float


@dataclass
class RescaledSequence:
    snapshots: List[RescaledSnapshot]
    distances: List[float]
    warnings: List[str] = field(default_factory=list)

    @property
    def scales(self) -> List[float]:
        return [s.h for s in self.snapshots]

    @property
    def ratios(self) -> List[float]:
        return [s.ratio for s in self.snapshots]


@dataclass
class BlowupContrast:
    """
    A blowup run next to its lam-flipped twin.

    The twin starts from the same data and runs over the window [0, T*] of
    the blowup run; both witness sets are scanned with the same schedule.
    twin and the scans stay None unless the first run is a blowup trigger.
    """

    report: BlowupReport
    twin: Optional[BlowupReport] = None
    scan: Optional[ConcentrationReport] = None
    twin_scan: Optional[ConcentrationReport] = None


def box_radius(field_: Field) -> float:
    """Radius of the disc covering the whole box."""
    return field_.grid.half_width * math.sqrt(field_.grid.dim)


def power_schedule(alpha: float, reference_time: float, power: float = 0.5) -> Schedule:
    """lambda(t) = (T* - t)^{power / alpha}; power < 1 makes the ratio vanish."""
    return lambda t: max(reference_time - t, 0.0) ** (power / alpha)


def make_negative_energy_data(target_mass: float, width: float, cfg: SimConfig) -> Field:
    """
    Radial Gaussian of the given mass with negative energy.

    Halves the width up to ten times until E < 0.

    Raises:
        ParameterError: If no width reaches E < 0; the E(w) table is attached
    """
    table = {}
    w = width
    for _ in range(WIDTH_HALVINGS + 1):
        if w < 2.0 * cfg.grid.dx:
            break
        u = gaussian(cfg.grid, w)
        u = u * math.sqrt(target_mass / mass(u))
        sample = energy(u, cfg.alpha, cfg.lam)
        table[w] = sample.energy
        logger.debug("negative_energy width=%g energy=%.6e", w, sample.energy)
        if sample.energy < 0:
            logger.info("negative_energy mass=%g width=%g energy=%.6e", target_mass, w, sample.energy)
            return u
        w /= 2.0
    raise ParameterError(
        f"no width from {width:g} down reached negative energy at mass {target_mass:g} (lam={cfg.lam})",
        table,
    )


def witness_times(reference_time: float, start: float = 0.0, count: int = WITNESS_COUNT) -> List[float]:
    return [reference_time - (reference_time - start) * 2.0 ** (-n) for n in range(1, count + 1)]


def collect_witnesses(u0: Field, cfg: SimConfig, targets: Sequence[float]) -> Tuple[Trajectory, List[Witness]]:
    """Rerun from u0 and keep the first accepted state past each target time."""
    pending = list(enumerate(targets, start=1))
    captured: List[Witness] = []

    def hook(step: int, t: float, u: Field) -> None:
        while pending and t >= pending[0][1]:
            n, _ = pending.pop(0)
            # one witness per accepted step
            if captured and captured[-1].t == t:
                continue
            captured.append(Witness(n=n, t=t, field=u))

    traj = evolve(u0, cfg, hooks=[hook])
    return traj, captured


def _verdict(traj: Trajectory) -> Verdict:
    if traj.has_event(EventKind.BLOWUP_TRIGGER):
        return Verdict.BLOWUP_TRIGGER
    if traj.has_event(EventKind.DOMAIN_TOO_SMALL):
        return Verdict.DOMAIN_TOO_SMALL
    if traj.events:
        return Verdict.INCONCLUSIVE
    return Verdict.COMPLETED


def detect_blowup(u0: Field, cfg: SimConfig, reference_time: Optional[float] = None) -> BlowupReport:
    """
    Run an adaptive evolution and classify it.

    A blowup-trigger run is repeated once to collect witnesses approaching T*.
    A run given *reference_time* (a twin of a blowup run) collects witnesses
    approaching that time instead.

    Raises:
        ValueError: If adaptive stepping is disabled
    """
    if not cfg.adaptive.enabled:
        raise ValueError("blowup detection needs adaptive stepping")

    traj = evolve(u0, cfg)
    verdict = _verdict(traj)
    trigger = None
    if verdict == Verdict.BLOWUP_TRIGGER:
        trigger = next(e.t for e in traj.events if e.kind == EventKind.BLOWUP_TRIGGER)
    target = trigger if trigger is not None else reference_time

    witnesses: List[Witness] = []
    if target is not None and target > 0:
        _, witnesses = collect_witnesses(u0, cfg, witness_times(target))
        witnesses = [w for w in witnesses if w.t < target]

    history = list(traj.seminorm_history)
    initial = history[0][1]
    peak = max(s for _, s in history)
    growth = peak / initial if initial > 0 else 1.0
    report = BlowupReport(
        verdict=verdict,
        alpha=cfg.alpha,
        trigger_time=trigger,
        reference_time=target,
        dt_min=cfg.dt_min,
        final_time=traj.times[-1],
        growth_history=history,
        growth_factor=growth,
        lqlr_partial=traj.lqlr_partial,
        witnesses=witnesses,
        events=[e.kind.value for e in traj.events],
    )
    logger.info(
        "detect_blowup verdict=%s T=%s growth=%.3e witnesses=%d",
        verdict.value, trigger, growth, len(witnesses),
    )
    return report


def estimate_minimal_mass(
    family: Family,
    bracket: Tuple[float, float],
    n_bisect: int,
    cfg: SimConfig,
    family_name: str = "",
) -> MinimalMassEstimate:
    """
    Bisect the mass between a completed and a blowup-trigger verdict.

    Args:
        family: Mass -> initial data, fixed shape
        bracket: (m_lo, m_hi) seed
        n_bisect: Bisection steps; the width shrinks by 2^-n_bisect
        cfg: Adaptive solver configuration
        family_name: Label recorded on the estimate

    Raises:
        BracketError: If the seed endpoints do not straddle the threshold,
            or a trial ends with neither verdict
    """
    lo, hi = bracket
    if not lo < hi:
        raise BracketError(f"bracket must satisfy lo < hi, got ({lo}, {hi})")
    trials: List[MassTrial] = []

    def trial(m: float) -> Verdict:
        verdict = detect_blowup(family(m), cfg).verdict
        trials.append(MassTrial(mass=m, verdict=verdict))
        logger.info("minimal_mass trial mass=%.6g verdict=%s", m, verdict.value)
        return verdict

    v_lo, v_hi = trial(lo), trial(hi)
    if (v_lo, v_hi) != (Verdict.COMPLETED, Verdict.BLOWUP_TRIGGER):
        raise BracketError(
            f"bracket ({lo:g}, {hi:g}) gave verdicts ({v_lo.value}, {v_hi.value}); "
            "need (completed, blowup-trigger)"
        )

    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        verdict = trial(mid)
        if verdict == Verdict.COMPLETED:
            lo = mid
        elif verdict == Verdict.BLOWUP_TRIGGER:
            hi = mid
        else:
            raise BracketError(f"trial at mass {mid:g} ended {verdict.value}")
    return MinimalMassEstimate(lo=lo, hi=hi, family=family_name, trials=trials)


def concentration_scan(report: BlowupReport, schedule: Schedule) -> ConcentrationReport:
    """
    Mass inside |x| <= lambda(t_n) at every witness.

    The ratio (T* - t_n)^{1/alpha} / lambda(t_n) must not increase along
    the witnesses.

    Raises:
        ValueError: If the report has no reference time
        ScheduleError: Naming the first witness time that breaks the ratio condition
    """
    if report.reference_time is None:
        raise ValueError("concentration scan needs a blowup run or a borrowed reference time")
    t_star = report.reference_time
    out = ConcentrationReport(reference_time=t_star)
    previous = math.inf
    running = 0.0
    for w in report.witnesses:
        radius = schedule(w.t)
        if not radius > 0:
            raise ScheduleError(f"schedule gives radius {radius} at t_n={w.t:.9g}")
        ratio = (t_star - w.t) ** (1.0 / report.alpha) / radius
        if ratio > previous * (1.0 + 1e-12):
            raise ScheduleError(
                f"ratio (T*-t)^(1/alpha)/lambda grows at t_n={w.t:.9g}: {previous:.3e} -> {ratio:.3e}"
            )
        previous = ratio
        total = mass(w.field)
        inside = concentration_mass(w.field, radius)
        fraction = inside / total if total > 0 else 0.0
        running = max(running, fraction)
        out.rows.append(
            ConcentrationRow(
                n=w.n, t=w.t, radius=radius, concentrated=inside,
                fraction=fraction, ratio=ratio, running_max=running,
            )
        )
    return out


def rescaling_probe(
    report: BlowupReport,
    params: Optional[RefinedStrichartzParams] = None,
    tolerance: float = 1e-6,
) -> RescaledSequence:
    """
    Rescale every witness by its dominant frequency scale.

    h_n = 2^-k where k is the argmax band of the refined functional; the
    rescaled snapshot is h_n^{d/2} u(t_n, h_n x). Also reports pairwise
    distances of consecutive rescaled snapshots and h_n / (T* - t_n)^{1/alpha}.
    """
    params = params or RefinedStrichartzParams()
    out = RescaledSequence(snapshots=[], distances=[])
    for w in report.witnesses:
        _, band = refined_strichartz_functional(w.field, params)
        if band is None:
            out.warnings.append(f"zero witness at t={w.t:.9g}")
            continue
        if band == resolved_bands(w.field.grid)[-1]:
            out.warnings.append(f"resolution exhausted at t={w.t:.9g}: argmax band {band} is the top band")
        h = 2.0 ** (-band)
        try:
            rescaled = dilate(w.field, 1.0 / h, tolerance)
        except ResolutionError as e:
            out.warnings.append(f"t={w.t:.9g}: {e}")
            rescaled = dilate(w.field, 1.0 / h, tolerance=1.0)
        remaining = (report.reference_time - w.t) if report.reference_time is not None else float("nan")
        ratio = h / remaining ** (1.0 / report.alpha) if remaining > 0 else float("nan")
        out.snapshots.append(RescaledSnapshot(t=w.t, h=h, band=band, field=rescaled, ratio=ratio))

    for a, b in zip(out.snapshots, out.snapshots[1:]):
        out.distances.append(float(np.sqrt(mass(b.field - a.field))))
    for message in out.warnings:
        logger.warning("rescaling_probe %s", message)
    return out


def contrast_with_twin(u0: Field, cfg: SimConfig, schedule_power: float = 0.5) -> BlowupContrast:
    """
    Classify u0, and on a blowup trigger rerun it with lam flipped up to T*.

    Args:
        u0: Initial data
        cfg: Adaptive solver configuration of the first run
        schedule_power: Exponent of the concentration radius (T* - t)^{power/alpha}

    Returns:
        BlowupContrast; fractions of the blowup scan approach the trapped
        mass while those of a dispersing twin fall toward zero
    """
    report = detect_blowup(u0, cfg)
    out = BlowupContrast(report=report)
    if report.verdict != Verdict.BLOWUP_TRIGGER or not report.witnesses:
        return out

    schedule = power_schedule(cfg.alpha, report.reference_time, schedule_power)
    out.scan = concentration_scan(report, schedule)
    twin_cfg = cfg.model_copy(update={"lam": -cfg.lam, "t_end": report.trigger_time})
    out.twin = detect_blowup(u0, twin_cfg, reference_time=report.trigger_time)
    if out.twin.witnesses:
        out.twin_scan = concentration_scan(out.twin, schedule)
    logger.info(
        "contrast T=%.6g growth=%.3e twin=%s",
        report.trigger_time, report.growth_factor, out.twin.verdict.value,
    )
    return out
