"""
Propagator - linear flow, Hartree nonlinearity and Strang-split time stepping.

Solves i u_t + (-Delta)^{alpha/2} u = lam (|x|^-alpha * |u|^2) u on the grid.
The linear flow is the multiplier e^{it|xi|^alpha}; the nonlinear sub-flow is
u -> e^{-i lam dt V} u with the real potential V frozen at the sub-step entry
state, so both sub-flows are unitary and mass is conserved to roundoff.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, List, Optional

import numpy as np

from src.analysis.observables import (
    StrichartzSpec,
    concentration_mass,
    energy,
    hseminorm,
    lebesgue_norm,
    mass,
)
from src.errors import DomainError, IntegratorDivergedError
from src.models import EventKind, Grid, SimConfig
from src.spectral.grid import (
    Field,
    apply_symbol,
    dealias,
    lattice,
    riesz_convolve,
    spectral_tail_fraction,
)

logger = logging.getLogger(__name__)

# Mass allowed outside |x| < L/2 before the run is stopped.
MASS_LEAK_TOLERANCE = 1e-3

# Tail growth over the initial data tolerated before resolution counts as exhausted.
RESOLUTION_TAIL_FACTOR = 10.0

Observer = Callable[[int, float, Field], None]


@dataclass
class TrajectoryEvent:
    """Recorded failure mode or stop reason."""

    kind: EventKind
    t: float
    dt: float
    detail: str = ""


@dataclass
class TrajectoryRow:
    """One line of the conservation log; one per snapshot."""

    t: float
    mass: float
    energy: float
    hseminorm: float
    lqlr_partial: float
    dt: float
    event: str = ""

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "mass": self.mass,
            "energy": self.energy,
            "hseminorm": self.hseminorm,
            "lqlr_partial": self.lqlr_partial,
            "dt": self.dt,
            "event": self.event,
        }


@dataclass
class Trajectory:
    """
    Time-ordered snapshots of one run.

    Attributes:
        grid: Grid shared by every snapshot
        times: Strictly increasing snapshot times
        fields: Snapshots at those times
        log: Conservation rows, one per snapshot
        events: Stop reasons and failure modes
        spec: Space-time pair of the running norm
        lqlr_sum: Running sum dt ||u||_r^q over accepted steps
        seminorm_history: (t, ||u||_{H^{alpha/2}}) per accepted step
        diagnostics: Extra per-driver results
    """

    grid: Grid
    spec: StrichartzSpec
    times: List[float] = field(default_factory=list)
    fields: List[Field] = field(default_factory=list)
    log: List[TrajectoryRow] = field(default_factory=list)
    events: List[TrajectoryEvent] = field(default_factory=list)
    lqlr_sum: float = 0.0
    seminorm_history: List[tuple] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def lqlr_partial(self) -> float:
        return self.lqlr_sum ** (1.0 / float(self.spec.q))

    @property
    def final(self) -> Field:
        return self.fields[-1]

    @property
    def event_kinds(self) -> List[EventKind]:
        return [e.kind for e in self.events]

    def has_event(self, kind: EventKind) -> bool:
        return kind in self.event_kinds

    def add_snapshot(self, t: float, u: Field, row: TrajectoryRow) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError(f"snapshot time {t} does not increase past {self.times[-1]}")
        if u.grid != self.grid:
            raise ValueError("snapshot grid differs from trajectory grid")
        self.times.append(t)
        self.fields.append(u)
        self.log.append(row)


def _check_alpha(alpha: float) -> None:
    if not (1.0 < alpha <= 2.0):
        raise DomainError(f"alpha={alpha} outside (1, 2]")


@lru_cache(maxsize=64)
def _linear_symbol(grid: Grid, alpha: float, t: float) -> np.ndarray:
    symbol = np.exp(1j * t * lattice(grid).xi_norm ** alpha)
    symbol.setflags(write=False)
    return symbol


def linear_propagate(f: Field, t: float, alpha: float) -> Field:
    """U(t) f with multiplier e^{it|xi|^alpha}."""
    _check_alpha(alpha)
    if t == 0:
        return f.copy()
    return apply_symbol(f, _linear_symbol(f.grid, alpha, float(t)))


def hartree_potential(u: Field, alpha: float, dealiased: bool = False) -> np.ndarray:
    """Real potential V = |x|^-alpha * |u|^2, optionally from the 2/3-truncated density."""
    density = u.with_values(np.abs(u.values) ** 2)
    if dealiased:
        density = dealias(density)
    return riesz_convolve(density, alpha).values.real


def hartree_nonlinearity(u: Field, alpha: float, lam: int) -> Field:
    """F(u) = lam (|x|^-alpha * |u|^2) u."""
    return u.with_values(lam * hartree_potential(u, alpha) * u.values)


def step_strang(u: Field, dt: float, cfg: SimConfig) -> Field:
    """
    One step U(dt/2) N(dt) U(dt/2).

    Raises:
        IntegratorDivergedError: If the step produced non-finite values
    """
    half = linear_propagate(u, dt / 2.0, cfg.alpha)
    potential = hartree_potential(half, cfg.alpha, dealiased=cfg.dealias)
    kicked = half.with_values(half.values * np.exp(-1j * cfg.lam * dt * potential))
    out = linear_propagate(kicked, dt / 2.0, cfg.alpha)
    if not out.is_finite():
        raise IntegratorDivergedError(f"non-finite values after step dt={dt}")
    return out


def mass_leak(u: Field) -> float:
    """Fraction of mass outside |x| < L/2."""
    total = mass(u)
    if total == 0.0:
        return 0.0
    return 1.0 - concentration_mass(u, u.grid.half_width / 2.0) / total


def _row(u: Field, t: float, dt: float, cfg: SimConfig, traj: Trajectory) -> TrajectoryRow:
    sample = energy(u, cfg.alpha, cfg.lam, t=t)
    return TrajectoryRow(
        t=t,
        mass=sample.mass,
        energy=sample.energy,
        hseminorm=hseminorm(u, cfg.alpha),
        lqlr_partial=traj.lqlr_partial,
        dt=dt,
    )


def _record_event(traj: Trajectory, kind: EventKind, t: float, dt: float, detail: str = "") -> None:
    traj.events.append(TrajectoryEvent(kind=kind, t=t, dt=dt, detail=detail))
    if traj.log and traj.log[-1].event == "" and traj.times[-1] == t:
        traj.log[-1].event = kind.value
    logger.info("event=%s t=%.6g dt=%.3e %s", kind.value, t, dt, detail)


def evolve(u0: Field, cfg: SimConfig, hooks: Optional[Iterable[Observer]] = None) -> Trajectory:
    """
    Integrate from t = 0 to cfg.t_end.

    Failure modes are recorded as events, never raised:
    - blowup-trigger when seminorm growth drives the adaptive step below cfg.dt_min
    - domain-too-small when more than 0.1% of mass leaves |x| < L/2
    - max-steps when the step budget runs out
    - integrator-diverged on non-finite values
    - resolution-exhausted (adaptive runs) when the spectral tail outgrows its limit

    Only growth rejections shrink dt. Tail content does not shrink with dt,
    so it stops the run instead of feeding the blowup trigger.

    Args:
        u0: Initial data on cfg.grid
        cfg: Solver configuration
        hooks: Observers called as hook(step, t, u) after every accepted step

    Returns:
        Trajectory with snapshots every cfg.snapshot_every accepted steps
    """
    if u0.grid != cfg.grid:
        raise ValueError("initial data grid differs from cfg.grid")
    hooks = list(hooks or [])
    spec = StrichartzSpec.scaling_pair(cfg.alpha, cfg.grid.dim)
    q, r = float(spec.q), float(spec.r)
    adaptive = cfg.adaptive

    traj = Trajectory(grid=cfg.grid, spec=spec)
    u = u0.copy()
    t, dt = 0.0, cfg.dt
    semi = hseminorm(u, cfg.alpha)
    traj.seminorm_history.append((t, semi))
    tail_limit = None
    if adaptive.enabled:
        tail_limit = max(adaptive.tail_tolerance, RESOLUTION_TAIL_FACTOR * spectral_tail_fraction(u))
    traj.add_snapshot(t, u, _row(u, t, dt, cfg, traj))

    if mass_leak(u) > MASS_LEAK_TOLERANCE:
        _record_event(traj, EventKind.DOMAIN_TOO_SMALL, t, dt, "initial data")
        return traj

    accepted, attempts = 0, 0
    logger.info(
        "evolve_start alpha=%s lam=%d n=%d L=%g dt=%g t_end=%g adaptive=%s",
        cfg.alpha, cfg.lam, cfg.grid.n, cfg.grid.half_width, cfg.dt, cfg.t_end, adaptive.enabled,
    )

    while True:
        remaining = cfg.t_end - t
        if remaining <= 1e-12 * max(1.0, cfg.t_end):
            break
        if attempts >= adaptive.max_steps:
            _record_event(traj, EventKind.MAX_STEPS, t, dt)
            break
        h = remaining if remaining - dt < 1e-9 * dt else dt
        attempts += 1

        try:
            candidate = step_strang(u, h, cfg)
        except IntegratorDivergedError as e:
            _record_event(traj, EventKind.INTEGRATOR_DIVERGED, t, h, str(e))
            break

        new_semi = hseminorm(candidate, cfg.alpha)
        if adaptive.enabled and semi > 0 and new_semi > (1.0 + adaptive.growth_threshold) * semi:
            dt = dt / 2.0
            if dt < cfg.dt_min:
                _record_event(
                    traj, EventKind.BLOWUP_TRIGGER, t, dt,
                    f"dt_min={cfg.dt_min:.3e} reason=growth ratio={new_semi / semi:.3f}",
                )
                break
            continue

        traj.lqlr_sum += h * lebesgue_norm(u, r) ** q
        growth = new_semi / semi if semi > 0 else 1.0
        u, t, semi = candidate, t + h, new_semi
        accepted += 1
        traj.seminorm_history.append((t, semi))
        for hook in hooks:
            hook(accepted, t, u)

        leak = mass_leak(u)
        at_end = cfg.t_end - t <= 1e-12 * max(1.0, cfg.t_end)
        if accepted % cfg.snapshot_every == 0 or at_end or leak > MASS_LEAK_TOLERANCE:
            traj.add_snapshot(t, u, _row(u, t, h, cfg, traj))
        if leak > MASS_LEAK_TOLERANCE:
            _record_event(traj, EventKind.DOMAIN_TOO_SMALL, t, h, f"leak={leak:.3e}")
            break
        if tail_limit is not None:
            tail = spectral_tail_fraction(u)
            if tail > tail_limit:
                _record_event(
                    traj, EventKind.RESOLUTION_EXHAUSTED, t, h, f"tail={tail:.3e} limit={tail_limit:.3e}"
                )
                break

        if adaptive.enabled and dt < cfg.dt and growth < 1.0 + adaptive.growth_threshold / 4.0:
            dt = min(cfg.dt, 2.0 * dt)

    if traj.times[-1] != t:
        traj.add_snapshot(t, u, _row(u, t, dt, cfg, traj))
        if traj.events:
            traj.log[-1].event = traj.events[-1].kind.value

    logger.info(
        "evolve_done t=%.6g accepted=%d attempts=%d events=%s",
        t, accepted, attempts, ",".join(e.kind.value for e in traj.events) or "none",
    )
    return traj
