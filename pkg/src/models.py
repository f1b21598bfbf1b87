"""
Data models for the fractional Hartree simulation lab.

This module defines Pydantic models for grids, solver and extraction
settings, experiment configuration, and the enums shared by every report.
"""

import math
from datetime import datetime, timezone
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _utcnow() -> datetime:
    """Timezone-aware UTC now, avoiding deprecated datetime.utcnow()."""
    return datetime.now(timezone.utc)


def admissible_alpha_interval(dim: int) -> Tuple[float, float]:
    """Open lower / closed upper bound for the Levy index in dimension *dim*."""
    return 2.0 * dim / (2.0 * dim - 1.0), 2.0


class EventKind(str, Enum):
    """
    Events recorded on a trajectory instead of raising.

    Kinds:
    - blowup-trigger: adaptive step fell below dt_min
    - domain-too-small: more than the allowed mass left |x| < L/2
    - max-steps: step budget exhausted before t_end
    - integrator-diverged: a non-finite value appeared
    - resolution-exhausted: spectral mass past the 2/3 band outgrew its limit
    """
    BLOWUP_TRIGGER = "blowup-trigger"
    DOMAIN_TOO_SMALL = "domain-too-small"
    MAX_STEPS = "max-steps"
    INTEGRATOR_DIVERGED = "integrator-diverged"
    RESOLUTION_EXHAUSTED = "resolution-exhausted"


class Verdict(str, Enum):
    """
    Outcome classification of a blowup run.

    inconclusive covers runs stopped by the step budget, by non-finite
    values or by exhausted resolution; none of them says anything about
    dt underflow.
    """
    BLOWUP_TRIGGER = "blowup-trigger"
    COMPLETED = "completed"
    DOMAIN_TOO_SMALL = "domain-too-small"
    INCONCLUSIVE = "inconclusive"


class ExperimentKind(str, Enum):
    """Experiment drivers reachable from the command line."""
    EVOLVE = "evolve"
    DECOMPOSE = "decompose"
    WAVE_OPERATOR = "wave-operator"
    BLOWUP_SCAN = "blowup-scan"
    MINIMAL_MASS = "minimal-mass"
    NONLINEAR_CHECK = "nonlinear-check"


class RunStatus(str, Enum):
    """
    Status of an experiment run.

    Statuses map onto process exit codes:
    - success: 0
    - warning: 2 (completed, but events or warnings were recorded)
    - failed: 1
    """
    SUCCESS = "success"
    WARNING = "warning"
    FAILED = "failed"

    @property
    def exit_code(self) -> int:
        return {"success": 0, "warning": 2, "failed": 1}[self.value]


class Grid(BaseModel):
    """
    Uniform periodic grid on [-L, L)^d with N points per axis.

    Attributes:
        dim: Spatial dimension d (>= 2)
        n: Points per axis, a power of two
        half_width: Box half-width L
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = Field(2, ge=2, le=3)
    n: int = Field(..., ge=4)
    half_width: float = Field(..., gt=0)

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"n must be a power of two, got {value}")
        return value

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def dxi(self) -> float:
        """Smallest nonzero lattice frequency pi/L."""
        return math.pi / self.half_width

    @property
    def nyquist(self) -> float:
        return self.dxi * self.n / 2

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    def rescaled(self, factor: float) -> "Grid":
        """Same lattice with every length multiplied by *factor*."""
        return Grid(dim=self.dim, n=self.n, half_width=self.half_width * factor)


class AdaptiveConfig(BaseModel):
    """
    Step-size controller settings.

    Attributes:
        enabled: Threshold-based control on/off
        growth_threshold: Reject a step when the H^{alpha/2} seminorm grows by more than this fraction
        tail_tolerance: Floor of the resolution limit; a run stops once the spectral mass outside
            the dealiased band exceeds max(tail_tolerance, 10x its initial value)
        dt_min: Underflow floor; defaults to dt * 2**-20
        max_steps: Hard cap on accepted plus rejected steps
    """

    model_config = ConfigDict(extra="forbid")

    enabled: bool = False
    growth_threshold: float = Field(0.1, gt=0)
    tail_tolerance: float = Field(1e-6, gt=0)
    dt_min: Optional[float] = Field(None, gt=0)
    max_steps: int = Field(200_000, ge=1)


class SimConfig(BaseModel):
    """
    Solver configuration for i u_t + (-Delta)^{alpha/2} u = lam (|x|^-alpha * |u|^2) u.

    Attributes:
        alpha: Levy index in (2d/(2d-1), 2]; alpha = 2 is kept for linear oracles
        lam: +1 focusing, -1 defocusing
        grid: Spatial grid
        dt: Base time step
        t_end: Final time
        dealias: Apply the 2/3 rule to the Hartree density
        adaptive: Step-size controller
        snapshot_every: Store a snapshot every this many accepted steps
    """

    model_config = ConfigDict(extra="forbid")

    alpha: float
    lam: int = 1
    grid: Grid
    dt: float = Field(..., gt=0)
    t_end: float = Field(..., ge=0)
    dealias: bool = True
    adaptive: AdaptiveConfig = Field(default_factory=AdaptiveConfig)
    snapshot_every: int = Field(1, ge=1)

    @field_validator("lam")
    @classmethod
    def _lam_sign(cls, value: int) -> int:
        if value not in (1, -1):
            raise ValueError(f"lam must be +1 or -1, got {value}")
        return value

    @model_validator(mode="after")
    def _alpha_admissible(self) -> "SimConfig":
        lo, hi = admissible_alpha_interval(self.grid.dim)
        if not (lo < self.alpha <= hi):
            raise ValueError(
                f"alpha={self.alpha} outside admissible interval ({lo:.6g}, {hi:g}]"
            )
        if self.adaptive.enabled and self.adaptive.dt_min is not None:
            if self.adaptive.dt_min >= self.dt:
                raise ValueError("adaptive.dt_min must be smaller than dt")
        return self

    @property
    def dt_min(self) -> float:
        if self.adaptive.dt_min is not None:
            return self.adaptive.dt_min
        return self.dt * 2.0 ** -20


class ExtractionConfig(BaseModel):
    """
    Profile extraction settings.

    Attributes:
        delta: Stop scale extraction when the refined functional falls below delta * ||u||
        p: Lebesgue exponent of the refined functional
        theta: Interpolation exponent, only used by the amplitude cap
        cap_constant: Constant c in the amplitude cap
        max_passes: Scale-extraction pass budget
        max_profiles: Profiles extracted per scale group
        mu_floor: Stop time-shift extraction when the correlation falls below mu_floor * ||u||
        orthogonality_ratio: Scales with ratio >= this are orthogonal
        time_separation: Minimum distance between accepted shifts (unit-scale time)
        shift_max: Shift lattice spans [-shift_max, shift_max]
        shift_step: Shift lattice resolution
        focus_radius: Unit-scale radius scoring candidate shifts
        window_radius: Unit-scale radius of the extraction window
        tail_length: Sequence members averaged; 0 means all
        resolution_tolerance: Largest discarded mass fraction tolerated by a dilation
    """

    model_config = ConfigDict(extra="forbid")

    delta: float = Field(0.1, gt=0)
    p: float = Field(1.5, gt=1, lt=2)
    theta: float = Field(1.0 / 3.0, gt=0, lt=1)
    cap_constant: float = Field(1.0, gt=0)
    max_passes: int = Field(32, ge=1)
    max_profiles: int = Field(4, ge=1)
    mu_floor: float = Field(0.05, ge=0)
    orthogonality_ratio: float = Field(16.0, ge=4)
    time_separation: float = Field(10.0, ge=0)
    shift_max: float = Field(32.0, ge=0)
    shift_step: float = Field(0.5, gt=0)
    focus_radius: float = Field(2.0, gt=0)
    window_radius: float = Field(16.0, gt=0)
    tail_length: int = Field(0, ge=0)
    resolution_tolerance: float = Field(1e-6, gt=0)


class InitialData(BaseModel):
    """
    Initial-data recipe for evolve-type experiments.

    Attributes:
        kind: "gaussian" or "noisy_gaussian"
        amplitude: Peak amplitude (ignored when mass is given)
        width: Gaussian width
        mass: Optional mass target
        noise: Relative noise amplitude for noisy_gaussian
    """

    model_config = ConfigDict(extra="forbid")

    kind: str = "gaussian"
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0)
    mass: Optional[float] = Field(None, gt=0)
    noise: float = Field(0.0, ge=0)


class WaveOperatorSection(BaseModel):
    """Asymptotic-state problem settings."""

    model_config = ConfigDict(extra="forbid")

    start: float = Field(0.0, ge=0)
    end: float = Field(..., gt=0)
    tol: float = Field(1e-8, gt=0)
    max_iterations: int = Field(50, ge=1)
    norm: float = Field(1e-2, gt=0)


class BlowupSection(BaseModel):
    """Blowup-scan and minimal-mass settings."""

    model_config = ConfigDict(extra="forbid")

    mass: float = Field(..., gt=0)
    width: float = Field(1.0, gt=0)
    bracket: Optional[Tuple[float, float]] = None
    n_bisect: int = Field(8, ge=0)
    schedule_power: float = Field(0.5, gt=0)


class DecomposeSection(BaseModel):
    """Inputs for decompose and nonlinear-check experiments."""

    model_config = ConfigDict(extra="forbid")

    inputs: list[str] = Field(default_factory=list)
    window_end: float = Field(1.0, gt=0)
    window_steps: int = Field(20, ge=1)


class ExperimentConfig(BaseModel):
    """
    Complete experiment description parsed from a YAML file.

    Attributes:
        kind: Experiment driver
        sim: Solver configuration
        extraction: Profile extraction settings
        seed: 64-bit seed of the counter-based generator
        output_dir: Artifact directory
        initial_data: Initial-data recipe
        wave_operator: Section for wave-operator runs
        blowup: Section for blowup-scan and minimal-mass runs
        decompose: Section for decompose and nonlinear-check runs
    """

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    sim: SimConfig
    extraction: ExtractionConfig = Field(default_factory=ExtractionConfig)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    output_dir: str = "runs/default"
    initial_data: InitialData = Field(default_factory=InitialData)
    wave_operator: Optional[WaveOperatorSection] = None
    blowup: Optional[BlowupSection] = None
    decompose: Optional[DecomposeSection] = None

    @model_validator(mode="after")
    def _kind_sections(self) -> "ExperimentConfig":
        required = {
            ExperimentKind.WAVE_OPERATOR: "wave_operator",
            ExperimentKind.BLOWUP_SCAN: "blowup",
            ExperimentKind.MINIMAL_MASS: "blowup",
            ExperimentKind.DECOMPOSE: "decompose",
            ExperimentKind.NONLINEAR_CHECK: "decompose",
        }
        section = required.get(self.kind)
        if section and getattr(self, section) is None:
            raise ValueError(f"kind '{self.kind.value}' requires a '{section}' section")
        if self.kind == ExperimentKind.MINIMAL_MASS and self.blowup.bracket is None:
            raise ValueError("kind 'minimal-mass' requires blowup.bracket")
        return self


class RunManifest(BaseModel):
    """
    Manifest written next to every experiment's artifacts.

    Attributes:
        config_hash: 16-hex-char digest of the canonical config echo
        seed: Generator seed
        kind: Experiment kind
        status: Run outcome
        events: Trajectory events and warnings
        artifacts: Relative paths of written files
        versions: Library versions used
        wall_time: Seconds spent (excluded from determinism checks)
        created_at: Timestamp (excluded from determinism checks)
    """

    config_hash: str = Field(..., min_length=16, max_length=16)
    seed: int
    kind: ExperimentKind
    status: RunStatus
    config: dict
    events: list[str] = Field(default_factory=list)
    artifacts: list[str] = Field(default_factory=list)
    versions: dict[str, str] = Field(default_factory=dict)
    wall_time: float = Field(0.0, ge=0)
    created_at: datetime = Field(default_factory=_utcnow)
