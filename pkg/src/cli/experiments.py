"""
Experiment drivers - one function per experiment kind.

Each driver takes a validated ExperimentConfig, a seeded generator and an
ArtifactStore, writes its artifacts and returns the events and warnings
that decide the run status.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from src.analysis.observables import concentration_mass, mass
from src.blowup.lab import (
    box_radius,
    contrast_with_twin,
    estimate_minimal_mass,
    make_negative_energy_data,
    rescaling_probe,
)
from src.errors import StructuralError
from src.models import ExperimentConfig, ExperimentKind, SimConfig, Verdict
from src.profiles.decompose import (
    Decomposition,
    decompose,
    nonlinear_decomposition_check,
    orthogonality_report,
)
from src.solver.propagator import evolve
from src.solver.wave_operator import wave_operator_solve
from src.spectral.builders import gaussian
from src.spectral.grid import Field, radial_symmetrize
from src.storage.artifacts import ArtifactStore, read_snapshot

logger = logging.getLogger(__name__)


@dataclass
class DriverOutcome:
    """Events and warnings of one driver run."""

    events: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    summary: Dict[str, object] = field(default_factory=dict)


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based generator; the only source of randomness in a run."""
    return np.random.Generator(np.random.Philox(seed))


def build_initial_data(cfg: ExperimentConfig, rng: np.random.Generator) -> Field:
    """Radial initial data from the initial_data recipe."""
    recipe = cfg.initial_data
    grid = cfg.sim.grid
    u = gaussian(grid, recipe.width, recipe.amplitude)
    if recipe.kind == "noisy_gaussian" and recipe.noise > 0:
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        u = radial_symmetrize(u + u.with_values(recipe.noise * recipe.amplitude * noise))
    elif recipe.kind not in ("gaussian", "noisy_gaussian"):
        raise ValueError(f"unknown initial data kind '{recipe.kind}'")
    if recipe.mass is not None and mass(u) > 0:
        u = u * math.sqrt(recipe.mass / mass(u))
    return u


def _with_adaptive(sim: SimConfig) -> SimConfig:
    if sim.adaptive.enabled:
        return sim
    logger.info("adaptive stepping switched on for blowup experiments")
    return sim.model_copy(update={"adaptive": sim.adaptive.model_copy(update={"enabled": True})})


def run_evolve(cfg: ExperimentConfig, rng: np.random.Generator, store: ArtifactStore) -> DriverOutcome:
    u0 = build_initial_data(cfg, rng)
    traj = evolve(u0, cfg.sim)
    store.write_trajectory_csv("trajectory.csv", traj)
    store.write_snapshot("snapshots/initial.frsh", u0, cfg.sim.alpha)
    store.write_snapshot("snapshots/final.frsh", traj.final, cfg.sim.alpha)
    events = [e.kind.value for e in traj.events]
    summary = {"final_time": traj.times[-1], "snapshots": len(traj.times), "events": events}
    store.write_json("summary.json", summary)
    return DriverOutcome(events=events, summary=summary)


def run_wave_operator(cfg: ExperimentConfig, rng: np.random.Generator, store: ArtifactStore) -> DriverOutcome:
    section = cfg.wave_operator
    g = gaussian(cfg.sim.grid, cfg.initial_data.width)
    g = g * (section.norm / math.sqrt(mass(g)))
    traj = wave_operator_solve(
        g, section.start, section.end, section.tol, cfg.sim, max_iterations=section.max_iterations
    )
    store.write_trajectory_csv("trajectory.csv", traj)
    store.write_snapshot("snapshots/asymptotic_state.frsh", g, cfg.sim.alpha)
    store.write_snapshot("snapshots/start.frsh", traj.fields[0], cfg.sim.alpha)
    store.write_json("wave_operator.json", {"diagnostics": traj.diagnostics, "times": traj.times})
    return DriverOutcome(summary={"iterations": traj.diagnostics["iterations"]})


def run_blowup_scan(cfg: ExperimentConfig, rng: np.random.Generator, store: ArtifactStore) -> DriverOutcome:
    section = cfg.blowup
    sim = _with_adaptive(cfg.sim)
    if sim.lam == 1:
        u0 = make_negative_energy_data(section.mass, section.width, sim)
    else:
        u0 = gaussian(sim.grid, section.width)
        u0 = u0 * math.sqrt(section.mass / mass(u0))
    contrast = contrast_with_twin(u0, sim, section.schedule_power)
    report = contrast.report
    outcome = DriverOutcome(events=list(report.events))
    payload = {
        "verdict": report.verdict.value,
        "trigger_time": report.trigger_time,
        "dt_min": report.dt_min,
        "final_time": report.final_time,
        "growth_factor": report.growth_factor,
        "lqlr_partial": report.lqlr_partial,
        "growth_history": [list(p) for p in report.growth_history],
        "witness_times": report.witness_times,
    }

    if contrast.scan is not None:
        store.write_concentration_csv("concentration.csv", contrast.scan)
        if contrast.twin_scan is not None:
            store.write_concentration_csv("twin_concentration.csv", contrast.twin_scan)
        payload["twin_verdict"] = contrast.twin.verdict.value
        payload["twin_final_time"] = contrast.twin.final_time

        rescaled = rescaling_probe(report, tolerance=cfg.extraction.resolution_tolerance)
        payload["rescaling"] = {
            "scales": rescaled.scales,
            "ratios": rescaled.ratios,
            "distances": rescaled.distances,
        }
        outcome.warnings.extend(rescaled.warnings)
        for w in report.witnesses:
            store.write_snapshot(f"witnesses/witness_{w.n:02d}.frsh", w.field, sim.alpha)
        payload["full_box_mass"] = [
            {"t": w.t, "concentrated": concentration_mass(w.field, box_radius(w.field)), "mass": mass(w.field)}
            for w in report.witnesses
        ]

    store.write_json("blowup.json", payload)
    if report.verdict != Verdict.COMPLETED:
        outcome.warnings.append(f"verdict {report.verdict.value}")
    outcome.summary = {"verdict": report.verdict.value}
    return outcome


def run_minimal_mass(cfg: ExperimentConfig, rng: np.random.Generator, store: ArtifactStore) -> DriverOutcome:
    section = cfg.blowup
    sim = _with_adaptive(cfg.sim)
    shape = gaussian(sim.grid, section.width)
    shape_mass = mass(shape)

    def family(m: float) -> Field:
        return shape * math.sqrt(m / shape_mass)

    estimate = estimate_minimal_mass(
        family, section.bracket, section.n_bisect, sim, family_name=f"gaussian width={section.width:g}"
    )
    store.write_json(
        "minimal_mass.json",
        {
            "bracket": [estimate.lo, estimate.hi],
            "family": estimate.family,
            "trials": [{"mass": p.mass, "verdict": p.verdict.value} for p in estimate.trials],
            "note": "family-relative bracket on the blowup threshold",
        },
    )
    return DriverOutcome(summary={"bracket": [estimate.lo, estimate.hi]})


def load_inputs(cfg: ExperimentConfig, rng: np.random.Generator, base: Path) -> List[Field]:
    """Snapshots named in the decompose section, or the initial data when none are listed."""
    paths = cfg.decompose.inputs
    if not paths:
        return [build_initial_data(cfg, rng)]
    fields = []
    for name in paths:
        path = Path(name) if Path(name).is_absolute() else base / name
        snap = read_snapshot(path)
        if snap.grid != cfg.sim.grid:
            raise StructuralError(f"{path}: grid {snap.grid} differs from sim.grid {cfg.sim.grid}")
        fields.append(Field(snap.grid, snap.values))
    return fields


def _write_decomposition(dec: Decomposition, cfg: ExperimentConfig, store: ArtifactStore) -> None:
    components = []
    for c in dec.components:
        rel = f"profiles/profile_{c.index:02d}.frsh"
        store.write_snapshot(rel, c.profile, dec.alpha)
        components.append({"mass": c.mass, "h": c.h, "t": c.t, "snapshot": rel})
    payload = {"components": components, "warnings": dec.warnings}
    if dec.remainder is not None:
        store.write_snapshot("profiles/remainder.frsh", dec.remainder, dec.alpha)
        diagnostics = dict(dec.diagnostics)
        payload["remainder"] = {
            "mass": diagnostics.pop("remainder_mass"),
            "strichartz": diagnostics.pop("remainder_strichartz"),
            "snapshot": "profiles/remainder.frsh",
        }
        payload["pythagorean_defect"] = diagnostics.pop("pythagorean_defect")
        payload["diagnostics"] = diagnostics
    if dec.components:
        section = cfg.decompose
        pairs = orthogonality_report(dec, cfg.extraction, section.window_end, section.window_steps)
        payload["orthogonality"] = [asdict(p) for p in pairs]
    store.write_json("decomposition.json", payload)


def run_decompose(
    cfg: ExperimentConfig, rng: np.random.Generator, store: ArtifactStore, base: Path
) -> DriverOutcome:
    members = load_inputs(cfg, rng, base)
    section = cfg.decompose
    dec = decompose(members, cfg.extraction, cfg.sim.alpha, section.window_end, section.window_steps)
    _write_decomposition(dec, cfg, store)
    return DriverOutcome(warnings=list(dec.warnings), summary={"components": len(dec.components)})


def run_nonlinear_check(
    cfg: ExperimentConfig, rng: np.random.Generator, store: ArtifactStore, base: Path
) -> DriverOutcome:
    members = load_inputs(cfg, rng, base)
    section = cfg.decompose
    dec = decompose(members, cfg.extraction, cfg.sim.alpha, section.window_end, section.window_steps)
    _write_decomposition(dec, cfg, store)
    report = nonlinear_decomposition_check(dec, cfg.sim, section.window_end)
    store.write_json("nonlinear_check.json", asdict(report))
    outcome = DriverOutcome(warnings=list(dec.warnings), summary={"applicable": report.applicable})
    if not report.applicable:
        outcome.warnings.append(f"check inapplicable: {report.reason}")
    return outcome


Driver = Callable[..., DriverOutcome]

DRIVERS: Dict[ExperimentKind, Driver] = {
    ExperimentKind.EVOLVE: run_evolve,
    ExperimentKind.WAVE_OPERATOR: run_wave_operator,
    ExperimentKind.BLOWUP_SCAN: run_blowup_scan,
    ExperimentKind.MINIMAL_MASS: run_minimal_mass,
    ExperimentKind.DECOMPOSE: run_decompose,
    ExperimentKind.NONLINEAR_CHECK: run_nonlinear_check,
}

NEEDS_BASE = {ExperimentKind.DECOMPOSE, ExperimentKind.NONLINEAR_CHECK}
