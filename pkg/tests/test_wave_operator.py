"""
Tests for the wave operator solver.
"""

import numpy as np
import pytest

from src.analysis.observables import mass
from src.errors import NoConvergenceError
from src.models import Grid, SimConfig
from src.solver.propagator import evolve, linear_propagate
from src.solver.wave_operator import wave_operator_solve
from src.spectral.builders import gaussian
from src.spectral.grid import Field


def create_sample_config(**overrides) -> SimConfig:
    values = {
        "alpha": 1.8,
        "lam": 1,
        "grid": Grid(dim=2, n=64, half_width=16.0),
        "dt": 0.05,
        "t_end": 2.0,
    }
    values.update(overrides)
    return SimConfig(**values)


def create_asymptotic_state(cfg: SimConfig, norm: float) -> Field:
    g = gaussian(cfg.grid, 1.0)
    return g * (norm / np.sqrt(mass(g)))


def test_small_data_converges():
    """||g|| = 1e-2 contracts and lands on the prescribed linear state at t_end."""
    print("\n" + "="*60)
    print("TEST 1: Small-Data Wave Operator")
    print("="*60)

    cfg = create_sample_config()
    g = create_asymptotic_state(cfg, 1e-2)
    traj = wave_operator_solve(g, 0.0, cfg.t_end, 1e-10, cfg)
    diag = traj.diagnostics

    print(f"Iterations: {diag['iterations']}, residual {diag['fixed_point_residual']:.2e}")
    assert diag["fixed_point_residual"] < 1e-10
    assert diag["max_contraction_ratio"] < 1.0, "Picard map should contract"
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(2.0)

    distances = diag["distance_to_free"]
    assert distances[-1] == 0.0, "Correction vanishes at t_end"
    assert all(a >= b - 1e-15 for a, b in zip(distances, distances[1:])), \
        "Distance to the free flow should not increase toward t_end"

    free_end = linear_propagate(g, cfg.t_end, cfg.alpha)
    assert np.allclose(traj.final.values, free_end.values, atol=1e-14)
    assert diag["tail_estimate"] > 0
    print("✓ Converged to the free state at t_end")


def test_reintegration_agrees_with_fixed_point():
    """Evolving u(T) forward with the same step lattice reaches U(t_end) g."""
    cfg = create_sample_config()
    g = create_asymptotic_state(cfg, 1e-2)
    tol = 1e-8
    traj = wave_operator_solve(g, 0.0, cfg.t_end, tol, cfg)

    forward = evolve(traj.fields[0], cfg)
    gap = np.sqrt(mass(forward.final - traj.final))
    print(f"Re-integration gap {gap:.2e}")
    assert gap < 10 * tol, "Forward run should reproduce the asymptotic state"


def test_zero_state_is_trivial():
    cfg = create_sample_config(t_end=0.5)
    g = Field(cfg.grid, np.zeros(cfg.grid.shape))
    traj = wave_operator_solve(g, 0.0, 0.5, 1e-10, cfg)

    assert traj.diagnostics["iterations"] == 1
    assert all(np.all(u.values == 0) for u in traj.fields)


def test_large_data_does_not_converge():
    """Strong focusing data over a long window is no contraction."""
    print("\n" + "="*60)
    print("TEST 2: No Convergence")
    print("="*60)

    cfg = create_sample_config()
    g = create_asymptotic_state(cfg, 50.0)
    with np.errstate(all="ignore"):
        with pytest.raises(NoConvergenceError) as exc_info:
            wave_operator_solve(g, 0.0, cfg.t_end, 1e-10, cfg, max_iterations=8)

    assert "residuals" in exc_info.value.diagnostics
    print(f"✓ Raised: {exc_info.value}")


def test_window_must_be_ordered():
    cfg = create_sample_config()
    with pytest.raises(ValueError):
        wave_operator_solve(create_asymptotic_state(cfg, 1e-2), 2.0, 2.0, 1e-8, cfg)


def test_sign_of_lam_enters_at_cubic_order():
    """For ||g|| = 1e-3 the focusing and defocusing solutions differ by O(||g||^3)."""
    print("\n" + "="*60)
    print("TEST 3: Focusing Versus Defocusing")
    print("="*60)

    gaps = {}
    for norm in (1e-3, 2e-3):
        runs = {}
        for lam in (1, -1):
            cfg = create_sample_config(lam=lam)
            runs[lam] = wave_operator_solve(create_asymptotic_state(cfg, norm), 0.0, cfg.t_end, 1e-15, cfg)
        cell = runs[1].grid.cell_volume
        gaps[norm] = max(
            float(np.sqrt(np.sum(np.abs(a.values - b.values) ** 2) * cell))
            for a, b in zip(runs[1].fields, runs[-1].fields)
        )
        print(f"||g|| = {norm:.0e}: max_t ||u+ - u-|| = {gaps[norm]:.3e}")

    assert 0.0 < gaps[1e-3] < 100.0 * 1e-9, "The gap should be bounded by a constant times ||g||^3"
    assert gaps[2e-3] / gaps[1e-3] == pytest.approx(8.0, rel=1e-2), "Doubling ||g|| should scale the gap by 8"
    print("✓ Cubic in ||g||")
