"""
Unit tests for the spectral grid toolkit.

Covers transforms, Fourier multipliers, the Riesz potential, Littlewood-Paley
bands, dealiasing, radial symmetrization and dyadic dilation.
"""

import math

import numpy as np
import pytest
from scipy.special import gamma, hyp1f1

from src.errors import DomainError, EmptyBandError, ResolutionError, StructuralError
from src.models import Grid
from src.spectral.builders import annular_profile, gaussian, plane_wave
from src.spectral.grid import (
    Direction,
    Field,
    SpectralField,
    abs_derivative,
    band_symbol,
    dilate,
    dyadic_exponent,
    dyadic_project,
    fractional_laplacian_apply,
    lattice,
    lp_chi,
    lp_eta,
    octave_mask,
    radial_symmetrize,
    resolved_bands,
    riesz_convolve,
    spectral_mass,
    spectral_tail_fraction,
    transform,
)


def create_sample_grid(n: int = 128, half_width: float = 16.0, dim: int = 2) -> Grid:
    """Create a sample grid for testing."""
    return Grid(dim=dim, n=n, half_width=half_width)


def create_random_field(grid: Grid, seed: int = 0) -> Field:
    """Complex white noise on the grid."""
    rng = np.random.Generator(np.random.Philox(seed))
    return Field(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))


def _rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_transform_round_trip_and_parseval():
    """Inverse after forward returns the field; spectral mass equals physical mass."""
    print("\n" + "="*60)
    print("TEST 1: Transform Round Trip and Parseval")
    print("="*60)

    grid = create_sample_grid(n=64)
    f = create_random_field(grid)

    coeffs = transform(f, Direction.FORWARD)
    back = transform(coeffs, "inverse")
    assert _rel_l2(back.values, f.values) < 1e-12, "Round trip should reproduce the field"
    print("✓ Round trip exact")

    physical = float(np.sum(np.abs(f.values) ** 2) * grid.cell_volume)
    assert math.isclose(spectral_mass(coeffs), physical, rel_tol=1e-12), "Parseval should hold"
    print(f"✓ Parseval: {physical:.6f}")


def test_transform_matches_continuum_gaussian():
    """Forward transform of exp(-|x|^2/2) equals 2 pi exp(-|xi|^2/2) in 2D."""
    print("\n" + "="*60)
    print("TEST 2: Continuum Normalization")
    print("="*60)

    grid = create_sample_grid()
    coeffs = transform(gaussian(grid, 1.0), Direction.FORWARD).coefficients
    expected = 2.0 * math.pi * np.exp(-lattice(grid).xi_norm ** 2 / 2.0)

    assert np.max(np.abs(coeffs - expected)) < 1e-10, "Coefficients should match the analytic transform"
    print("✓ Analytic Gaussian transform reproduced")


def test_transform_rejects_wrong_input_type():
    """Forward needs a Field, inverse a SpectralField."""
    grid = create_sample_grid(n=16)
    with pytest.raises(StructuralError):
        transform(SpectralField(grid, np.zeros(grid.shape)), Direction.FORWARD)
    with pytest.raises(StructuralError):
        transform(Field(grid, np.zeros(grid.shape)), Direction.INVERSE)


def test_field_shape_and_grid_checks():
    """Arrays that do not fit the grid and mixed-grid sums are rejected."""
    grid = create_sample_grid(n=16)
    with pytest.raises(StructuralError):
        Field(grid, np.zeros(10))

    other = create_sample_grid(n=16, half_width=4.0)
    with pytest.raises(StructuralError):
        Field(grid, np.zeros(grid.shape)) + Field(other, np.zeros(other.shape))


def test_laplacian_of_gaussian():
    """alpha = 2 gives -Delta exp(-r^2/2) = (2 - r^2) exp(-r^2/2)."""
    print("\n" + "="*60)
    print("TEST 3: Fractional Laplacian at alpha = 2")
    print("="*60)

    grid = create_sample_grid()
    r = lattice(grid).radius
    out = fractional_laplacian_apply(gaussian(grid, 1.0), 2.0)
    expected = (2.0 - r ** 2) * np.exp(-(r ** 2) / 2.0)

    assert np.max(np.abs(out.values - expected)) < 1e-9, "-Delta of the Gaussian should match"
    print("✓ Matches the closed form")


def test_half_order_operator_applied_twice():
    """(-Delta)^{alpha/4} composed with itself is (-Delta)^{alpha/2}."""
    grid = create_sample_grid()
    f = gaussian(grid, 1.0) + annular_profile(grid, 1, mass=0.3)
    for alpha in (1.2, 1.5, 1.8, 2.0):
        twice = abs_derivative(abs_derivative(f, alpha / 2.0), alpha / 2.0)
        once = fractional_laplacian_apply(f, alpha)
        assert _rel_l2(twice.values, once.values) < 1e-12, f"Composition should hold at alpha={alpha}"


def test_band_projection_commutes_with_fractional_laplacian():
    grid = create_sample_grid()
    f = create_random_field(grid, seed=11)
    scale = np.linalg.norm(fractional_laplacian_apply(f, 1.8).values)
    for k in resolved_bands(grid):
        a = dyadic_project(fractional_laplacian_apply(f, 1.8), k)
        b = fractional_laplacian_apply(dyadic_project(f, k), 1.8)
        assert np.linalg.norm(a.values - b.values) < 1e-12 * scale, f"P_k should commute at k={k}"


@pytest.mark.parametrize("alpha", [1.0, 0.5, 2.5])
def test_laplacian_rejects_alpha_outside_range(alpha):
    """alpha must lie in (1, 2]."""
    grid = create_sample_grid(n=16)
    with pytest.raises(DomainError):
        fractional_laplacian_apply(gaussian(grid), alpha)


def test_riesz_potential_matches_hypergeometric_oracle():
    """|x|^-alpha * exp(-r^2/2) against its closed form, up to the periodic constant."""
    print("\n" + "="*60)
    print("TEST 4: Riesz Potential Oracle")
    print("="*60)

    d, alpha, s = 2, 1.5, 1.0
    grid = create_sample_grid(n=128, half_width=16.0)
    r = lattice(grid).radius
    density = gaussian(grid, s)

    numeric = riesz_convolve(density, alpha).values.real
    scale = (2 * s * s) ** ((d - alpha) / 2) * math.pi ** (d / 2) * gamma((d - alpha) / 2) / gamma(d / 2)
    exact = scale * hyp1f1(alpha / 2, d / 2, -(r ** 2) / (2 * s * s))

    center = tuple(n // 2 for n in grid.shape)
    inner = r <= 4.0
    diff_numeric = (numeric - numeric[center])[inner]
    diff_exact = (exact - exact[center])[inner]
    error = _rel_l2(diff_numeric, diff_exact)
    print(f"Relative L2 error of V(x) - V(0) on r <= 4: {error:.3e}")
    assert error < 2e-2, "Riesz convolution should agree with the oracle to 2%"
    print("✓ Oracle agreement")


def test_riesz_of_real_density_is_real():
    """A real radial symbol maps real densities to real potentials."""
    grid = create_sample_grid()
    rng = np.random.Generator(np.random.Philox(4))
    density = Field(grid, rng.random(grid.shape) + np.abs(gaussian(grid, 2.0).values) ** 2)
    for alpha in (1.2, 1.5, 1.9):
        out = riesz_convolve(density, alpha).values
        assert np.max(np.abs(out.imag)) <= 1e-12 * np.max(np.abs(out.real)), f"Imaginary part at alpha={alpha}"


def test_riesz_requires_alpha_below_dimension():
    """alpha >= d has no Riesz kernel."""
    grid = create_sample_grid(n=16)
    with pytest.raises(DomainError):
        riesz_convolve(gaussian(grid), 2.0)


def test_littlewood_paley_partition_of_unity():
    """Band symbols sum to one on the resolved frequency range."""
    print("\n" + "="*60)
    print("TEST 5: Littlewood-Paley Partition")
    print("="*60)

    grid = create_sample_grid()
    bands = resolved_bands(grid)
    total = sum(band_symbol(grid, k) for k in bands)
    xi = lattice(grid).xi_norm
    covered = (xi >= grid.dxi) & (xi <= 2.0 ** bands[-1])

    assert np.max(np.abs(total[covered] - 1.0)) < 1e-12, "Symbols should sum to one"
    print(f"✓ {len(bands)} bands, partition exact on the covered range")


def test_bump_is_flat_below_one_and_vanishes_from_two():
    r = np.linspace(0.0, 3.0, 301)
    eta = lp_eta(r)
    assert np.all(eta[r <= 1.0] == 1.0)
    assert np.all(eta[r >= 2.0] == 0.0)
    assert lp_eta(np.array([1.5]))[0] == pytest.approx(math.exp(1.0 - 1.0 / 0.75), rel=1e-14)
    assert np.all(np.diff(eta) <= 0.0), "eta should be nonincreasing"

    chi = lp_chi(r)
    assert np.all(chi[(r <= 0.5) | (r >= 2.0)] == 0.0), "chi lives in 1/2 < r < 2"
    assert np.allclose(chi, eta - lp_eta(2.0 * r), rtol=0.0, atol=0.0)


def test_littlewood_paley_reconstruction_and_projector_norm():
    """Band-limited fields are the sum of their projections; projections shrink norms."""
    grid = create_sample_grid()
    f = annular_profile(grid, 0) + annular_profile(grid, 2, mass=0.5)
    pieces = [dyadic_project(f, k) for k in resolved_bands(grid)]
    rebuilt = pieces[0]
    for piece in pieces[1:]:
        rebuilt = rebuilt + piece
    assert _rel_l2(rebuilt.values, f.values) < 1e-10, "Projections should sum back to the field"
    print("✓ Reconstruction defect below 1e-10")

    for seed in range(100):
        g = create_random_field(create_sample_grid(n=32, half_width=8.0), seed)
        k = resolved_bands(g.grid)[seed % len(resolved_bands(g.grid))]
        assert np.linalg.norm(dyadic_project(g, k).values) <= np.linalg.norm(g.values) * (1 + 1e-12)
    print("✓ Projector norm <= 1 on 100 random fields")


def test_empty_band_raises():
    """A band beyond Nyquist holds no frequency."""
    grid = create_sample_grid(n=16)
    with pytest.raises(EmptyBandError):
        dyadic_project(gaussian(grid), 20)


def test_octaves_tile_the_lattice():
    """Every nonzero frequency lies in exactly one octave."""
    grid = create_sample_grid(n=64)
    total = sum(octave_mask(grid, k) for k in range(-6, 8))
    xi = lattice(grid).xi_norm
    assert np.array_equal(total, (xi > 0).astype(float)), "Octaves should tile the lattice"


def test_spectral_tail_fraction():
    """Plane waves inside the 2/3 band have no tail; beyond it they are all tail."""
    grid = create_sample_grid(n=64)
    assert spectral_tail_fraction(plane_wave(grid, (3, 0))) < 1e-20
    assert math.isclose(spectral_tail_fraction(plane_wave(grid, (30, 0))), 1.0, rel_tol=1e-12)
    assert spectral_tail_fraction(Field(grid, np.zeros(grid.shape))) == 0.0


def test_radial_symmetrize_is_idempotent_projection():
    """Shell averaging is idempotent and invariant under swapping axes."""
    print("\n" + "="*60)
    print("TEST 6: Radial Symmetrization")
    print("="*60)

    grid = create_sample_grid(n=32, half_width=8.0)
    g = radial_symmetrize(create_random_field(grid, seed=3))

    assert np.allclose(radial_symmetrize(g).values, g.values, atol=1e-14), "Should be idempotent"
    assert np.array_equal(g.values, g.values.T), "Should be invariant under axis swap"
    print("✓ Idempotent and symmetric")


def test_radial_symmetrize_kills_odd_fields():
    """x_1 averages to zero on every shell that avoids the unpaired edge x = -L."""
    grid = create_sample_grid(n=32, half_width=8.0)
    lat = lattice(grid)
    x1 = np.broadcast_to(lat.x_axis[:, None], grid.shape).astype(complex)
    out = radial_symmetrize(Field(grid, x1)).values

    inside = lat.radius < grid.half_width
    assert np.max(np.abs(out[inside])) < 1e-12


def test_dyadic_exponent():
    assert dyadic_exponent(0.25) == -2
    assert dyadic_exponent(16.0) == 4
    with pytest.raises(DomainError):
        dyadic_exponent(3.0)
    with pytest.raises(DomainError):
        dyadic_exponent(-1.0)


def test_dilation_is_isometric_and_invertible():
    """Concentration keeps the mass; spreading undoes it exactly."""
    print("\n" + "="*60)
    print("TEST 7: Dyadic Dilation")
    print("="*60)

    grid = create_sample_grid(n=256, half_width=32.0)
    phi = annular_profile(grid, 0)
    mass = float(np.sum(np.abs(phi.values) ** 2) * grid.cell_volume)

    for h in (0.5, 0.25, 0.125):
        small = dilate(phi, h)
        small_mass = float(np.sum(np.abs(small.values) ** 2) * grid.cell_volume)
        assert math.isclose(small_mass, mass, rel_tol=1e-12), f"Mass should survive h={h}"
        back = dilate(small, 1.0 / h)
        assert _rel_l2(back.values, phi.values) < 1e-10, f"Spreading should invert h={h}"
        print(f"✓ h={h}: isometric and invertible")

    assert np.array_equal(dilate(phi, 1.0).values, phi.values)


def test_dilation_reports_lost_mass():
    """Spreading a wide field pushes mass off the box."""
    grid = create_sample_grid(n=64, half_width=16.0)
    with pytest.raises(ResolutionError):
        dilate(gaussian(grid, 4.0), 4.0)
