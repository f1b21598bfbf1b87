"""
Tests for artifact storage: config hashing, the snapshot format, stamped
CSV/JSON files and run verification.
"""

import json
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest

from src.errors import StructuralError
from src.models import ExperimentKind, Grid, RunManifest, RunStatus, SimConfig
from src.solver.propagator import evolve
from src.spectral.builders import gaussian
from src.spectral.grid import Field
from src.storage.artifacts import (
    SNAPSHOT_FOOTER,
    SNAPSHOT_HEADER,
    TRAJECTORY_COLUMNS,
    ArtifactStore,
    config_hash,
    decode_snapshot,
    encode_snapshot,
    load_manifest,
    read_snapshot,
    verify_run,
)


def create_sample_config_echo() -> dict:
    return {
        "kind": "evolve",
        "seed": 7,
        "sim": {"alpha": 1.8, "lam": 1, "grid": {"dim": 2, "n": 32, "half_width": 8.0}},
    }


def create_sample_field(n: int = 32, seed: int = 7) -> Field:
    grid = Grid(dim=2, n=n, half_width=8.0)
    rng = np.random.Generator(np.random.Philox(seed))
    values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return Field(grid, values)


def create_populated_run(root: str) -> str:
    """Write a snapshot, a trajectory CSV, a JSON report and the manifest."""
    echo = create_sample_config_echo()
    digest = config_hash(echo)
    store = ArtifactStore(root, digest, seed=7)

    cfg = SimConfig(alpha=1.8, lam=1, grid=Grid(dim=2, n=32, half_width=8.0), dt=0.01, t_end=0.03)
    traj = evolve(gaussian(cfg.grid, 1.0) * 0.3, cfg)
    store.write_snapshot("snapshots/final.frsh", traj.final, cfg.alpha)
    store.write_trajectory_csv("trajectory.csv", traj)
    store.write_json("report.json", {"verdict": "completed"})
    store.write_manifest(
        RunManifest(
            config_hash=digest,
            seed=7,
            kind=ExperimentKind.EVOLVE,
            status=RunStatus.SUCCESS,
            config=echo,
        )
    )
    return digest


def test_config_hash_is_canonical():
    """Key order does not matter; the digest is 16 hex chars."""
    print("\n" + "="*60)
    print("TEST 1: Config Hash")
    print("="*60)

    echo = create_sample_config_echo()
    reordered = {"sim": dict(reversed(list(echo["sim"].items()))), "seed": 7, "kind": "evolve"}
    digest = config_hash(echo)

    assert len(digest) == 16
    assert all(c in "0123456789abcdef" for c in digest)
    assert config_hash(reordered) == digest, "Hash should ignore key order"
    assert config_hash({**echo, "seed": 8}) != digest, "Seed is part of the echo"
    print(f"✓ {digest}")


def test_snapshot_round_trip_is_bit_exact():
    """Single-precision values come back identical, along with grid, alpha, seed and hash."""
    print("\n" + "="*60)
    print("TEST 2: Snapshot Format")
    print("="*60)

    field = create_sample_field()
    with tempfile.TemporaryDirectory() as tmpdir:
        store = ArtifactStore(tmpdir, "0123456789abcdef", seed=7)
        path = store.write_snapshot("u.frsh", field, 1.8)
        snap = read_snapshot(path)

        assert snap.grid == field.grid
        assert snap.alpha == 1.8
        assert snap.seed == 7
        assert snap.config_hash == "0123456789abcdef"
        assert snap.values.dtype == np.complex128
        assert np.array_equal(snap.values, field.values.astype(np.complex64)), "Stored values should be bit-exact"
        assert np.max(np.abs(snap.values - field.values)) < 1e-6 * np.max(np.abs(field.values))
        assert path.stat().st_size == SNAPSHOT_HEADER.size + 8 * 32 ** 2 + SNAPSHOT_FOOTER.size

        again = store.write_snapshot("again.frsh", Field(snap.grid, snap.values), snap.alpha)
        assert again.read_bytes() == path.read_bytes(), "Rewriting a read snapshot should reproduce the file"
    print("✓ Bit-exact")


def test_snapshot_header_layout():
    """Magic, version, d, N, L, alpha up front; seed and hash only in the footer."""
    field = create_sample_field(n=16)
    payload = encode_snapshot(field.values, field.grid, 1.8, 123456789, "0123456789abcdef")

    assert SNAPSHOT_HEADER.size == 32
    magic, version, dim, n, half_width, alpha = struct.unpack_from("<4sIIIdd", payload)
    assert (magic, version, dim, n, half_width, alpha) == (b"FRSH", 1, 2, 16, 8.0, 1.8)

    body = np.frombuffer(payload, dtype="<c8", count=16 * 16, offset=32).reshape(16, 16)
    assert np.array_equal(body, field.values.astype(np.complex64)), "Body should be row-major complex64"

    footer = payload[32 + 8 * 16 * 16:]
    assert footer[:4] == b"SEED"
    assert struct.unpack_from("<Q", footer, 4)[0] == 123456789
    assert footer[12:] == b"HASH0123456789abcdef"


def test_corrupt_snapshot_is_rejected():
    field = create_sample_field()
    payload = encode_snapshot(field.values, field.grid, 1.8, 7, "0123456789abcdef")

    with pytest.raises(StructuralError):
        decode_snapshot(b"XXXX" + payload[4:])
    with pytest.raises(StructuralError):
        decode_snapshot(payload[:4] + struct.pack("<I", 2) + payload[8:])
    with pytest.raises(StructuralError):
        decode_snapshot(payload[:-5])
    with pytest.raises(StructuralError):
        decode_snapshot(payload[:10])

    bad_footer = payload[:-20] + b"NOPE" + payload[-16:]
    with pytest.raises(StructuralError):
        decode_snapshot(bad_footer)


def test_trajectory_csv_is_stamped():
    """First line carries hash and seed, then the fixed header and one row per sample."""
    with tempfile.TemporaryDirectory() as tmpdir:
        create_populated_run(tmpdir)
        lines = (Path(tmpdir) / "trajectory.csv").read_text().splitlines()
        manifest = load_manifest(tmpdir)

        assert lines[0] == f"# config_hash={manifest.config_hash} seed=7"
        assert lines[1] == ",".join(TRAJECTORY_COLUMNS)
        assert len(lines) > 2

        report = json.loads((Path(tmpdir) / "report.json").read_text())
        assert report["config_hash"] == manifest.config_hash
        assert report["verdict"] == "completed"


def test_manifest_lists_artifacts_in_write_order():
    with tempfile.TemporaryDirectory() as tmpdir:
        create_populated_run(tmpdir)
        manifest = load_manifest(tmpdir)

    assert manifest.artifacts == ["snapshots/final.frsh", "trajectory.csv", "report.json"]
    assert "manifest.json" not in manifest.artifacts


def test_verify_clean_run():
    print("\n" + "="*60)
    print("TEST 3: Run Verification")
    print("="*60)

    with tempfile.TemporaryDirectory() as tmpdir:
        create_populated_run(tmpdir)
        problems = verify_run(tmpdir)

    assert problems == [], f"Clean run should verify, got {problems}"
    print("✓ No problems")


def test_verify_detects_tampering():
    """A rewritten report, a missing snapshot and an edited echo are all reported."""
    with tempfile.TemporaryDirectory() as tmpdir:
        create_populated_run(tmpdir)
        report = Path(tmpdir) / "report.json"
        report.write_text(json.dumps({"config_hash": "ffffffffffffffff"}))
        (Path(tmpdir) / "snapshots" / "final.frsh").unlink()

        problems = verify_run(tmpdir)
        assert any(p.startswith("report.json: hash") for p in problems)
        assert any(p == "snapshots/final.frsh: missing" for p in problems)

        manifest_path = Path(tmpdir) / "manifest.json"
        document = json.loads(manifest_path.read_text())
        document["config"]["seed"] = 99
        manifest_path.write_text(json.dumps(document))

        problems = verify_run(tmpdir)
        assert any(p.startswith("manifest hash") for p in problems)
    print(f"✓ Found {len(problems)} problems")
