"""
Artifact storage - snapshots, CSV logs, JSON reports and the run manifest.

Every artifact carries the 16-hex config hash and the seed so a run
directory can be re-verified on its own. Snapshot layout (little endian):

    header  magic b"FRSH", u32 version, u32 dim, u32 n, f64 L, f64 alpha
    body    complex64 values (f32 real, f32 imag), row-major, n**dim entries
    footer  b"SEED", u64 seed, b"HASH", 16 ASCII hex chars of the config hash

Values are stored in single precision; reading returns them widened to
complex128, so a write of a read snapshot reproduces the file byte for byte.
"""

import csv
import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.errors import StructuralError
from src.models import Grid, RunManifest

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"FRSH"
SNAPSHOT_VERSION = 1
SNAPSHOT_HEADER = struct.Struct("<4sIIIdd")
SNAPSHOT_FOOTER = struct.Struct("<4sQ4s16s")
SEED_TAG = b"SEED"
HASH_TAG = b"HASH"
HASH_LENGTH = 16
BODY_DTYPE = np.dtype("<c8")

TRAJECTORY_COLUMNS = ["t", "mass", "energy", "hseminorm", "lqlr_partial", "dt", "event"]
CONCENTRATION_COLUMNS = ["n", "t", "radius", "concentrated", "fraction", "ratio", "running_max"]


def config_hash(config: Dict[str, Any]) -> str:
    """
    Stable digest of a config echo.

    Uses SHA256 of the canonical JSON (sorted keys, compact separators),
    truncated to 16 characters.
    """
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:HASH_LENGTH]


@dataclass
class Snapshot:
    """Decoded snapshot file."""

    grid: Grid
    values: np.ndarray
    alpha: float
    seed: int
    config_hash: str


def encode_snapshot(values: np.ndarray, grid: Grid, alpha: float, seed: int, digest: str) -> bytes:
    header = SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.dim, grid.n, grid.half_width, alpha)
    body = np.ascontiguousarray(values, dtype=BODY_DTYPE).tobytes()
    footer = SNAPSHOT_FOOTER.pack(SEED_TAG, seed, HASH_TAG, digest.encode("ascii"))
    return header + body + footer


def decode_snapshot(data: bytes) -> Snapshot:
    """
    Parse snapshot bytes.

    Raises:
        StructuralError: On a bad magic, version, size or footer
    """
    if len(data) < SNAPSHOT_HEADER.size:
        raise StructuralError("snapshot shorter than its header")
    magic, version, dim, n, half_width, alpha = SNAPSHOT_HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise StructuralError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise StructuralError(f"unsupported snapshot version {version}")
    grid = Grid(dim=dim, n=n, half_width=half_width)
    body_size = BODY_DTYPE.itemsize * n ** dim
    expected = SNAPSHOT_HEADER.size + body_size + SNAPSHOT_FOOTER.size
    if len(data) != expected:
        raise StructuralError(f"snapshot has {len(data)} bytes, expected {expected}")
    start = SNAPSHOT_HEADER.size
    values = np.frombuffer(data, dtype=BODY_DTYPE, count=n ** dim, offset=start).reshape(grid.shape)
    seed_tag, seed, hash_tag, digest = SNAPSHOT_FOOTER.unpack_from(data, start + body_size)
    if seed_tag != SEED_TAG or hash_tag != HASH_TAG:
        raise StructuralError("snapshot footer tags missing")
    return Snapshot(
        grid=grid,
        values=values.astype(np.complex128),
        alpha=alpha,
        seed=seed,
        config_hash=digest.decode("ascii"),
    )


def read_snapshot(path: Path) -> Snapshot:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read snapshot {path}: {e}") from e
    try:
        return decode_snapshot(data)
    except StructuralError as e:
        raise StructuralError(f"{path}: {e}") from e


class ArtifactStore:
    """
    Writes the artifacts of one run into a directory.

    Paths of written files are kept relative to the root so the manifest
    lists them in write order.
    """

    def __init__(self, root: str, digest: str, seed: int):
        """
        Initialize storage.

        Args:
            root: Run directory (created if missing)
            digest: Config hash stamped into every artifact
            seed: Generator seed stamped into every artifact
        """
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.digest = digest
        self.seed = seed
        self.artifacts: List[str] = []

    def _path(self, name: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _record(self, path: Path) -> Path:
        rel = str(path.relative_to(self.root))
        if rel not in self.artifacts:
            self.artifacts.append(rel)
        logger.debug("artifact_written path=%s", rel)
        return path

    def _stamp(self) -> str:
        return f"# config_hash={self.digest} seed={self.seed}"

    def write_snapshot(self, name: str, field, alpha: float) -> Path:
        path = self._path(name)
        payload = encode_snapshot(field.values, field.grid, alpha, self.seed, self.digest)
        try:
            path.write_bytes(payload)
        except OSError as e:
            raise OSError(f"cannot write snapshot {path}: {e}") from e
        return self._record(path)

    def _write_rows(self, name: str, columns: List[str], rows: List[Dict[str, Any]]) -> Path:
        path = self._path(name)
        try:
            with open(path, "w", newline="") as f:
                f.write(self._stamp() + "\n")
                writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
                writer.writeheader()
                for row in rows:
                    writer.writerow({c: row[c] for c in columns})
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        return self._record(path)

    def write_trajectory_csv(self, name: str, traj) -> Path:
        return self._write_rows(name, TRAJECTORY_COLUMNS, [row.as_dict() for row in traj.log])

    def write_concentration_csv(self, name: str, report) -> Path:
        rows = [
            {
                "n": r.n, "t": r.t, "radius": r.radius, "concentrated": r.concentrated,
                "fraction": r.fraction, "ratio": r.ratio, "running_max": r.running_max,
            }
            for r in report.rows
        ]
        return self._write_rows(name, CONCENTRATION_COLUMNS, rows)

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self._path(name)
        document = {"config_hash": self.digest, "seed": self.seed, **payload}
        try:
            path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        return self._record(path)

    def write_manifest(self, manifest: RunManifest) -> Path:
        """Write manifest.json; it is not listed among the artifacts."""
        path = self._path("manifest.json")
        manifest = manifest.model_copy(update={"artifacts": list(self.artifacts)})
        try:
            path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n")
        except OSError as e:
            raise OSError(f"cannot write manifest {path}: {e}") from e
        return path


def load_manifest(root: str) -> RunManifest:
    path = Path(root) / "manifest.json"
    try:
        return RunManifest.model_validate_json(path.read_text())
    except OSError as e:
        raise OSError(f"cannot read manifest {path}: {e}") from e


def artifact_hash(path: Path) -> Optional[str]:
    """Config hash stamped in one artifact, or None when it carries none."""
    path = Path(path)
    if path.suffix == ".frsh":
        return read_snapshot(path).config_hash
    if path.suffix == ".csv":
        first = path.read_text().splitlines()[0] if path.stat().st_size else ""
        for token in first.lstrip("# ").split():
            if token.startswith("config_hash="):
                return token.split("=", 1)[1]
        return None
    if path.suffix == ".json":
        return json.loads(path.read_text()).get("config_hash")
    return None


def verify_run(root: str) -> List[str]:
    """
    Re-hash the manifest's config echo and check every artifact against it.

    Returns:
        Problems found; empty when the run directory is consistent
    """
    manifest = load_manifest(root)
    problems = []
    expected = config_hash(manifest.config)
    if expected != manifest.config_hash:
        problems.append(f"manifest hash {manifest.config_hash} != recomputed {expected}")
    for rel in manifest.artifacts:
        path = Path(root) / rel
        if not path.exists():
            problems.append(f"{rel}: missing")
            continue
        try:
            found = artifact_hash(path)
        except (OSError, StructuralError, ValueError) as e:
            problems.append(f"{rel}: unreadable ({e})")
            continue
        if found != expected:
            problems.append(f"{rel}: hash {found} != {expected}")
    return problems
