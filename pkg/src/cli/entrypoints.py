"""
CLI entrypoints for simulation experiments.

Provides command-line interfaces for:
- Experiment runs (evolve, decompose, wave-operator, blowup-scan, minimal-mass, nonlinear-check)
- Run-directory verification
- Synthetic profile mixtures for decomposition runs
"""

import argparse
import json
import logging
import os
import platform
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pydantic
import scipy
import yaml
from dotenv import load_dotenv

from src.cli.experiments import DRIVERS, NEEDS_BASE, make_generator
from src.config.loader import parse_config
from src.models import ExperimentConfig, ExperimentKind, Grid, RunManifest, RunStatus
from src.profiles.decompose import ProfileComponent, synthesize
from src.spectral.builders import annular_profile
from src.spectral.grid import Field, radial_symmetrize
from src.storage.artifacts import ArtifactStore, config_hash, verify_run

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


def _banner(title: str) -> None:
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def library_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "pyyaml": yaml.__version__,
    }


def config_echo(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Canonical config echo; the output directory does not affect the hash."""
    return cfg.model_dump(mode="json", exclude={"output_dir"})


def run_experiment(
    cfg: ExperimentConfig,
    out: Optional[str] = None,
    seed: Optional[int] = None,
    base: Optional[Path] = None,
) -> Dict[str, Any]:
    """
    Run one experiment and write its artifacts plus manifest.json.

    Args:
        cfg: Validated experiment config
        out: Output directory override
        seed: Seed override
        base: Directory that relative input paths resolve against

    Returns:
        Result dict with status, exit_code, output_dir, config_hash, artifacts, events
    """
    updates = {}
    if out is not None:
        updates["output_dir"] = out
    if seed is not None:
        updates["seed"] = seed
    if updates:
        cfg = ExperimentConfig.model_validate({**cfg.model_dump(), **updates})

    echo = config_echo(cfg)
    digest = config_hash(echo)
    store = ArtifactStore(cfg.output_dir, digest, cfg.seed)
    rng = make_generator(cfg.seed)

    _banner(f"EXPERIMENT: {cfg.kind.value}")
    print(f"Started: {datetime.now(timezone.utc).isoformat()}")
    print(f"Output: {cfg.output_dir}")
    print(f"Config hash: {digest}  seed: {cfg.seed}")
    print("=" * 70 + "\n")

    started = time.perf_counter()
    events, warnings, error = [], [], None
    try:
        driver = DRIVERS[cfg.kind]
        if cfg.kind in NEEDS_BASE:
            outcome = driver(cfg, rng, store, base or Path.cwd())
        else:
            outcome = driver(cfg, rng, store)
        events, warnings = outcome.events, outcome.warnings
        status = RunStatus.WARNING if (events or warnings) else RunStatus.SUCCESS
        print(f"✓ {cfg.kind.value} complete: {len(store.artifacts)} artifacts")
    except Exception as e:
        print(f"\n✗ Error during {cfg.kind.value}: {e}")
        traceback.print_exc()
        status, error = RunStatus.FAILED, str(e)

    manifest = RunManifest(
        config_hash=digest,
        seed=cfg.seed,
        kind=cfg.kind,
        status=status,
        config=echo,
        events=events + warnings + ([f"error: {error}"] if error else []),
        versions=library_versions(),
        wall_time=time.perf_counter() - started,
    )
    store.write_manifest(manifest)

    _banner("RUN SUMMARY")
    print(f"Status: {status.value}")
    for message in manifest.events:
        print(f"⚠ {message}")
    print("=" * 70 + "\n")

    return {
        "status": status.value,
        "exit_code": status.exit_code,
        "output_dir": cfg.output_dir,
        "config_hash": digest,
        "artifacts": list(store.artifacts),
        "events": manifest.events,
    }


def run_verify(directory: str) -> Dict[str, Any]:
    """Re-hash a run directory's config echo and check every artifact."""
    _banner(f"VERIFY: {directory}")
    try:
        problems = verify_run(directory)
    except Exception as e:
        print(f"✗ Cannot verify {directory}: {e}")
        return {"status": "failed", "exit_code": 1, "problems": [str(e)]}
    for problem in problems:
        print(f"✗ {problem}")
    if not problems:
        print("✓ All artifacts carry the manifest's config hash")
    status = RunStatus.FAILED if problems else RunStatus.SUCCESS
    return {"status": status.value, "exit_code": status.exit_code, "problems": problems}


def run_synth(profiles_path: str, out: Optional[str] = None) -> Dict[str, Any]:
    """
    Build a synthetic mixture from a profiles JSON file.

    The file holds grid, alpha, seed, optional members/noise/output_dir and a
    list of components {band, mass, h, t}; each component's profile is the
    octave bump at *band*. Writes mixture_NN.frsh per member and synthesis.json.
    """
    _banner("SYNTHESIZE MIXTURE")
    try:
        spec = json.loads(Path(profiles_path).read_text())
        grid = Grid.model_validate(spec["grid"])
        alpha = float(spec["alpha"])
        seed = int(spec.get("seed", 0))
        members = int(spec.get("members", 1))
        noise = float(spec.get("noise", 0.0))
        out_dir = out or spec.get("output_dir", "runs/synth")

        components = [
            ProfileComponent(
                profile=annular_profile(grid, int(c.get("band", 0)), float(c.get("mass", 1.0))),
                h=float(c.get("h", 1.0)),
                t=float(c.get("t", 0.0)),
                index=i,
            )
            for i, c in enumerate(spec["components"])
        ]
        store = ArtifactStore(out_dir, config_hash(spec), seed)
        rng = make_generator(seed)
        written = []
        for n in range(members):
            remainder = Field(grid, np.zeros(grid.shape))
            if noise > 0:
                raw = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
                remainder = radial_symmetrize(remainder.with_values(noise * raw))
            mixture = synthesize(components, remainder, alpha)
            written.append(str(store.write_snapshot(f"mixture_{n:02d}.frsh", mixture, alpha).name))
        store.write_json(
            "synthesis.json",
            {
                "components": [
                    {"band": int(c.get("band", 0)), "mass": m.mass, "h": m.h, "t": m.t}
                    for c, m in zip(spec["components"], components)
                ],
                "members": written,
            },
        )
    except Exception as e:
        print(f"✗ Synthesis failed: {e}")
        return {"status": "failed", "exit_code": 1, "error": str(e)}

    print(f"✓ Wrote {len(written)} mixture snapshots to {out_dir}")
    return {"status": "success", "exit_code": 0, "output_dir": out_dir, "members": written}


def main():
    """Main CLI entry point."""
    logging.basicConfig(
        level=os.getenv("LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    parser = argparse.ArgumentParser(
        prog="frac",
        description="Fractional Hartree simulation lab - experiment runner",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Evolve initial data
  frac evolve --config config/experiments/evolve.yaml

  # Same run into another directory with another seed
  frac evolve --config config/experiments/evolve.yaml --out runs/evolve-2 --seed 7

  # Check a run directory
  frac verify runs/evolve

  # Build mixtures for a decompose run
  frac synth --profiles config/experiments/mixture.json
        """,
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    for kind in ExperimentKind:
        kind_parser = subparsers.add_parser(kind.value, help=f"Run a {kind.value} experiment")
        kind_parser.add_argument("--config", required=True, help="Experiment YAML file")
        kind_parser.add_argument("--out", help="Output directory (overrides output_dir)")
        kind_parser.add_argument("--seed", type=int, help="64-bit generator seed (overrides seed)")

    verify_parser = subparsers.add_parser("verify", help="Re-hash a run directory")
    verify_parser.add_argument("directory", help="Run directory holding manifest.json")

    synth_parser = subparsers.add_parser("synth", help="Build synthetic profile mixtures")
    synth_parser.add_argument("--profiles", required=True, help="Profiles JSON file")
    synth_parser.add_argument("--out", help="Output directory")

    args = parser.parse_args()

    if args.command == "verify":
        result = run_verify(args.directory)
        sys.exit(result["exit_code"])

    elif args.command == "synth":
        result = run_synth(args.profiles, out=args.out)
        sys.exit(result["exit_code"])

    elif args.command is None:
        parser.print_help()
        sys.exit(1)

    try:
        cfg = parse_config(args.config)
    except (OSError, ValueError) as e:
        print(f"✗ {e}")
        sys.exit(1)
    if cfg.kind.value != args.command:
        print(f"✗ Config kind '{cfg.kind.value}' does not match command '{args.command}'")
        sys.exit(1)

    result = run_experiment(cfg, out=args.out, seed=args.seed, base=Path(args.config).parent)
    sys.exit(result["exit_code"])


if __name__ == "__main__":
    main()
