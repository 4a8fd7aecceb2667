"""Committed golden fixtures and their verification.

Fixtures are tiny (8 voxels, 16 samples) so every suite that consumes them
runs in well under a second. They are regenerated byte-identically from
the documented seeds by ``write_fixtures`` (see scripts/make_fixtures.py);
``verify_fixtures`` recomputes hashes against MANIFEST.sha256 and fails on
any drift.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .data import SynthConfig, gen_synthetic, write_dataset, write_embedding_file
from .errors import FixtureError
from .model import fit_input_stats, init_params
from .train import TrainConfig, save_checkpoint

FIXTURE_DIR = Path(__file__).parent / "fixtures"
MANIFEST_NAME = "MANIFEST.sha256"

# Generation recipe for every committed fixture; changing anything here
# requires regenerating the fixtures and the manifest.
TINY_SYNTH = SynthConfig(
    voxels=8,
    embed_dim=4,
    latent_dim=2,
    regions=4,
    interaction_strength=1.0,
    noise_std=0.1,
    n_train=16,
    n_test=8,
    seed=7,
)
TINY_TRAIN_CONFIG = TrainConfig(blocks=2, seed=7)
PERFECT_ROWS = 16

FIXTURE_FILES = ("tiny.train.qbrn", "tiny.test.qbrn", "init.qbck", "perfect.qemb")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_fixtures(root: Path | None = None) -> list[Path]:
    """Regenerate all fixture files and the manifest under ``root``."""
    root = Path(root) if root is not None else FIXTURE_DIR
    root.mkdir(parents=True, exist_ok=True)
    train = gen_synthetic(TINY_SYNTH, split="train")
    test = gen_synthetic(TINY_SYNTH, split="test")
    write_dataset(train, root / "tiny.train.qbrn")
    write_dataset(test, root / "tiny.test.qbrn")

    params = init_params(
        TINY_SYNTH.voxels,
        TINY_SYNTH.embed_dim,
        TINY_TRAIN_CONFIG.blocks,
        TINY_TRAIN_CONFIG.seed,
    )
    params.input_mean, params.input_std = fit_input_stats(train.voxels.astype(np.float64))
    save_checkpoint(params, TINY_TRAIN_CONFIG.echo(), root / "init.qbck")

    write_embedding_file(np.eye(PERFECT_ROWS, dtype=np.float32), root / "perfect.qemb")

    paths = [root / name for name in FIXTURE_FILES]
    manifest = "".join(f"{_sha256(p)}  {p.name}\n" for p in paths)
    (root / MANIFEST_NAME).write_text(manifest)
    return paths


def read_manifest(root: Path | None = None) -> dict[str, str]:
    root = Path(root) if root is not None else FIXTURE_DIR
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise FixtureError(f"missing fixture manifest {manifest_path}")
    entries = {}
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        digest, name = line.split(None, 1)
        entries[name.strip()] = digest
    return entries


def verify_fixtures(root: Path | None = None) -> list[tuple[str, str]]:
    """Recompute fixture hashes against the manifest.

    Returns (name, status) pairs with status "ok" or a description of the
    mismatch; a missing file raises FixtureError.
    """
    root = Path(root) if root is not None else FIXTURE_DIR
    entries = read_manifest(root)
    results = []
    for name, expected in sorted(entries.items()):
        path = root / name
        if not path.exists():
            raise FixtureError(f"missing fixture file {path}")
        actual = _sha256(path)
        status = "ok" if actual == expected else f"hash mismatch: expected {expected}, got {actual}"
        results.append((name, status))
    return results
