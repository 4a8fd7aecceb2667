"""Retrieval protocol, connectivity-map extraction, and planted-edge
recovery scoring.

Retrieval ranks each query's true counterpart against a seeded random
distractor pool by cosine similarity (rows are unit-norm, so plain dot
products). A retrieval counts as correct only when the true similarity is
STRICTLY greater than every distractor's; exact ties score as incorrect,
which keeps degenerate fixtures deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, RangeError
from .model import EncoderParams
from .numerics import Rng


@dataclass
class RetrievalReport:
    image_top1: float
    brain_top1: float
    candidates: int
    repeats: int
    image_per_repeat: list[float]
    brain_per_repeat: list[float]


def _direction_accuracy(sims: np.ndarray, candidates: int, rng: Rng) -> float:
    """Fraction of rows whose diagonal strictly beats candidates-1 sampled distractors."""
    n = sims.shape[0]
    correct = 0
    for i in range(n):
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        drawn = rng.choice(others, size=candidates - 1, replace=False)
        if sims[i, i] > sims[i, drawn].max():
            correct += 1
    return correct / n


def retrieval_eval(
    pred: np.ndarray,
    target: np.ndarray,
    candidates: int = 300,
    repeats: int = 30,
    seed: int = 0,
) -> RetrievalReport:
    """Two-direction top-1 retrieval, distractors resampled per item per repeat.

    Image direction queries each prediction against the target pool; brain
    direction queries each target against the prediction pool. Repeat r
    draws from stream r of ``seed``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    n = pred.shape[0]
    if pred.shape != target.shape or pred.ndim != 2:
        raise DataError(f"prediction shape {pred.shape} vs target shape {target.shape}")
    if candidates < 2:
        raise DataError(f"need at least 2 candidates, got {candidates}")
    if n < candidates:
        raise DataError(f"{n} rows cannot supply {candidates} candidates")
    sims = pred @ target.T
    image_acc, brain_acc = [], []
    for rep in range(repeats):
        rng = Rng(seed, stream=rep)
        image_acc.append(_direction_accuracy(sims, candidates, rng))
        brain_acc.append(_direction_accuracy(sims.T, candidates, rng))
    return RetrievalReport(
        image_top1=float(np.mean(image_acc)),
        brain_top1=float(np.mean(brain_acc)),
        candidates=candidates,
        repeats=repeats,
        image_per_repeat=image_acc,
        brain_per_repeat=brain_acc,
    )


def write_retrieval_csv(report: RetrievalReport, path):
    with open(path, "w") as f:
        f.write("direction,repeat,accuracy\n")
        for rep, acc in enumerate(report.image_per_repeat):
            f.write(f"image,{rep},{acc:.17g}\n")
        for rep, acc in enumerate(report.brain_per_repeat):
            f.write(f"brain,{rep},{acc:.17g}\n")
        f.write(f"image,mean,{report.image_top1:.17g}\n")
        f.write(f"brain,mean,{report.brain_top1:.17g}\n")


# --- connectivity maps --------------------------------------------------------

@dataclass
class ConnectivityMap:
    source: int
    influence: np.ndarray  # influence of the source on every voxel (or region)
    block_maps: list[np.ndarray]  # per-block |W'| + |W''|, target row x source column
    total_map: np.ndarray  # sum over blocks, possibly region-pooled


def _pool_regions(m: np.ndarray, regions: int) -> np.ndarray:
    c = m.shape[0]
    if regions < 1 or c % regions != 0:
        raise ConfigError(f"regions must divide the voxel count, got {regions} for {c}")
    size = c // regions
    return m.reshape(regions, size, regions, size).mean(axis=(1, 3))


def influence_map(params: EncoderParams) -> np.ndarray:
    """Total influence of source voxel k on target voxel j: sum_b |W'_b| + |W''_b|."""
    total = np.zeros((params.voxels, params.voxels))
    for blk in params.blocks:
        total += np.abs(blk.w_prime) + np.abs(blk.w_dprime)
    return total


def connectivity_map(
    params: EncoderParams, source: int, pooling: int | None = None
) -> ConnectivityMap:
    """Influence of one source voxel (or region, when pooled) on all others.

    The reported vector is the source COLUMN of the influence map: entry j
    is how strongly the source drives voxel j.
    """
    block_maps = [np.abs(b.w_prime) + np.abs(b.w_dprime) for b in params.blocks]
    total = sum(block_maps)
    if pooling is not None:
        total = _pool_regions(total, pooling)
    limit = total.shape[0]
    if not 0 <= source < limit:
        raise RangeError(f"source index {source} outside [0, {limit})")
    return ConnectivityMap(
        source=source,
        influence=total[:, source].copy(),
        block_maps=block_maps,
        total_map=total,
    )


@dataclass
class EdgeRecoveryResult:
    value: float
    degenerate: bool  # true when planted and background influence are both zero


def edge_recovery_score(
    params: EncoderParams,
    planted_edges,
    regions: int,
) -> EdgeRecoveryResult:
    """Mean pooled influence over planted (r, r') pairs relative to the mean
    over all other off-diagonal region pairs.

    A planted edge (r, r') means region r' drives region r, so it is scored
    at pooled[r, r'] (target row, source column). Zero-information
    parameters (e.g. fresh initialization) give 0/0, reported as a neutral
    1.0 with the degenerate flag set.
    """
    if not planted_edges:
        raise DataError("no planted-edge metadata to score against")
    pooled = _pool_regions(influence_map(params), regions)
    planted = set((int(r), int(t)) for r, t in planted_edges)
    planted_vals = [pooled[r, t] for r, t in planted]
    other_vals = [
        pooled[r, t]
        for r in range(regions)
        for t in range(regions)
        if r != t and (r, t) not in planted
    ]
    if not other_vals:
        raise DataError("every off-diagonal region pair is planted; nothing to compare")
    planted_mean = float(np.mean(planted_vals))
    other_mean = float(np.mean(other_vals))
    if planted_mean == 0.0 and other_mean == 0.0:
        return EdgeRecoveryResult(value=1.0, degenerate=True)
    if other_mean == 0.0:
        return EdgeRecoveryResult(value=float("inf"), degenerate=False)
    return EdgeRecoveryResult(value=planted_mean / other_mean, degenerate=False)


# --- exports ------------------------------------------------------------------

def write_influence_csv(influence: np.ndarray, path):
    with open(path, "w") as f:
        f.write("index,value\n")
        for i, v in enumerate(influence):
            f.write(f"{i},{v:.17g}\n")


def write_map_pgm(matrix: np.ndarray, path):
    """8-bit binary PGM, min-max scaled per image; flat maps render black."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    scaled = np.zeros_like(m) if hi == lo else (m - lo) / (hi - lo)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
