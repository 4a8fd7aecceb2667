"""Synthetic planted-connectivity data, the QBRN dataset container, and
ingestion of externally produced target embeddings.

Synthetic samples share a latent factor vector: voxels are a fixed mixing
of the latents plus a planted region-to-region multiplicative interaction,
squashed through a logistic; targets are a unit-normalized fixed linear
readout of the same latents. The interaction is exactly the kind of
voxel-product structure the trainable layer's multiplicative term can
represent, which makes planted-edge recovery a meaningful score.

Two generator properties make that recovery identifiable rather than
cosmetic. Each region mixes its own latent subset with strongly
correlated rows (a shared seeded direction plus scaled row noise), so a
planted source region is the only clean linear carrier of its gain
signal. And the default edge set feeds every region from one undistorted
hub region: when sources are themselves distorted (e.g. a ring), inverting
any region requires already having inverted its source, and training under
the frozen recipe reliably fails to bootstrap that chain.

File formats (little-endian throughout):

QBRN  magic "QBRN", version u32, N u32, C u32, D u32, flags u32
      (bit 0: planted-edge metadata present), N*C float32 voxels,
      N*D float32 embeddings, then if bit 0: edge count u32,
      (source u32, target u32) per edge as an ordered (r, r') pair,
      regions u32.
QEMB  magic "QEMB", version u32, N u32, D u32, N*D float32 rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError, InvariantError
from .model import logistic
from .numerics import Rng

DATASET_MAGIC = b"QBRN"
EMBED_MAGIC = b"QEMB"
FORMAT_VERSION = 1
FLAG_PLANTED_METADATA = 1

# Stream ids on the generator seed; sample streams occupy 0..n_train+n_test.
STREAM_MIXING = 1 << 62
STREAM_READOUT = (1 << 62) + 1

EMBED_NORM_TOL = 1e-6
INGEST_NORM_TOL = 1e-3

# Row-noise scale of the region mixing: rows are base + coherence * noise,
# then unit-normalized, so voxels within a region correlate strongly.
REGION_COHERENCE = 0.2


@dataclass
class SynthConfig:
    voxels: int = 128
    embed_dim: int = 64
    latent_dim: int = 16
    regions: int = 8
    edges: tuple[tuple[int, int], ...] | None = None  # None -> hub: (r, 0) for r >= 1
    interaction_strength: float = 6.0  # calibrated once via the generator self-test
    noise_std: float = 0.1
    n_train: int = 2000
    n_test: int = 200
    seed: int = 0

    def resolved_edges(self) -> tuple[tuple[int, int], ...]:
        if self.edges is not None:
            return tuple((int(r), int(t)) for r, t in self.edges)
        return tuple((r, 0) for r in range(1, self.regions))

    def validate(self):
        if self.voxels < 1 or self.embed_dim < 1 or self.latent_dim < 1:
            raise ConfigError("voxels, embed_dim and latent_dim must be positive")
        if self.regions < 1 or self.voxels % self.regions != 0:
            raise ConfigError(
                f"regions must divide voxels, got {self.regions} regions for {self.voxels} voxels"
            )
        if self.interaction_strength < 0 or self.noise_std < 0:
            raise ConfigError("interaction_strength and noise_std must be >= 0")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be positive")
        for r, t in self.resolved_edges():
            if not (0 <= r < self.regions and 0 <= t < self.regions):
                raise ConfigError(f"edge ({r}, {t}) outside the {self.regions} regions")


@dataclass
class Dataset:
    """In-memory image of a QBRN file."""

    voxels: np.ndarray  # (N, C) float32
    embeddings: np.ndarray  # (N, D) float32, unit rows
    edges: tuple[tuple[int, int], ...] | None = None
    regions: int | None = None

    @property
    def n(self) -> int:
        return self.voxels.shape[0]

    @property
    def voxel_count(self) -> int:
        return self.voxels.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]

    def has_planted_metadata(self) -> bool:
        return self.edges is not None


def _region_slices(voxels: int, regions: int) -> list[slice]:
    size = voxels // regions
    return [slice(r * size, (r + 1) * size) for r in range(regions)]


def mixing_matrix(cfg: SynthConfig) -> np.ndarray:
    """Fixed seeded latent-to-voxel mixing with unit-norm rows.

    Latent l is assigned to the regions r with l % stride == r % stride
    (stride = min(regions, latent_dim)), and every row of a region is the
    region's shared seeded direction plus REGION_COHERENCE-scaled noise on
    that support. Region-local support keeps each region the only linear
    carrier of its own latents.
    """
    rng = Rng(cfg.seed, stream=STREAM_MIXING)
    stride = min(cfg.regions, cfg.latent_dim)
    mix = np.zeros((cfg.voxels, cfg.latent_dim))
    for r, sl in enumerate(_region_slices(cfg.voxels, cfg.regions)):
        support = [l for l in range(cfg.latent_dim) if l % stride == r % stride]
        base = rng.normal(len(support))
        base /= np.linalg.norm(base)
        for row in range(sl.start, sl.stop):
            vec = base + REGION_COHERENCE * rng.normal(len(support))
            mix[row, support] = vec / np.linalg.norm(vec)
    return mix


def gen_synthetic(cfg: SynthConfig, split: str = "train") -> Dataset:
    """Generate one split deterministically; train and test share the mixing
    matrices but draw disjoint per-sample streams."""
    cfg.validate()
    if split not in ("train", "test"):
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    n = cfg.n_train if split == "train" else cfg.n_test
    offset = 0 if split == "train" else cfg.n_train

    mix = mixing_matrix(cfg)
    readout = Rng(cfg.seed, stream=STREAM_READOUT).normal((cfg.embed_dim, cfg.latent_dim))

    slices = _region_slices(cfg.voxels, cfg.regions)
    edges = cfg.resolved_edges()
    voxels = np.empty((n, cfg.voxels), dtype=np.float64)
    targets = np.empty((n, cfg.embed_dim), dtype=np.float64)
    for i in range(n):
        rng = Rng(cfg.seed, stream=offset + i)
        z = rng.normal(cfg.latent_dim)
        noise = rng.normal(cfg.voxels) * cfg.noise_std
        u = mix @ z
        v = u.copy()
        for r, t in edges:
            v[slices[r]] += cfg.interaction_strength * u[slices[r]] * u[slices[t]].mean()
        # clip inside the largest float32-representable open interval so the
        # storage cast cannot round saturated values onto 0 or 1
        voxels[i] = np.clip(logistic(v + noise), 1e-7, 1.0 - 2e-7)
        t_vec = readout @ z
        targets[i] = t_vec / np.linalg.norm(t_vec)
    return Dataset(
        voxels=voxels.astype("<f4"),
        embeddings=targets.astype("<f4"),
        edges=edges,
        regions=cfg.regions,
    )


def planted_signal_zscore(ds: Dataset) -> float:
    """Self-test statistic: z-score of the strongest correlation between the
    per-sample planted-edge voxel product and any embedding coordinate."""
    if not ds.has_planted_metadata():
        raise DataError("dataset carries no planted-edge metadata")
    slices = _region_slices(ds.voxel_count, ds.regions)
    x = ds.voxels.astype(np.float64)
    t = ds.embeddings.astype(np.float64)
    product = np.zeros(ds.n)
    for r, tr in ds.edges:
        product += x[:, slices[r]].mean(axis=1) * x[:, slices[tr]].mean(axis=1)
    product /= len(ds.edges)
    pc = product - product.mean()
    tc = t - t.mean(axis=0)
    denom = np.sqrt((pc**2).sum()) * np.sqrt((tc**2).sum(axis=0))
    corr = pc @ tc / np.maximum(denom, 1e-30)
    return float(np.max(np.abs(corr)) * np.sqrt(ds.n))


# --- QBRN container ---------------------------------------------------------

def write_dataset(ds: Dataset, path):
    n, c = ds.voxels.shape
    d = ds.embeddings.shape[1]
    flags = FLAG_PLANTED_METADATA if ds.has_planted_metadata() else 0
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<IIIII", FORMAT_VERSION, n, c, d, flags))
        f.write(np.ascontiguousarray(ds.voxels, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(ds.embeddings, dtype="<f4").tobytes())
        if flags & FLAG_PLANTED_METADATA:
            f.write(struct.pack("<I", len(ds.edges)))
            for r, t in ds.edges:
                f.write(struct.pack("<II", r, t))
            f.write(struct.pack("<I", ds.regions))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {blob[:4]!r}, expected {DATASET_MAGIC!r}", offset=0)
    if len(blob) < 24:
        raise FormatError("truncated dataset header", offset=len(blob))
    version, n, c, d, flags = struct.unpack("<IIIII", blob[4:24])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {version}", offset=4)
    expected = 24 + 4 * n * c + 4 * n * d
    if flags & FLAG_PLANTED_METADATA:
        if len(blob) < expected + 4:
            raise FormatError("truncated dataset before edge metadata", offset=len(blob))
        (n_edges,) = struct.unpack("<I", blob[expected : expected + 4])
        expected += 4 + 8 * n_edges + 4
    if len(blob) != expected:
        raise FormatError(
            f"dataset length {len(blob)} does not match header arithmetic {expected}",
            offset=min(len(blob), expected),
        )
    pos = 24
    voxels = np.frombuffer(blob, dtype="<f4", count=n * c, offset=pos).reshape(n, c).copy()
    pos += 4 * n * c
    embeddings = np.frombuffer(blob, dtype="<f4", count=n * d, offset=pos).reshape(n, d).copy()
    pos += 4 * n * d
    edges = None
    regions = None
    if flags & FLAG_PLANTED_METADATA:
        (n_edges,) = struct.unpack("<I", blob[pos : pos + 4])
        pos += 4
        edges = []
        for _ in range(n_edges):
            r, t = struct.unpack("<II", blob[pos : pos + 8])
            pos += 8
            edges.append((r, t))
        edges = tuple(edges)
        (regions,) = struct.unpack("<I", blob[pos : pos + 4])
        pos += 4
    norms = np.linalg.norm(embeddings.astype(np.float64), axis=1)
    off = np.abs(norms - 1.0)
    if n > 0 and np.any(off > EMBED_NORM_TOL):
        i = int(np.argmax(off))
        raise FormatError(
            f"embedding row {i} has norm {norms[i]!r}, expected 1 within {EMBED_NORM_TOL}",
            offset=24 + 4 * n * c + 4 * i * d,
        )
    return Dataset(voxels=voxels, embeddings=embeddings, edges=edges, regions=regions)


# --- QEMB container ---------------------------------------------------------

def write_embedding_file(rows: np.ndarray, path):
    rows = np.ascontiguousarray(rows, dtype="<f4")
    n, d = rows.shape
    with open(path, "wb") as f:
        f.write(EMBED_MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, n, d))
        f.write(rows.tobytes())


def read_embedding_file(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != EMBED_MAGIC:
        raise FormatError(f"bad embedding magic {blob[:4]!r}, expected {EMBED_MAGIC!r}", offset=0)
    if len(blob) < 16:
        raise FormatError("truncated embedding header", offset=len(blob))
    version, n, d = struct.unpack("<III", blob[4:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported embedding version {version}", offset=4)
    expected = 16 + 4 * n * d
    if len(blob) != expected:
        raise FormatError(
            f"embedding file length {len(blob)} does not match header arithmetic {expected}",
            offset=min(len(blob), expected),
        )
    return np.frombuffer(blob, dtype="<f4", count=n * d, offset=16).reshape(n, d).copy()


# --- external-embedding ingestion -------------------------------------------

def read_voxel_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values = [float(v) for v in line.split(",")]
            except ValueError as e:
                raise DataError(f"line {lineno} of {path}: {e}") from e
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(
                    f"line {lineno} of {path} has {len(values)} values, expected {width}"
                )
            rows.append(values)
    if not rows:
        raise DataError(f"voxel CSV {path} is empty")
    return np.asarray(rows, dtype=np.float64)


def ingest_embeddings(voxel_csv, embedding_file) -> Dataset:
    """Pair a voxel CSV with a QEMB file into a dataset without planted metadata.

    Embedding rows must be unit-norm within 1e-3; they are re-normalized in
    float64 before storage, anything farther off is rejected.
    """
    voxels = read_voxel_csv(voxel_csv)
    rows = read_embedding_file(embedding_file).astype(np.float64)
    if voxels.shape[0] != rows.shape[0]:
        raise DataError(
            f"{voxels.shape[0]} voxel rows vs {rows.shape[0]} embedding records"
        )
    norms = np.linalg.norm(rows, axis=1)
    off = np.abs(norms - 1.0)
    if np.any(off > INGEST_NORM_TOL):
        i = int(np.argmax(off))
        raise InvariantError(
            f"embedding row {i} has norm {norms[i]!r}, farther than {INGEST_NORM_TOL} from 1"
        )
    rows /= norms[:, None]
    return Dataset(
        voxels=voxels.astype("<f4"),
        embeddings=rows.astype("<f4"),
        edges=None,
        regions=None,
    )
