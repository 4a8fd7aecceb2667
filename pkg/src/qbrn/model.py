"""Full voxel encoder: standardization, logistic squashing, a stack of
connectivity blocks with inter-block clamping, and a linear projection to a
unit-norm embedding.

The public ``encode`` / ``encode_backward`` operate on one sample; training
uses the batched ``forward_batch`` / ``backward_batch`` pair, which computes
the same pipeline vectorized over rows (tests pin the two against each
other and against the per-sample reference layer in :mod:`qbrn.qlayer`).

Gradients are exact for the pipeline as computed: clamps pass gradient 1
inside their interval and 0 outside, and disabled terms (ablation flags)
contribute nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, NumericalError
from .numerics import Rng, softmax_rows
from .qlayer import VOXEL_EPS, BlockParams

# Stream ids reserved on the training seed; data generation owns 2^62+.
INIT_STREAM = (1 << 61) - 1
EPOCH_STREAM_BASE = 1 << 61

_LO = VOXEL_EPS
_HI = 1.0 - VOXEL_EPS


@dataclass
class AblationFlags:
    """Structural toggles for the three block terms.

    ``voxel_controlling=False`` drops the x*(W'x) term,
    ``measurement_projection=False`` drops the x*(W''g) term, and
    ``phase_shifting=False`` freezes theta0-theta1 at pi/2 (the phase
    factor stays at its inactive value and the phases stop learning).
    """

    phase_shifting: bool = True
    voxel_controlling: bool = True
    measurement_projection: bool = True


@dataclass
class EncoderParams:
    blocks: list[BlockParams]
    proj_weight: np.ndarray  # (D, C)
    proj_bias: np.ndarray  # (D,)
    input_mean: np.ndarray  # (C,) frozen training-set statistics
    input_std: np.ndarray  # (C,)

    @property
    def voxels(self) -> int:
        return self.proj_weight.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.proj_weight.shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            blocks=[b.copy() for b in self.blocks],
            proj_weight=self.proj_weight.copy(),
            proj_bias=self.proj_bias.copy(),
            input_mean=self.input_mean.copy(),
            input_std=self.input_std.copy(),
        )


def init_params(voxels: int, embed_dim: int, blocks: int, seed: int) -> EncoderParams:
    """Identity-initialized blocks plus a seeded random projection.

    Blocks start as exact identities (zero couplings, pi/2 phase gap), so a
    freshly initialized encoder reduces to normalize(proj(logistic(z))).
    """
    rng = Rng(seed, stream=INIT_STREAM)
    proj = rng.normal((embed_dim, voxels)) / math.sqrt(voxels)
    return EncoderParams(
        blocks=[BlockParams.identity_init(voxels) for _ in range(blocks)],
        proj_weight=proj,
        proj_bias=np.zeros(embed_dim),
        input_mean=np.zeros(voxels),
        input_std=np.ones(voxels),
    )


def fit_input_stats(training_voxels) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel mean and population standard deviation, std floored at 1e-8."""
    arr = np.asarray(training_voxels, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D sample array, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise DataError(f"need at least 2 samples to fit statistics, got {arr.shape[0]}")
    mean = arr.mean(axis=0)
    std = np.sqrt(((arr - mean) ** 2).mean(axis=0))
    return mean, np.maximum(std, 1e-8)


def logistic(z: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp for large |z|.
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class _ForwardCache:
    z: np.ndarray
    sig: np.ndarray  # logistic output, pre-clamp
    in_mask: np.ndarray
    block_inputs: list  # x entering each block (post-clamp)
    block_a: list
    block_cosd: list
    block_sind: list
    block_g: list
    block_t1: list  # x @ w_prime.T or None
    block_t2: list  # g @ w_dprime.T or None
    block_masks: list
    x_final: np.ndarray
    p_raw: np.ndarray
    norms: np.ndarray
    p: np.ndarray


def forward_batch(
    raws: np.ndarray, params: EncoderParams, flags: AblationFlags
) -> tuple[np.ndarray, _ForwardCache]:
    """Encode a batch of raw voxel rows; returns (embeddings, cache)."""
    raws = np.atleast_2d(np.asarray(raws, dtype=np.float64))
    if raws.shape[1] != params.voxels:
        raise DimensionError(f"{raws.shape[1]} voxels in input, encoder expects {params.voxels}")
    z = (raws - params.input_mean) / params.input_std
    sig = logistic(z)
    in_mask = (sig >= _LO) & (sig <= _HI)
    x = np.clip(sig, _LO, _HI)

    block_inputs, block_a, block_cosd, block_sind = [], [], [], []
    block_g, block_t1, block_t2, block_masks = [], [], [], []
    for b, blk in enumerate(params.blocks):
        block_inputs.append(x)
        a = np.sqrt((1.0 - x) * x)
        if flags.phase_shifting:
            dtheta = blk.theta0 - blk.theta1
        else:
            dtheta = np.full(params.voxels, math.pi / 2.0)
        cosd = np.cos(dtheta)
        sind = np.sin(dtheta)
        g = a * cosd
        h = x
        t1 = t2 = None
        if flags.voxel_controlling:
            t1 = x @ blk.w_prime.T
            h = h + x * t1
        if flags.measurement_projection:
            t2 = g @ blk.w_dprime.T
            h = h + x * t2
        if not np.all(np.isfinite(h)):
            raise NumericalError(f"non-finite intermediate in block {b}")
        mask = (h >= _LO) & (h <= _HI)
        block_a.append(a)
        block_cosd.append(cosd)
        block_sind.append(sind)
        block_g.append(g)
        block_t1.append(t1)
        block_t2.append(t2)
        block_masks.append(mask)
        x = np.clip(h, _LO, _HI)

    p_raw = x @ params.proj_weight.T + params.proj_bias
    norms = np.linalg.norm(p_raw, axis=1)
    if not np.all(np.isfinite(p_raw)) or np.any(norms == 0.0):
        raise NumericalError("projection produced a non-finite or zero-norm embedding")
    p = p_raw / norms[:, None]
    cache = _ForwardCache(
        z=z,
        sig=sig,
        in_mask=in_mask,
        block_inputs=block_inputs,
        block_a=block_a,
        block_cosd=block_cosd,
        block_sind=block_sind,
        block_g=block_g,
        block_t1=block_t1,
        block_t2=block_t2,
        block_masks=block_masks,
        x_final=x,
        p_raw=p_raw,
        norms=norms,
        p=p,
    )
    return p, cache


def backward_batch(
    params: EncoderParams,
    flags: AblationFlags,
    cache: _ForwardCache,
    upstream: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of sum(upstream * embeddings) for every parameter, summed over the batch."""
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    grads: dict[str, np.ndarray] = {}

    # L2 normalization: dv = (u - (u . p) p) / |v|
    rowdot = np.sum(upstream * cache.p, axis=1, keepdims=True)
    dv = (upstream - rowdot * cache.p) / cache.norms[:, None]
    grads["proj_weight"] = dv.T @ cache.x_final
    grads["proj_bias"] = dv.sum(axis=0)
    dx = dv @ params.proj_weight

    for b in range(len(params.blocks) - 1, -1, -1):
        blk = params.blocks[b]
        dh = dx * cache.block_masks[b]
        x = cache.block_inputs[b]
        a = cache.block_a[b]
        g = cache.block_g[b]
        cosd = cache.block_cosd[b]
        sind = cache.block_sind[b]
        dhx = dh * x
        dx = dh.copy()
        if flags.voxel_controlling:
            dx += dh * cache.block_t1[b] + dhx @ blk.w_prime
            grads[f"blocks.{b}.w_prime"] = dhx.T @ x
        else:
            grads[f"blocks.{b}.w_prime"] = np.zeros_like(blk.w_prime)
        if flags.measurement_projection:
            dx += dh * cache.block_t2[b]
            s = dhx @ blk.w_dprime
            grads[f"blocks.{b}.w_dprime"] = dhx.T @ g
            dx += s * cosd * (1.0 - 2.0 * x) / (2.0 * a)
            if flags.phase_shifting:
                sa = (s * a).sum(axis=0)
                grads[f"blocks.{b}.theta0"] = -sa * sind
                grads[f"blocks.{b}.theta1"] = sa * sind
            else:
                grads[f"blocks.{b}.theta0"] = np.zeros_like(blk.theta0)
                grads[f"blocks.{b}.theta1"] = np.zeros_like(blk.theta1)
        else:
            grads[f"blocks.{b}.w_dprime"] = np.zeros_like(blk.w_dprime)
            grads[f"blocks.{b}.theta0"] = np.zeros_like(blk.theta0)
            grads[f"blocks.{b}.theta1"] = np.zeros_like(blk.theta1)

    dsig = dx * cache.in_mask
    dz = dsig * cache.sig * (1.0 - cache.sig)
    grads["input_mean"] = -(dz / params.input_std).sum(axis=0)
    grads["input_std"] = -(dz * cache.z / params.input_std).sum(axis=0)
    return grads


def encode(raw: np.ndarray, params: EncoderParams, flags: AblationFlags | None = None) -> np.ndarray:
    """Encode one raw voxel vector into a unit-norm embedding."""
    flags = flags or AblationFlags()
    p, _ = forward_batch(np.asarray(raw)[None, :], params, flags)
    return p[0]


def encode_backward(
    raw: np.ndarray,
    params: EncoderParams,
    flags: AblationFlags | None,
    upstream: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of sum(upstream * encode(raw)) for every parameter field."""
    flags = flags or AblationFlags()
    _, cache = forward_batch(np.asarray(raw)[None, :], params, flags)
    return backward_batch(params, flags, cache, np.asarray(upstream)[None, :])


# --- parameter flattening -------------------------------------------------

def param_names(params: EncoderParams) -> list[str]:
    names = []
    for b in range(len(params.blocks)):
        names += [f"blocks.{b}.theta0", f"blocks.{b}.theta1", f"blocks.{b}.w_prime", f"blocks.{b}.w_dprime"]
    names += ["proj_weight", "proj_bias", "input_mean", "input_std"]
    return names


def params_to_dict(params: EncoderParams) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for b, blk in enumerate(params.blocks):
        out[f"blocks.{b}.theta0"] = blk.theta0
        out[f"blocks.{b}.theta1"] = blk.theta1
        out[f"blocks.{b}.w_prime"] = blk.w_prime
        out[f"blocks.{b}.w_dprime"] = blk.w_dprime
    out["proj_weight"] = params.proj_weight
    out["proj_bias"] = params.proj_bias
    out["input_mean"] = params.input_mean
    out["input_std"] = params.input_std
    return out


def dict_to_params(d: dict[str, np.ndarray]) -> EncoderParams:
    n_blocks = 0
    while f"blocks.{n_blocks}.theta0" in d:
        n_blocks += 1
    blocks = [
        BlockParams(
            theta0=d[f"blocks.{b}.theta0"],
            theta1=d[f"blocks.{b}.theta1"],
            w_prime=d[f"blocks.{b}.w_prime"],
            w_dprime=d[f"blocks.{b}.w_dprime"],
        )
        for b in range(n_blocks)
    ]
    return EncoderParams(
        blocks=blocks,
        proj_weight=d["proj_weight"],
        proj_bias=d["proj_bias"],
        input_mean=d["input_mean"],
        input_std=d["input_std"],
    )


def params_to_vector(params: EncoderParams) -> np.ndarray:
    d = params_to_dict(params)
    return np.concatenate([d[name].ravel() for name in param_names(params)])


def vector_to_params(vec: np.ndarray, template: EncoderParams) -> EncoderParams:
    d = params_to_dict(template)
    out: dict[str, np.ndarray] = {}
    pos = 0
    for name in param_names(template):
        shape = d[name].shape
        size = d[name].size
        out[name] = np.asarray(vec[pos : pos + size], dtype=np.float64).reshape(shape).copy()
        pos += size
    if pos != vec.size:
        raise DimensionError(f"vector has {vec.size} entries, parameters need {pos}")
    return dict_to_params(out)


# --- self-attention baseline ----------------------------------------------

def attention_map_from_embeddings(x: np.ndarray, embeds: np.ndarray) -> np.ndarray:
    """Row-softmax map of scaled dot products between x-modulated queries and keys."""
    x = np.asarray(x, dtype=np.float64)
    queries = x[:, None] * embeds
    logits = queries @ embeds.T / math.sqrt(embeds.shape[1])
    return softmax_rows(logits)


def attention_baseline_map(x: np.ndarray, embed_dim: int, seed: int) -> np.ndarray:
    """Connectivity-map stand-in from a minimal self-attention layer with seeded embeddings."""
    x = np.asarray(x, dtype=np.float64)
    embeds = Rng(seed, stream=0).normal((x.shape[0], embed_dim))
    return attention_map_from_embeddings(x, embeds)
