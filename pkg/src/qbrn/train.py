"""Training loop: AdamW with decoupled weight decay, a cosine learning-rate
schedule, seeded per-epoch shuffling, per-step loss tracing, and the QBCK
checkpoint container.

Determinism contract: given identical (config, dataset) the loop produces
bit-identical parameter arrays, traces, and checkpoint bytes, independent
of the thread count. Batches are split into fixed-size chunks whose
gradients are reduced in ascending chunk order; ``threads`` only controls
how many chunks are in flight at once.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, NumericalError, RangeError
from .model import (
    EPOCH_STREAM_BASE,
    AblationFlags,
    EncoderParams,
    backward_batch,
    dict_to_params,
    fit_input_stats,
    forward_batch,
    init_params,
    params_to_dict,
)
from .numerics import Rng
from .objective import loss_and_grad

CHECKPOINT_MAGIC = b"QBCK"
CHECKPOINT_VERSION = 1

# Parameters updated by the optimizer; input statistics stay frozen.
TRAINABLE_SUFFIXES = ("theta0", "theta1", "w_prime", "w_dprime", "proj_weight", "proj_bias")
# Decoupled weight decay applies to coupling and projection matrices only:
# decaying phases toward 0 would silently re-activate the cosine term.
DECAY_SUFFIXES = ("w_prime", "w_dprime", "proj_weight")

# Samples per gradient chunk; fixed so results do not depend on thread count.
GRAD_CHUNK = 8


@dataclass
class TrainConfig:
    lr_max: float = 3e-4
    lr_min: float = 0.0
    epochs: int = 240
    batch_size: int = 32
    tau: float = 4e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    blocks: int = 4
    flags: AblationFlags = field(default_factory=AblationFlags)

    def validate(self):
        if not (self.lr_max >= self.lr_min >= 0.0):
            raise ConfigError(f"need lr_max >= lr_min >= 0, got {self.lr_max}, {self.lr_min}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.blocks < 1:
            raise ConfigError(f"blocks must be >= 1, got {self.blocks}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def echo(self) -> str:
        """key=value lines describing this configuration (stored in checkpoints)."""
        lines = [
            f"lr_max={self.lr_max!r}",
            f"lr_min={self.lr_min!r}",
            f"epochs={self.epochs}",
            f"batch_size={self.batch_size}",
            f"tau={self.tau!r}",
            f"weight_decay={self.weight_decay!r}",
            f"beta1={self.beta1!r}",
            f"beta2={self.beta2!r}",
            f"eps_adam={self.eps_adam!r}",
            f"seed={self.seed}",
            f"blocks={self.blocks}",
            f"phase_shifting={self.flags.phase_shifting}",
            f"voxel_controlling={self.flags.voxel_controlling}",
            f"measurement_projection={self.flags.measurement_projection}",
        ]
        return "\n".join(lines) + "\n"


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """lr_min + (lr_max - lr_min) (1 + cos(pi step / total)) / 2."""
    if total_steps < 1:
        raise RangeError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise RangeError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * step / total_steps))


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: EncoderParams) -> "OptimizerState":
        d = params_to_dict(params)
        trainable = {k: v for k, v in d.items() if k.endswith(TRAINABLE_SUFFIXES)}
        return cls(
            m={k: np.zeros_like(v) for k, v in trainable.items()},
            v={k: np.zeros_like(v) for k, v in trainable.items()},
        )


def adamw_step(
    params: EncoderParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    config: TrainConfig,
) -> tuple[EncoderParams, OptimizerState]:
    """One bias-corrected AdamW update, decoupled decay applied first, in place."""
    d = params_to_dict(params)
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for name in state.m:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name}")
        theta = d[name]
        if name.endswith(DECAY_SUFFIXES) and config.weight_decay != 0.0:
            theta -= lr * config.weight_decay * theta
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps_adam)
    return params, state


def _chunk_ranges(n: int, chunk: int = GRAD_CHUNK) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def _batch_loss_and_grads(
    voxels: np.ndarray,
    targets: np.ndarray,
    params: EncoderParams,
    config: TrainConfig,
    pool: ThreadPoolExecutor | None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Forward + backward over one mini-batch, chunked for deterministic reduction."""
    ranges = _chunk_ranges(voxels.shape[0])
    caches = [None] * len(ranges)

    def run_forward(i):
        lo, hi = ranges[i]
        caches[i] = forward_batch(voxels[lo:hi], params, config.flags)

    if pool is None or len(ranges) == 1:
        for i in range(len(ranges)):
            run_forward(i)
    else:
        list(pool.map(run_forward, range(len(ranges))))

    preds = np.concatenate([caches[i][0] for i in range(len(ranges))], axis=0)
    loss, grad_p = loss_and_grad(preds, targets, config.tau)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss value {loss!r}")

    grads_per_chunk = [None] * len(ranges)

    def run_backward(i):
        lo, hi = ranges[i]
        grads_per_chunk[i] = backward_batch(params, config.flags, caches[i][1], grad_p[lo:hi])

    if pool is None or len(ranges) == 1:
        for i in range(len(ranges)):
            run_backward(i)
    else:
        list(pool.map(run_backward, range(len(ranges))))

    total = grads_per_chunk[0]
    for g in grads_per_chunk[1:]:
        for name in total:
            total[name] += g[name]
    return loss, total


def train_loop(
    dataset,
    config: TrainConfig,
    threads: int = 1,
    log=None,
) -> tuple[EncoderParams, list[tuple[int, int, float, float]]]:
    """Train an encoder on a dataset; returns (params, trace).

    Trace rows are (epoch, global step, lr, loss). ``dataset`` provides
    float32 ``voxels`` (N, C) and unit-norm ``embeddings`` (N, D); compute
    happens in float64 and targets are re-normalized after the cast.
    """
    config.validate()
    voxels = np.asarray(dataset.voxels, dtype=np.float64)
    targets = np.asarray(dataset.embeddings, dtype=np.float64)
    if voxels.shape[0] == 0:
        raise ConfigError("dataset is empty")
    targets = targets / np.linalg.norm(targets, axis=1, keepdims=True)
    n, c = voxels.shape
    d = targets.shape[1]

    params = init_params(c, d, config.blocks, config.seed)
    params.input_mean, params.input_std = fit_input_stats(voxels) if n >= 2 else (
        np.zeros(c),
        np.ones(c),
    )
    state = OptimizerState.for_params(params)

    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * steps_per_epoch
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    trace: list[tuple[int, int, float, float]] = []
    try:
        global_step = 0
        for epoch in range(config.epochs):
            order = Rng(config.seed, stream=EPOCH_STREAM_BASE + epoch).permutation(n)
            for b in range(steps_per_epoch):
                idx = order[b * config.batch_size : (b + 1) * config.batch_size]
                lr = cosine_lr(global_step, total_steps, config.lr_max, config.lr_min)
                loss, grads = _batch_loss_and_grads(
                    voxels[idx], targets[idx], params, config, pool
                )
                params, state = adamw_step(params, grads, state, lr, config)
                trace.append((epoch, global_step, float(lr), float(loss)))
                global_step += 1
            if log is not None:
                log(epoch, trace[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    return params, trace


def write_trace_csv(trace, path):
    with open(path, "w") as f:
        f.write("epoch,step,lr,loss\n")
        for epoch, step, lr, loss in trace:
            f.write(f"{epoch},{step},{lr:.17g},{loss:.17g}\n")


# --- QBCK checkpoint container ---------------------------------------------

def save_checkpoint(params: EncoderParams, config_echo: str, path):
    """Named float64 tensor records plus the config echo, little-endian."""
    d = params_to_dict(params)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(d)))
        for name, arr in d.items():
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())
        echo = config_echo.encode("utf-8")
        f.write(struct.pack("<I", len(echo)))
        f.write(echo)


def load_checkpoint(path) -> tuple[EncoderParams, str]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}", offset=0)
    pos = 4

    def take(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=pos)
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    version, n_records = struct.unpack("<II", take(8, "header"))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    d: dict[str, np.ndarray] = {}
    for _ in range(n_records):
        (name_len,) = struct.unpack("<I", take(4, "record name length"))
        name = take(name_len, "record name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "record rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "record dims"))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(8 * count, f"record {name}"), dtype="<f8")
        d[name] = data.reshape(dims).copy()
    (echo_len,) = struct.unpack("<I", take(4, "config echo length"))
    echo = take(echo_len, "config echo").decode("utf-8")
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after checkpoint payload", offset=pos)
    return dict_to_params(d), echo
