"""Command-line entry point.

Subcommands: gen-data, train, eval, export-conn, check. Exit codes are part
of the contract: 0 success, 2 configuration problem, 3 I/O or file-format
problem, 4 numerical abort, 5 check-suite failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from dataclasses import fields

import numpy as np

from . import evaluation, fixtures
from .data import SynthConfig, gen_synthetic, read_dataset, read_embedding_file, write_dataset
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    FormatError,
    InvariantError,
    NumericalError,
    QbrnError,
    RangeError,
)
from .hilbert import pair_connectivity_oracle
from .model import (
    AblationFlags,
    backward_batch,
    dict_to_params,
    forward_batch,
    init_params,
    params_to_vector,
    vector_to_params,
)
from .numerics import Rng, finite_diff_check
from .objective import loss_and_grad
from .qlayer import pair_connectivity
from .train import TrainConfig, load_checkpoint, save_checkpoint, train_loop, write_trace_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_CHECK_FAILED = 5

_BOOL_KEYS = ("phase_shifting", "voxel_controlling", "measurement_projection")
_INT_KEYS = (
    "epochs",
    "batch_size",
    "seed",
    "blocks",
    "voxels",
    "embed_dim",
    "latent_dim",
    "regions",
    "n_train",
    "n_test",
)
_FLOAT_KEYS = (
    "lr_max",
    "lr_min",
    "tau",
    "weight_decay",
    "beta1",
    "beta2",
    "eps_adam",
    "interaction_strength",
    "noise_std",
)


def parse_config_file(path) -> dict:
    """key=value lines with # comments; unknown keys are rejected."""
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in _BOOL_KEYS:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ConfigError(f"{path}:{lineno}: {key} must be a boolean, got {value!r}")
                out[key] = value.lower() in ("true", "1")
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def _effective(args, file_cfg: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


def _flags_from(args, file_cfg) -> AblationFlags:
    def resolve(key: str, off_flag: bool) -> bool:
        return False if off_flag else _effective(args, file_cfg, key, True)

    return AblationFlags(
        phase_shifting=resolve("phase_shifting", args.no_phase_shifting),
        voxel_controlling=resolve("voxel_controlling", args.no_voxel_controlling),
        measurement_projection=resolve("measurement_projection", args.no_measurement_projection),
    )


# --- subcommands -------------------------------------------------------------

def cmd_gen_data(args) -> int:
    file_cfg = parse_config_file(args.config) if args.config else {}
    defaults = SynthConfig()
    cfg = SynthConfig(
        **{
            f.name: _effective(args, file_cfg, f.name, getattr(defaults, f.name))
            for f in fields(SynthConfig)
            if f.name != "edges"
        }
    )
    cfg.validate()
    for key in (f.name for f in fields(SynthConfig) if f.name != "edges"):
        print(f"{key}={getattr(cfg, key)}")
    for split in ("train", "test"):
        ds = gen_synthetic(cfg, split=split)
        path = f"{args.out}.{split}.qbrn"
        write_dataset(ds, path)
        print(f"wrote {path} sha256={_sha256(path)}")
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = parse_config_file(args.config) if args.config else {}
    defaults = TrainConfig()
    config = TrainConfig(
        lr_max=_effective(args, file_cfg, "lr_max", defaults.lr_max),
        lr_min=_effective(args, file_cfg, "lr_min", defaults.lr_min),
        epochs=_effective(args, file_cfg, "epochs", defaults.epochs),
        batch_size=_effective(args, file_cfg, "batch_size", defaults.batch_size),
        tau=_effective(args, file_cfg, "tau", defaults.tau),
        weight_decay=_effective(args, file_cfg, "weight_decay", defaults.weight_decay),
        beta1=_effective(args, file_cfg, "beta1", defaults.beta1),
        beta2=_effective(args, file_cfg, "beta2", defaults.beta2),
        eps_adam=_effective(args, file_cfg, "eps_adam", defaults.eps_adam),
        seed=_effective(args, file_cfg, "seed", defaults.seed),
        blocks=_effective(args, file_cfg, "blocks", defaults.blocks),
        flags=_flags_from(args, file_cfg),
    )
    config.validate()
    dataset = read_dataset(args.data)
    started = time.time()

    def log(epoch, row):
        _, step, lr, loss = row
        print(f"epoch {epoch} step {step} lr {lr:.6g} loss {loss:.6g}", flush=True)

    params, trace = train_loop(dataset, config, threads=args.threads, log=log)
    save_checkpoint(params, config.echo(), args.out)
    print(f"wrote {args.out} sha256={_sha256(args.out)}")
    if args.trace:
        write_trace_csv(trace, args.trace)
        print(f"wrote {args.trace}")
    print(f"trained {config.epochs} epochs in {time.time() - started:.1f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.task != "retrieval":
        raise ConfigError(f"unknown eval task {args.task!r}")
    if args.pred or args.target:
        if not (args.pred and args.target):
            raise ConfigError("--pred and --target must be given together")
        pred = read_embedding_file(args.pred).astype(np.float64)
        target = read_embedding_file(args.target).astype(np.float64)
        pred /= np.linalg.norm(pred, axis=1, keepdims=True)
        target /= np.linalg.norm(target, axis=1, keepdims=True)
    else:
        if not (args.checkpoint and args.data):
            raise ConfigError("provide either --checkpoint with --data, or --pred with --target")
        params, _ = load_checkpoint(args.checkpoint)
        dataset = read_dataset(args.data)
        pred, _ = forward_batch(dataset.voxels.astype(np.float64), params, AblationFlags())
        target = dataset.embeddings.astype(np.float64)
        target /= np.linalg.norm(target, axis=1, keepdims=True)
    report = evaluation.retrieval_eval(
        pred, target, candidates=args.candidates, repeats=args.repeats, seed=args.seed
    )
    print(f"image top-1 {report.image_top1:.4f}")
    print(f"brain top-1 {report.brain_top1:.4f}")
    if args.out:
        evaluation.write_retrieval_csv(report, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_export_conn(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    cmap = evaluation.connectivity_map(params, args.source, pooling=args.region_pool)
    csv_path = f"{args.out}.csv"
    pgm_path = f"{args.out}.pgm"
    evaluation.write_influence_csv(cmap.influence, csv_path)
    evaluation.write_map_pgm(cmap.total_map, pgm_path)
    print(f"wrote {csv_path}")
    print(f"wrote {pgm_path}")
    return EXIT_OK


def _check_oracle(args) -> int:
    rng = Rng(args.seed, stream=0)
    worst = 0.0
    failures = []
    for _ in range(args.trials):
        x_j, x_k = rng.uniform(2)
        t0k, t1k, t0j, t1j = rng.uniform(4, high=2.0 * np.pi)
        w = rng.uniform(low=-3.0, high=3.0)
        closed = pair_connectivity(x_j, x_k, w, t0k - t1k)
        simulated = pair_connectivity_oracle(x_j, x_k, t0k, t1k, t0j, t1j, w)
        err = abs(closed - simulated)
        if err > worst:
            worst = err
        if err > 1e-10:
            failures.append((x_j, x_k, w, t0k - t1k, err))
    print(f"oracle check: {args.trials} trials, max |closed - simulated| = {worst:.3e}")
    for case in failures[:20]:
        print(f"  FAIL x_j={case[0]} x_k={case[1]} w={case[2]} dtheta={case[3]} err={case[4]:.3e}")
    return EXIT_OK if not failures else EXIT_CHECK_FAILED


def _check_grad(args) -> int:
    rng = Rng(args.seed, stream=0)
    params = init_params(args.voxels, args.dim, args.blocks, args.seed)
    # Coupling scale keeps block outputs away from the clamp boundary, where
    # the finite-difference window would straddle a kink.
    scale = 0.15 / np.sqrt(args.voxels)
    for blk in params.blocks:
        blk.w_prime += rng.normal((args.voxels, args.voxels)) * scale
        blk.w_dprime += rng.normal((args.voxels, args.voxels)) * scale
        blk.theta0 += rng.normal(args.voxels) * 0.5
        blk.theta1 += rng.normal(args.voxels) * 0.5
    raw = rng.uniform((4, args.voxels), low=-2.0, high=2.0)
    upstream = rng.normal((4, args.dim))
    flags = AblationFlags()

    def scalar(vec):
        p = vector_to_params(vec, params)
        emb, _ = forward_batch(raw, p, flags)
        return float(np.sum(upstream * emb))

    _, cache = forward_batch(raw, params, flags)
    grads = backward_batch(params, flags, cache, upstream)
    grad_vec = params_to_vector(dict_to_params(grads))
    report = finite_diff_check(scalar, grad_vec, params_to_vector(params), step=1e-6, tolerance=1e-4)
    print(f"encoder gradients: {report}")

    n, dim = 8, args.dim
    p0 = rng.normal((n, dim))
    p0 /= np.linalg.norm(p0, axis=1, keepdims=True)
    t0 = rng.normal((n, dim))
    t0 /= np.linalg.norm(t0, axis=1, keepdims=True)
    _, grad_p = loss_and_grad(p0, t0, 0.1)

    def loss_scalar(vec):
        return loss_and_grad(vec.reshape(n, dim), t0, 0.1)[0]

    loss_report = finite_diff_check(
        loss_scalar, grad_p.ravel(), p0.ravel(), step=1e-6, tolerance=1e-4
    )
    print(f"loss gradients: {loss_report}")
    return EXIT_OK if (report.passed and loss_report.passed) else EXIT_CHECK_FAILED


def _check_fixtures(args) -> int:
    results = fixtures.verify_fixtures()
    ok = True
    for name, status in results:
        print(f"{name}: {status}")
        ok = ok and status == "ok"
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_check(args) -> int:
    if args.suite == "oracle":
        return _check_oracle(args)
    if args.suite == "grad":
        return _check_grad(args)
    if args.suite == "fixtures":
        return _check_fixtures(args)
    raise ConfigError(f"unknown check suite {args.suite!r}")


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbrn",
        description="Voxel-connectivity encoder: data generation, training, evaluation, checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", help="generate a synthetic train/test dataset pair", formatter_class=fmt)
    p.add_argument("--out", required=True, help="output path prefix (writes <out>.train.qbrn and <out>.test.qbrn)")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--voxels", type=int, default=None, help="voxel count C (default 128)")
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=None, help="embedding width D (default 64)")
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None, help="latent factor count (default 16)")
    p.add_argument("--regions", type=int, default=None, help="region count, must divide voxels (default 8)")
    p.add_argument("--interaction-strength", dest="interaction_strength", type=float, default=None, help="planted interaction strength (default 1.0)")
    p.add_argument("--noise-std", dest="noise_std", type=float, default=None, help="voxel noise level (default 0.1)")
    p.add_argument("--n-train", dest="n_train", type=int, default=None, help="training samples (default 2000)")
    p.add_argument("--n-test", dest="n_test", type=int, default=None, help="test samples (default 200)")
    p.add_argument("--seed", type=int, default=None, help="generator seed (default 0)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an encoder on a QBRN dataset", formatter_class=fmt)
    p.add_argument("--data", required=True, help="training dataset (.qbrn)")
    p.add_argument("--out", required=True, help="checkpoint output path (.qbck)")
    p.add_argument("--trace", default=None, help="loss trace CSV output path")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (default 240)")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None, help="mini-batch size (default 32)")
    p.add_argument("--lr-max", dest="lr_max", type=float, default=None, help="peak learning rate (default 3e-4)")
    p.add_argument("--lr-min", dest="lr_min", type=float, default=None, help="final learning rate (default 0)")
    p.add_argument("--tau", type=float, default=None, help="contrastive temperature (default 4e-3)")
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None, help="decoupled weight decay (default 1e-2)")
    p.add_argument("--seed", type=int, default=None, help="training seed (default 0)")
    p.add_argument("--blocks", type=int, default=None, help="connectivity blocks (default 4)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for batch chunks")
    p.add_argument("--no-phase-shifting", action="store_true", help="freeze the phase gap at pi/2")
    p.add_argument("--no-voxel-controlling", action="store_true", help="drop the x*(W'x) term")
    p.add_argument("--no-measurement-projection", action="store_true", help="drop the x*(W''g) term")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the retrieval protocol", formatter_class=fmt)
    p.add_argument("task", choices=["retrieval"], help="evaluation task")
    p.add_argument("--checkpoint", default=None, help="trained checkpoint (.qbck)")
    p.add_argument("--data", default=None, help="evaluation dataset (.qbrn)")
    p.add_argument("--pred", default=None, help="predicted embeddings (.qemb), bypasses the encoder")
    p.add_argument("--target", default=None, help="target embeddings (.qemb)")
    p.add_argument("--candidates", type=int, default=300, help="candidate pool size per query")
    p.add_argument("--repeats", type=int, default=30, help="protocol repetitions")
    p.add_argument("--seed", type=int, default=0, help="distractor-draw seed")
    p.add_argument("--out", default=None, help="report CSV output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-conn", help="export a connectivity map", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint (.qbck)")
    p.add_argument("--source", type=int, required=True, help="source voxel (or region with --region-pool)")
    p.add_argument("--region-pool", dest="region_pool", type=int, default=None, help="pool into this many regions")
    p.add_argument("--out", required=True, help="output path prefix (writes <out>.csv and <out>.pgm)")
    p.set_defaults(func=cmd_export_conn)

    p = sub.add_parser("check", help="run verification suites", formatter_class=fmt)
    p.add_argument("suite", choices=["oracle", "grad", "fixtures"], help="which suite to run")
    p.add_argument("--trials", type=int, default=10000, help="random tuples for the oracle suite")
    p.add_argument("--seed", type=int, default=1, help="suite seed")
    p.add_argument("--voxels", type=int, default=16, help="voxel count for the gradient suite")
    p.add_argument("--dim", type=int, default=8, help="embedding width for the gradient suite")
    p.add_argument("--blocks", type=int, default=2, help="blocks for the gradient suite")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, InvariantError, RangeError, DomainError, DimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except QbrnError as e:  # pragma: no cover - safety net
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
