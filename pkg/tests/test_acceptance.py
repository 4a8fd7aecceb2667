"""Acceptance suite: every exit criterion at its stated tolerance.

Each criterion is one test that prints a single [PASS]/[FAIL] line (run
with ``pytest tests/test_acceptance.py -v -s`` to see them live). Trained
benchmark runs are cached at module scope because three criteria share
them.

The retrieval protocol here uses a 200-candidate pool: the benchmark test
split has 200 samples, and the protocol's distractors are drawn without
replacement from the other rows, so a 300-candidate pool is unsatisfiable
by construction (chance level 0.5% instead of 0.33%).
"""

import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from qbrn.cli import main as cli_main
from qbrn.data import SynthConfig, gen_synthetic
from qbrn.evaluation import edge_recovery_score, retrieval_eval
from qbrn.hilbert import pair_connectivity_oracle
from qbrn.model import (
    AblationFlags,
    fit_input_stats,
    forward_batch,
    init_params,
    logistic,
)
from qbrn.numerics import Rng
from qbrn.objective import EmbeddingBatch, contrastive_loss, loss_and_grad
from qbrn.qlayer import VOXEL_EPS, aggregate_forward, constrain_to_free, layer_forward, pair_connectivity
from qbrn.train import EPOCH_STREAM_BASE, TrainConfig, save_checkpoint, train_loop, write_trace_csv

BENCH_SEEDS = (1, 2, 3)
BENCH_EPOCHS = 100
EVAL_CANDIDATES = 200  # test split size bounds the distractor pool
EVAL_REPEATS = 30

ABLATIONS = {
    "all-on": AblationFlags(),
    "no-phase": AblationFlags(phase_shifting=False),
    "no-control": AblationFlags(voxel_controlling=False),
    "no-projection": AblationFlags(measurement_projection=False),
}


def report(name: str, passed: bool, detail: str):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}", flush=True)
    assert passed, f"{name}: {detail}"


@dataclass
class BenchRun:
    params: object
    losses: list[float]
    image_top1: float
    brain_top1: float
    edge_score: float
    edge_degenerate: bool
    train_seconds: float
    eval_seconds: float


@pytest.fixture(scope="module")
def bench():
    cache: dict[tuple[int, str], BenchRun] = {}

    def get(seed: int, config: str = "all-on") -> BenchRun:
        key = (seed, config)
        if key not in cache:
            flags = ABLATIONS[config]
            cfg = SynthConfig(seed=seed)
            train_ds = gen_synthetic(cfg, "train")
            test_ds = gen_synthetic(cfg, "test")
            t0 = time.perf_counter()
            params, trace = train_loop(
                train_ds,
                TrainConfig(epochs=BENCH_EPOCHS, seed=seed, flags=flags),
                threads=1,
            )
            train_seconds = time.perf_counter() - t0
            t1 = time.perf_counter()
            pred, _ = forward_batch(test_ds.voxels.astype(np.float64), params, flags)
            target = test_ds.embeddings.astype(np.float64)
            target /= np.linalg.norm(target, axis=1, keepdims=True)
            rep = retrieval_eval(
                pred, target, candidates=EVAL_CANDIDATES, repeats=EVAL_REPEATS, seed=1
            )
            eval_seconds = time.perf_counter() - t1
            score = edge_recovery_score(params, train_ds.edges, train_ds.regions)
            cache[key] = BenchRun(
                params=params,
                losses=[row[3] for row in trace],
                image_top1=rep.image_top1,
                brain_top1=rep.brain_top1,
                edge_score=score.value,
                edge_degenerate=score.degenerate,
                train_seconds=train_seconds,
                eval_seconds=eval_seconds,
            )
        return cache[key]

    return get


def test_oracle_equivalence():
    rng = Rng(101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(10_000):
        x_j, x_k = rng.uniform(2)
        t0k, t1k, t0j, t1j = rng.uniform(4, high=2 * math.pi)
        w = rng.uniform(low=-3, high=3)
        closed = pair_connectivity(x_j, x_k, w, t0k - t1k)
        simulated = pair_connectivity_oracle(x_j, x_k, t0k, t1k, t0j, t1j, w)
        worst = max(worst, abs(closed - simulated))
    elapsed = time.perf_counter() - t0
    report(
        "oracle equivalence",
        worst <= 1e-10 and elapsed < 5.0,
        f"max |closed - simulated| = {worst:.3e} over 10^4 tuples in {elapsed:.2f}s",
    )


def test_aggregation_equivalence():
    rng = Rng(102)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 65))
        c = rng.uniform((n, n))
        c /= c.sum(axis=1, keepdims=True)
        from qbrn.qlayer import ConstrainedParams

        p = ConstrainedParams(
            c=c,
            w=rng.uniform((n, n), low=-3, high=3),
            theta0=rng.uniform(n, high=2 * math.pi),
            theta1=rng.uniform(n, high=2 * math.pi),
        )
        x = rng.uniform(n, low=0.05, high=0.95)
        diff = np.max(np.abs(aggregate_forward(x, p) - layer_forward(x, constrain_to_free(p))))
        worst = max(worst, float(diff))
    report(
        "aggregation equivalence",
        worst <= 1e-12,
        f"max |loop - vectorized| = {worst:.3e} over 100 configurations (C <= 64)",
    )


def test_gradient_suite(capsys):
    t0 = time.perf_counter()
    rc = cli_main(["check", "grad", "--voxels", "16", "--dim", "8", "--blocks", "2", "--seed", "1"])
    elapsed = time.perf_counter() - t0
    with capsys.disabled():
        report(
            "gradient suite",
            rc == 0 and elapsed < 30.0,
            f"encoder (C=16, D=8, B=2) and loss (N=8) central differences at tol 1e-4 in {elapsed:.1f}s",
        )


def test_identity_at_init():
    rng = Rng(103)
    params = init_params(24, 8, blocks=4, seed=11)
    raws = rng.normal((6, 24)) * 2.5
    params.input_mean, params.input_std = fit_input_stats(raws)
    _, cache = forward_batch(raws, params, AblationFlags())
    z = (raws - params.input_mean) / params.input_std
    expected_voxels = np.clip(logistic(z), VOXEL_EPS, 1 - VOXEL_EPS)
    bit_exact = np.array_equal(cache.x_final, expected_voxels)

    cfg = SynthConfig(seed=1)
    train_ds = gen_synthetic(cfg, "train")
    config = TrainConfig(epochs=1, seed=1)
    _, trace = train_loop(train_ds, config)
    voxels = train_ds.voxels.astype(np.float64)
    targets = train_ds.embeddings.astype(np.float64)
    targets /= np.linalg.norm(targets, axis=1, keepdims=True)
    ref = init_params(cfg.voxels, cfg.embed_dim, config.blocks, config.seed)
    ref.input_mean, ref.input_std = fit_input_stats(voxels)
    idx = Rng(config.seed, stream=EPOCH_STREAM_BASE).permutation(voxels.shape[0])[: config.batch_size]
    x = np.clip(logistic((voxels[idx] - ref.input_mean) / ref.input_std), VOXEL_EPS, 1 - VOXEL_EPS)
    p_raw = x @ ref.proj_weight.T + ref.proj_bias
    p = p_raw / np.linalg.norm(p_raw, axis=1, keepdims=True)
    block_free_loss, _ = loss_and_grad(p, targets[idx], config.tau)
    loss_gap = abs(trace[0][3] - block_free_loss)
    report(
        "identity at initialization",
        bit_exact and loss_gap <= 1e-12,
        f"pass-through bit-exact = {bit_exact}, first-batch loss gap = {loss_gap:.2e}",
    )


def test_loss_units():
    p2 = np.tile(np.array([1.0, 0.0]), (2, 1))
    t2 = np.tile(np.array([0.0, 1.0]), (2, 1))
    uniform_loss, _ = contrastive_loss(EmbeddingBatch(p=p2, t=t2, tau=0.04))
    gap = abs(uniform_loss - 0.6931471805599453)

    aligned = np.eye(8)
    sharp_loss, _ = contrastive_loss(EmbeddingBatch(p=aligned, t=aligned.copy(), tau=4e-3))
    report(
        "loss units",
        gap <= 1e-12 and sharp_loss <= 1e-6,
        f"equal-logit N=2 gap from ln 2 = {gap:.2e}, aligned orthonormal loss = {sharp_loss:.2e}",
    )


def test_end_to_end_retrieval(bench, capsys):
    run = bench(1, "all-on")
    elapsed = run.train_seconds + run.eval_seconds
    tenth = max(1, len(run.losses) // 10)
    trend_ok = np.mean(run.losses[-tenth:]) < np.mean(run.losses[:tenth])
    with capsys.disabled():
        report(
            "end-to-end synthetic retrieval",
            run.image_top1 >= 0.5 and run.brain_top1 >= 0.5 and elapsed <= 900.0 and trend_ok,
            f"image {run.image_top1:.3f}, brain {run.brain_top1:.3f} "
            f"({EVAL_CANDIDATES} candidates, {EVAL_REPEATS} repeats, chance {1 / EVAL_CANDIDATES:.2%}), "
            f"{elapsed:.0f}s single-threaded, loss trend decreasing = {trend_ok}",
        )


def test_connectivity_recovery(bench, capsys):
    scores = {seed: bench(seed, "all-on").edge_score for seed in BENCH_SEEDS}
    ok = all(s >= 1.5 for s in scores.values())
    detail = ", ".join(f"seed {s}: {v:.3f}" for s, v in scores.items())
    with capsys.disabled():
        report("connectivity recovery (>= 1.5, 3 of 3 seeds)", ok, detail)


def test_determinism(tmp_path):
    cfg = SynthConfig(voxels=32, embed_dim=16, latent_dim=8, regions=4, n_train=300, n_test=40, seed=5)
    train_ds = gen_synthetic(cfg, "train")

    def run(threads):
        config = TrainConfig(epochs=10, batch_size=32, blocks=2, seed=5)
        params, trace = train_loop(train_ds, config, threads=threads)
        ckpt = tmp_path / f"run_{threads}_{time.monotonic_ns()}.qbck"
        trace_csv = tmp_path / (ckpt.name + ".csv")
        save_checkpoint(params, config.echo(), ckpt)
        write_trace_csv(trace, trace_csv)
        return ckpt.read_bytes(), trace_csv.read_bytes()

    first = run(1)
    second = run(1)
    threaded = run(4)
    identical_repeat = first == second
    identical_threads = first == threaded
    report(
        "determinism",
        identical_repeat and identical_threads,
        f"repeat run byte-identical = {identical_repeat}, threads 1 vs 4 byte-identical = {identical_threads}",
    )


def test_ablation_ordering(bench, capsys):
    means = {}
    for name in ABLATIONS:
        image = float(np.mean([bench(seed, name).image_top1 for seed in BENCH_SEEDS]))
        brain = float(np.mean([bench(seed, name).brain_top1 for seed in BENCH_SEEDS]))
        means[name] = (image, brain)
    with capsys.disabled():
        print("\nablation report (top-1 means over seeds 1, 2, 3):", flush=True)
        for name, (image, brain) in means.items():
            print(f"  {name:>14}: image {image:.4f}  brain {brain:.4f}", flush=True)
        base_image, base_brain = means["all-on"]
        failures = [
            name
            for name in ("no-phase", "no-control", "no-projection")
            if means[name][0] > base_image or means[name][1] > base_brain
        ]
        report(
            "ablation ordering",
            not failures,
            "all-modules-on >= every single-module-off in both directions"
            if not failures
            else f"ordering violated by: {', '.join(failures)}",
        )
