"""Deterministic numerical primitives: seeded RNG streams, reference linear
algebra, and the central-difference gradient checker used by every other
module's tests.

All floating-point work is 64-bit. ``matvec`` accumulates in ascending
column order so reference results are bit-identical across runs and
platforms; the vectorized training paths in :mod:`qbrn.model` are checked
against it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, DomainError, NumericalError

_U64 = (1 << 64) - 1


class Rng:
    """Counter-based random stream.

    A value is fully determined by ``(seed, stream, draw index)``: two
    instances built with the same key produce identical sequences, and
    distinct streams are statistically independent, so per-sample /
    per-epoch streams can be drawn in any order (or in parallel) without
    changing results.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed & _U64, self.stream & _U64], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size=size)

    def normal(self, size=None):
        return self._gen.standard_normal(size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, pool, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(pool, size=size, replace=replace)


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with ascending-index accumulation.

    Reference implementation: slow but with a pinned summation order.
    Raises DimensionError on shape mismatch.
    """
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1:
        raise DimensionError(f"matvec expects a matrix and a vector, got {m.shape} and {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: {m.shape[1]} columns vs vector of length {v.shape[0]}")
    vv = v.tolist()
    out = np.empty(m.shape[0], dtype=np.float64)
    for i in range(m.shape[0]):
        row = m[i].tolist()
        acc = 0.0
        for k in range(len(vv)):
            acc += row[k] * vv[k]
        out[i] = acc
    return out


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction; each row sums to 1."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
        squeeze = True
    else:
        squeeze = False
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if squeeze else out


@dataclass
class FiniteDiffReport:
    """Per-coordinate comparison of an analytic gradient with central differences."""

    rel_errors: np.ndarray
    max_rel_error: float
    worst_index: int
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"finite-diff {status}: max rel error {self.max_rel_error:.3e} "
            f"at coordinate {self.worst_index}"
        )


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    grad: np.ndarray,
    at: np.ndarray,
    step: float = 1e-6,
    tolerance: float = 1e-4,
) -> FiniteDiffReport:
    """Check ``grad`` against (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    Raises NumericalError if ``f`` returns a non-finite value.
    """
    at = np.asarray(at, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != at.shape:
        raise DimensionError(f"gradient shape {grad.shape} vs point shape {at.shape}")
    if step <= 0:
        raise DomainError(f"finite difference step must be positive, got {step}")
    rel = np.empty(at.shape[0], dtype=np.float64)
    for i in range(at.shape[0]):
        xp = at.copy()
        xm = at.copy()
        xp[i] += step
        xm[i] -= step
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"non-finite function value while perturbing coordinate {i}")
        fd = (fp - fm) / (2.0 * step)
        denom = max(abs(fd), abs(grad[i]), 1e-8)
        rel[i] = abs(fd - grad[i]) / denom
    worst = int(np.argmax(rel))
    max_err = float(rel[worst])
    return FiniteDiffReport(
        rel_errors=rel,
        max_rel_error=max_err,
        worst_index=worst,
        passed=bool(max_err <= tolerance),
    )
