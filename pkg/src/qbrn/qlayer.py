"""Trainable voxel-connectivity layer.

Three routes compute the same quantity at increasing levels of
vectorization, and the tests hold them together:

* ``pair_connectivity``: scalar closed form for one (target, source) pair,
  equal to the two-qubit simulation in :mod:`qbrn.hilbert` to 1e-10.
* ``aggregate_forward``: explicit double loop over simplex-weighted pairs
  (reference implementation, constrained parameterization).
* ``layer_forward`` / ``layer_backward``: the free-parameter vector form
  actually trained, with exact analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InvariantError
from .numerics import matvec

# Voxel values are kept this far inside (0, 1) so sqrt((1-x)x) has a finite
# derivative everywhere.
VOXEL_EPS = 1e-6

SIMPLEX_TOL = 1e-12


@dataclass
class BlockParams:
    """Free learnables of one connectivity block."""

    theta0: np.ndarray  # (C,) phases on the inactive level
    theta1: np.ndarray  # (C,) phases on the active level
    w_prime: np.ndarray  # (C, C) multiplicative coupling
    w_dprime: np.ndarray  # (C, C) phase-term coupling

    @classmethod
    def identity_init(cls, voxels: int) -> "BlockParams":
        """Zero couplings and a pi/2 phase gap: the block starts as the identity."""
        return cls(
            theta0=np.zeros(voxels),
            theta1=np.full(voxels, math.pi / 2.0),
            w_prime=np.zeros((voxels, voxels)),
            w_dprime=np.zeros((voxels, voxels)),
        )

    @property
    def voxels(self) -> int:
        return self.theta0.shape[0]

    def copy(self) -> "BlockParams":
        return BlockParams(
            theta0=self.theta0.copy(),
            theta1=self.theta1.copy(),
            w_prime=self.w_prime.copy(),
            w_dprime=self.w_dprime.copy(),
        )


@dataclass
class ConstrainedParams:
    """Simplex-weighted parameterization used by the reference aggregation.

    Each row of ``c`` is a convex combination over source voxels; ``w`` are
    the raw pairwise weights before folding into the free matrices.
    """

    c: np.ndarray  # (C, C), rows on the probability simplex
    w: np.ndarray  # (C, C)
    theta0: np.ndarray  # (C,)
    theta1: np.ndarray  # (C,)

    def validate(self):
        if np.any(self.c < 0):
            raise InvariantError("simplex rows must be nonnegative")
        sums = self.c.sum(axis=1)
        bad = np.abs(sums - 1.0) > SIMPLEX_TOL
        if np.any(bad):
            j = int(np.argmax(np.abs(sums - 1.0)))
            raise InvariantError(f"row {j} of c sums to {sums[j]!r}, expected 1")


def _check_unit_interval(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


def pair_connectivity(x_j: float, x_k: float, w: float, dtheta_k: float) -> float:
    """Connectivity of source voxel x_k onto target voxel x_j.

    Exactly the modulus-squared projection computed by
    ``hilbert.pair_connectivity_oracle``; see docs/derivation.md.
    """
    _check_unit_interval("x_j", x_j)
    _check_unit_interval("x_k", x_k)
    # closed form: x_j + x_j*x_k*(w*w - 1.0) + 2.0*w*x_j*sqrt((1.0 - x_k)*x_k)*cos(dtheta_k)
    a_k = math.sqrt((1.0 - x_k) * x_k)
    return x_j + x_j * x_k * (w * w - 1.0) + 2.0 * w * x_j * a_k * math.cos(dtheta_k)


def aggregate_forward(x: np.ndarray, p: ConstrainedParams) -> np.ndarray:
    """Reference aggregation: out_j = sum_k c_jk * pair(x_j, x_k).

    Explicit double loop, kept deliberately naive; tests pin the vectorized
    layer against it through ``constrain_to_free``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if p.c.shape != (n, n) or p.w.shape != (n, n):
        raise DimensionError(f"parameter shapes {p.c.shape}/{p.w.shape} vs {n} voxels")
    p.validate()
    dtheta = p.theta0 - p.theta1
    out = np.zeros(n)
    for j in range(n):
        acc = 0.0
        for k in range(n):
            acc += p.c[j, k] * pair_connectivity(x[j], x[k], p.w[j, k], dtheta[k])
        out[j] = acc
    return out


def constrain_to_free(p: ConstrainedParams) -> BlockParams:
    """Fold the simplex weighting into the free matrices.

    w_prime = c * (w^2 - 1), w_dprime = 2 c w; phases carry over unchanged.
    """
    p.validate()
    return BlockParams(
        theta0=p.theta0.copy(),
        theta1=p.theta1.copy(),
        w_prime=p.c * (p.w**2 - 1.0),
        w_dprime=2.0 * p.c * p.w,
    )


def layer_forward(x: np.ndarray, p: BlockParams) -> np.ndarray:
    """f(x) = x + x*(W'x) + x*(W''(a * cos(theta0 - theta1))), a = sqrt((1-x)x)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if p.theta0.shape != (n,) or p.w_prime.shape != (n, n) or p.w_dprime.shape != (n, n):
        raise DimensionError(f"block shaped for {p.voxels} voxels, input has {n}")
    a = np.sqrt((1.0 - x) * x)
    g = a * np.cos(p.theta0 - p.theta1)
    return x + x * matvec(p.w_prime, x) + x * matvec(p.w_dprime, g)


def layer_backward(
    x: np.ndarray, p: BlockParams, upstream: np.ndarray
) -> tuple[np.ndarray, BlockParams]:
    """Exact gradients of sum(upstream * layer_forward(x, p)).

    Returns (grad_x, grads) with grads packed in a BlockParams of the same
    shapes. Includes the dependence of a = sqrt((1-x)x) on x, which is why
    x must be strictly inside (0, 1).
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DomainError("layer_backward requires x strictly inside (0, 1)")
    a = np.sqrt((1.0 - x) * x)
    dtheta = p.theta0 - p.theta1
    cosd = np.cos(dtheta)
    sind = np.sin(dtheta)
    g = a * cosd

    wx = matvec(p.w_prime, x)
    wg = matvec(p.w_dprime, g)
    ux = upstream * x
    # s_k = d loss / d g_k, routed back through W''
    s = matvec(p.w_dprime.T, ux)

    grad_x = (
        upstream * (1.0 + wx + wg)
        + matvec(p.w_prime.T, ux)
        + s * cosd * (1.0 - 2.0 * x) / (2.0 * a)
    )
    grads = BlockParams(
        theta0=-s * a * sind,
        theta1=s * a * sind,
        w_prime=np.outer(ux, x),
        w_dprime=np.outer(ux, g),
    )
    return grad_x, grads
