"""Exact one- and two-qubit state arithmetic.

This module is the brute-force oracle for the trainable connectivity layer:
it encodes a voxel value into qubit amplitudes, entangles a control/target
pair through a block-diagonal controlled operator, and projects the result
onto a learnable (unnormalized) basis vector. The closed-form layer in
:mod:`qbrn.qlayer` must agree with these routines to 1e-10 or better.

Basis convention: two-qubit amplitudes are ordered |00>, |01>, |10>, |11>
with the FIRST bit the control voxel k and the SECOND the target voxel j,
i.e. amps[2*k_bit + j_bit]. Under this ordering the controlled operator is
literally block diagonal: the identity on the control-0 half, U on the
control-1 half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class QubitState:
    """Single-qubit state with amplitudes on |0> and |1>."""

    amp0: complex
    amp1: complex

    def norm_sq(self) -> float:
        return abs(self.amp0) ** 2 + abs(self.amp1) ** 2

    def as_vector(self) -> np.ndarray:
        return np.array([self.amp0, self.amp1], dtype=np.complex128)


@dataclass(frozen=True)
class TwoQubitState:
    """Two-qubit state; amps ordered |00>, |01>, |10>, |11> (control bit first)."""

    amps: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=np.complex128)
        if a.shape != (4,):
            raise DimensionError(f"two-qubit state needs 4 amplitudes, got shape {a.shape}")
        object.__setattr__(self, "amps", a)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2))


@dataclass(frozen=True)
class ControlledOperator:
    """Block operator [[I, 0], [0, u]]: u acts on the target only when the control bit is 1.

    u is unconstrained (it is a learnable block in the layer this oracle
    mirrors); ``is_unitary`` exists for oracle tests only and is never
    enforced.
    """

    u: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=np.complex128))

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.complex128)
        if u.shape != (2, 2):
            raise DimensionError(f"controlled block must be 2x2, got {u.shape}")
        object.__setattr__(self, "u", u)

    def is_unitary(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.u.conj().T @ self.u - np.eye(2))) <= tol)


@dataclass(frozen=True)
class ProjectionBasis:
    """Unnormalized projection direction (0, 1, 0, w): both target-active slots."""

    w: float

    def as_vector(self) -> np.ndarray:
        return np.array([0.0, 1.0, 0.0, self.w], dtype=np.complex128)


def make_qubit(x: float, theta0: float, theta1: float) -> QubitState:
    """Encode a voxel value x in [0, 1] with per-level phases.

    amp0 = sqrt(1-x) e^{i theta0}, amp1 = sqrt(x) e^{i theta1}; unit norm
    by construction.
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"voxel value must lie in [0, 1], got {x}")
    return QubitState(
        amp0=np.sqrt(1.0 - x) * np.exp(1j * theta0),
        amp1=np.sqrt(x) * np.exp(1j * theta1),
    )


def tensor_product(control: QubitState, target: QubitState) -> TwoQubitState:
    """Kronecker product |control> (x) |target>; amps[2k+j] = c_k * t_j."""
    c = control.as_vector()
    t = target.as_vector()
    return TwoQubitState(amps=np.kron(c, t))


def apply_controlled(op: ControlledOperator, s: TwoQubitState) -> TwoQubitState:
    """Apply u to the (|10>, |11>) pair; leave the control-0 half untouched."""
    out = s.amps.copy()
    out[2:4] = op.u @ s.amps[2:4]
    return TwoQubitState(amps=out)


def born_probability(state: np.ndarray, basis: np.ndarray) -> float:
    """Measurement probability |<basis|state>|^2 for unit-norm inputs."""
    state = np.asarray(state, dtype=np.complex128)
    basis = np.asarray(basis, dtype=np.complex128)
    if state.shape != basis.shape or state.ndim != 1:
        raise DimensionError(f"state shape {state.shape} vs basis shape {basis.shape}")
    amp = np.vdot(basis, state)
    return float(amp.real**2 + amp.imag**2)


def mpm_project(s: TwoQubitState, basis: ProjectionBasis) -> float:
    """Project onto the unnormalized direction (0, 1, 0, w).

    Same bilinear form as a Born probability, but because the basis vector
    is not normalized the result is NOT bounded by 1 (e.g. it reaches 2 for
    the equal superposition of |01> and |11> at w = 1). Implemented
    literally, no clamping.
    """
    amp = np.vdot(basis.as_vector(), s.amps)
    return float(amp.real**2 + amp.imag**2)


def pair_connectivity_oracle(
    x_j: float,
    x_k: float,
    theta0_k: float,
    theta1_k: float,
    theta0_j: float,
    theta1_j: float,
    w: float,
) -> float:
    """Full-simulation connectivity of voxel k onto voxel j.

    Builds both qubits, tensors them with k as control, applies the
    controlled operator with u = identity (all learnable capacity carried
    by w), and projects onto (0, 1, 0, w). The result is invariant to the
    target phases theta0_j, theta1_j: the basis is zero on the
    target-inactive slots and the common e^{i theta1_j} factor cancels in
    the modulus.
    """
    control = make_qubit(x_k, theta0_k, theta1_k)
    target = make_qubit(x_j, theta0_j, theta1_j)
    state = apply_controlled(ControlledOperator(), tensor_product(control, target))
    return mpm_project(state, ProjectionBasis(w=w))
