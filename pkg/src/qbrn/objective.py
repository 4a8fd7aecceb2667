"""Symmetric temperature-scaled contrastive alignment loss.

Predicted and target embeddings are compared through a scaled similarity
matrix; the loss averages the negative log-likelihood of the matching pair
over both softmax directions (rows: prediction against all targets,
columns: target against all predictions) and over the batch, so the value
is comparable across batch sizes. Targets come from a frozen external
encoder and receive no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError

UNIT_NORM_TOL = 1e-9


@dataclass
class EmbeddingBatch:
    p: np.ndarray  # (N, D) predictions, rows unit-norm
    t: np.ndarray  # (N, D) targets, rows unit-norm
    tau: float

    def validate(self):
        if self.p.shape != self.t.shape or self.p.ndim != 2 or self.p.shape[0] < 1:
            raise InvariantError(f"embedding shapes {self.p.shape} vs {self.t.shape}")
        if not self.tau > 0:
            raise InvariantError(f"temperature must be positive, got {self.tau}")
        for name, m in (("p", self.p), ("t", self.t)):
            norms = np.linalg.norm(m, axis=1)
            off = np.abs(norms - 1.0)
            if np.any(off > UNIT_NORM_TOL):
                i = int(np.argmax(off))
                raise InvariantError(f"row {i} of {name} has norm {norms[i]!r}, expected 1")


def loss_and_grad(p: np.ndarray, t: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Core loss math without input validation (used directly by gradient checks).

    logits L_ij = p_i . t_j / tau;
    loss = -(1/2N) sum_i [log softmax_row(L)_ii + log softmax_col(L)_ii].
    Returns (loss, d loss / d p) with t treated as constant.
    """
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n = p.shape[0]
    logits = p @ t.T / tau

    row_shift = logits - logits.max(axis=1, keepdims=True)
    lse_rows = np.log(np.exp(row_shift).sum(axis=1)) + logits.max(axis=1)
    col_shift = logits - logits.max(axis=0, keepdims=True)
    lse_cols = np.log(np.exp(col_shift).sum(axis=0)) + logits.max(axis=0)
    diag = np.diag(logits)
    loss = float(-(2.0 * diag - lse_rows - lse_cols).sum() / (2.0 * n))

    s_row = np.exp(logits - lse_rows[:, None])
    s_col = np.exp(logits - lse_cols[None, :])
    grad_logits = (s_row + s_col - 2.0 * np.eye(n)) / (2.0 * n)
    grad_p = grad_logits @ t / tau
    return loss, grad_p


def contrastive_loss(batch: EmbeddingBatch) -> tuple[float, np.ndarray]:
    """Validated loss on an EmbeddingBatch; see loss_and_grad for the math."""
    batch.validate()
    return loss_and_grad(batch.p, batch.t, batch.tau)
