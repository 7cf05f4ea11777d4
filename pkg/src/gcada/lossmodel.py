"""Quadratic-loss linear regression primitives.

Convention that matters everywhere downstream: mini-batch gradients are
SUMS over the batch, not averages. The aggregation step adds per-unit batch
gradients without any 1/|batch| factor, so the usable stepsize range shrinks
with batch size and worker count; the harness exposes a normalization flag
for plain SGD to compensate.

Model vectors are plain 1-D float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset, Shard
from .errors import ContractError, NumericalError

POWER_ITERATION_CAP = 10_000
POWER_ITERATION_RTOL = 1e-6


@dataclass(frozen=True)
class MiniBatch:
    """Sample indices drawn (with replacement) from a single shard."""

    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    @property
    def size(self) -> int:
        return int(self.indices.size)


def global_loss(theta: np.ndarray, dataset: Dataset) -> float:
    """Mean squared residual (1/N) sum_n (x_n.theta - y_n)^2."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (dataset.d,):
        raise ContractError(
            f"model dimension {theta.shape} does not match features ({dataset.d},)"
        )
    residual = dataset.features @ theta - dataset.labels
    return float(residual @ residual / dataset.n)


def minibatch_gradient(theta: np.ndarray, batch: MiniBatch, dataset: Dataset) -> np.ndarray:
    """Summed gradient over the batch: sum_i 2 x_i (x_i.theta - y_i)."""
    theta = np.asarray(theta, dtype=np.float64)
    if batch.size == 0:
        raise ContractError("empty mini-batch")
    if batch.indices.min() < 0 or batch.indices.max() >= dataset.n:
        raise ContractError("mini-batch indices out of range")
    x = dataset.features[batch.indices]
    residual = x @ theta - dataset.labels[batch.indices]
    return 2.0 * (x.T @ residual)


def smoothness_constant(shard: Shard, dataset: Dataset, scale: float = 1.0) -> float:
    """scale * 2 * lambda_max(X_s^T X_s) for the shard's feature rows X_s.

    The top eigenvalue comes from power iteration on the d x d Gram matrix
    (fixed-seed start vector, relative tolerance 1e-6, 10,000-iteration cap).
    Non-convergence raises NumericalError carrying the partial estimate.
    """
    x = dataset.features[shard.indices]
    gram = x.T @ x
    return scale * 2.0 * _top_eigenvalue(gram)


def _top_eigenvalue(gram: np.ndarray) -> float:
    d = gram.shape[0]
    v = np.random.default_rng(0).standard_normal(d)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(POWER_ITERATION_CAP):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0  # all-zero Gram (empty feature directions)
        v = w / norm
        new_estimate = float(v @ (gram @ v))
        if abs(new_estimate - estimate) <= POWER_ITERATION_RTOL * max(abs(new_estimate), 1e-300):
            return new_estimate
        estimate = new_estimate
    raise NumericalError(
        f"power iteration did not converge within {POWER_ITERATION_CAP} iterations",
        partial=estimate,
    )
