"""Gradient aggregation with staleness and the two parameter-update rules.

The server never waits for every unit: gradients from units that skipped the
current iteration are replayed from their last upload. ``aggregate`` sums
fresh and cached contributions over the full unit set in ascending unit-id
order, which keeps runs bit-reproducible.

Updates are either a plain SGD step or AMSGrad. The AMSGrad second-moment
recursion here feeds back the running maximum (v' = b2*vhat + (1-b2)*g^2)
rather than the previous raw second moment; set ``classic_second_moment``
on the state to get the textbook recursion instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, NumericalError, StateError


@dataclass(frozen=True)
class GradientEstimate:
    """Aggregated gradient plus the age of each contribution (0 = fresh)."""

    values: np.ndarray
    freshness: dict[int, int]


@dataclass(frozen=True)
class OptimizerState:
    """AMSGrad memory: momentum h, second moment v, running max vhat."""

    h: np.ndarray
    v: np.ndarray
    vhat: np.ndarray
    k: int
    beta1: float
    beta2: float
    eps: float
    alpha: float
    classic_second_moment: bool = False

    @classmethod
    def initial(cls, dim: int, alpha: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8,
                classic_second_moment: bool = False) -> "OptimizerState":
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ContractError("beta1, beta2 must lie in (0, 1)")
        if eps <= 0:
            raise ContractError("eps must be positive")
        zero = np.zeros(dim)
        return cls(h=zero, v=zero, vhat=zero, k=0, beta1=beta1, beta2=beta2,
                   eps=eps, alpha=alpha, classic_second_moment=classic_second_moment)


def aggregate(fresh: dict[int, np.ndarray], stale_cache: dict[int, np.ndarray],
              stale_aoi: dict[int, int] | None = None) -> GradientEstimate:
    """Sum fresh gradients and, for every other unit, its cached gradient.

    ``fresh`` and ``stale_cache`` keys must partition the unit set; a stale
    unit with no cache entry means it never uploaded, which the cold-start
    protocol rules out.
    """
    overlap = fresh.keys() & stale_cache.keys()
    if overlap:
        raise ContractError(f"units {sorted(overlap)} appear both fresh and stale")
    freshness: dict[int, int] = {}
    total = None
    for uid in sorted(fresh.keys() | stale_cache.keys()):
        if uid in fresh:
            g = fresh[uid]
            freshness[uid] = 0
        else:
            g = stale_cache[uid]
            if g is None:
                raise StateError(f"unit {uid} is stale but has no cached gradient")
            freshness[uid] = stale_aoi[uid] if stale_aoi else 1
        total = np.array(g, dtype=np.float64) if total is None else total + g
    if total is None:
        raise ContractError("no units to aggregate")
    return GradientEstimate(values=total, freshness=freshness)


def sgd_step(theta: np.ndarray, estimate: np.ndarray, alpha: float) -> np.ndarray:
    return theta - alpha * estimate


def amsgrad_step(state: OptimizerState, theta: np.ndarray,
                 estimate: np.ndarray) -> tuple[np.ndarray, OptimizerState]:
    """One AMSGrad update; returns the new iterate and new state.

    h' = b1*h + (1-b1)*g
    v' = b2*vhat + (1-b2)*g^2   (or b2*v + ... in classic mode)
    vhat' = max(vhat, v') elementwise
    theta' = theta - alpha * h' / sqrt(eps + vhat')
    """
    g = np.asarray(estimate, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericalError("gradient estimate contains NaN/Inf")
    h_new = state.beta1 * state.h + (1.0 - state.beta1) * g
    base = state.v if state.classic_second_moment else state.vhat
    v_new = state.beta2 * base + (1.0 - state.beta2) * g * g
    vhat_new = np.maximum(state.vhat, v_new)
    theta_new = theta - state.alpha * h_new / np.sqrt(state.eps + vhat_new)
    new_state = replace(state, h=h_new, v=v_new, vhat=vhat_new, k=state.k + 1)
    return theta_new, new_state
