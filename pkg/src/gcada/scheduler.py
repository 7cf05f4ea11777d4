"""Adaptive unit selection at the server.

A unit (worker or group) is skipped while its predicted gradient change,
bounded by its smoothness constant times the iterate drift since its last
upload, stays below a threshold built from the last D squared iterate
differences. Every unit also carries an age-of-information counter tau;
once tau reaches the window length D the unit is selected unconditionally,
which caps both staleness and the server's snapshot memory.

Selection state is owned by the single simulation loop; queries are pure.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, StateError

REASON_CONDITION = "condition-violated"
REASON_FORCED = "aoi-forced"


@dataclass
class WorkerMeta:
    id: int
    tau: int
    smoothness: float
    cached_gradient: np.ndarray | None = None


@dataclass
class GroupMeta:
    id: int
    members: tuple[int, ...]
    tau: int
    smoothness: float
    cached_gradient: np.ndarray | None = None


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[int, ...]
    reasons: dict[int, str] = field(default_factory=dict)

    def __contains__(self, uid: int) -> bool:
        return uid in self.reasons


class IterateHistory:
    """Recent iterates and their squared step norms.

    Keeps the last ``window`` squared differences ||theta^{j} - theta^{j-1}||^2
    (newest first) and the last ``window``+1 iterate snapshots, enough to
    evaluate the skip condition exactly for any age up to the window length.
    """

    def __init__(self, window: int, theta0: np.ndarray):
        if window < 1:
            raise ContractError("history window must be >= 1")
        self.window = window
        self._diffs: deque[float] = deque(maxlen=window)
        self._snapshots: deque[np.ndarray] = deque(maxlen=window + 1)
        self._snapshots.appendleft(np.array(theta0, dtype=np.float64))

    def push(self, theta_new: np.ndarray) -> None:
        delta = np.asarray(theta_new, dtype=np.float64) - self._snapshots[0]
        self._diffs.appendleft(float(delta @ delta))
        self._snapshots.appendleft(np.array(theta_new, dtype=np.float64))

    @property
    def current(self) -> np.ndarray:
        return self._snapshots[0]

    def stale(self, age: int) -> np.ndarray:
        """The iterate from ``age`` iterations ago."""
        if age < 1 or age >= len(self._snapshots):
            raise StateError(f"no snapshot retained for age {age}")
        return self._snapshots[age]

    def weighted_window_sum(self, c: float | Sequence[float]) -> float:
        """c * sum of stored squared diffs; a sequence weights diff d by c[d-1]."""
        if np.isscalar(c):
            return float(c) * sum(self._diffs)
        weights = list(c)
        if len(weights) < len(self._diffs):
            raise ContractError("need one weight per stored history entry")
        return sum(w * v for w, v in zip(weights, self._diffs))

    def __len__(self) -> int:
        return len(self._diffs)


def check_condition(smoothness: float, theta_now: np.ndarray, theta_stale: np.ndarray,
                    history: IterateHistory, c: float | Sequence[float]) -> bool:
    """True when the unit may be skipped this iteration.

    Skippable iff L^2 * ||theta_now - theta_stale||^2 <= c * sum of the
    stored squared iterate differences (at most D of them, fewer while the
    run is warming up).
    """
    delta = np.asarray(theta_now, dtype=np.float64) - theta_stale
    lhs = smoothness * smoothness * float(delta @ delta)
    return lhs <= history.weighted_window_sum(c)


def _select(metas, history: IterateHistory, c, max_age: int) -> SelectionResult:
    selected = []
    reasons: dict[int, str] = {}
    for meta in metas:
        if meta.tau >= max_age:
            selected.append(meta.id)
            reasons[meta.id] = REASON_FORCED
        elif not check_condition(meta.smoothness, history.current,
                                 history.stale(meta.tau), history, c):
            selected.append(meta.id)
            reasons[meta.id] = REASON_CONDITION
    return SelectionResult(selected=tuple(sorted(selected)), reasons=reasons)


def select_workers(workers: Sequence[WorkerMeta], history: IterateHistory,
                   c: float | Sequence[float], max_age: int) -> SelectionResult:
    """Workers to dispatch this iteration: condition violators plus tau >= D."""
    return _select(workers, history, c, max_age)


def select_groups(groups: Sequence[GroupMeta], history: IterateHistory,
                  c: float | Sequence[float], max_age: int) -> SelectionResult:
    """Groups to dispatch this iteration; same rule, group-level metadata."""
    return _select(groups, history, c, max_age)


def update_aoi(result: SelectionResult, metas):
    """Selected units restart at age 1; everyone else ages by one."""
    for meta in metas:
        meta.tau = 1 if meta.id in result else meta.tau + 1
    return metas
