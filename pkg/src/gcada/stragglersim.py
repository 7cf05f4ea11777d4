"""Per-iteration compute times and waiting semantics.

Worker compute times are i.i.d. exponential with mean eta, drawn from a
counter-based stream keyed by (seed, iteration): worker m's time at
iteration k is a pure function of (seed, k, m), so schemes compared under
the same seed see identical draws regardless of who gets dispatched.

CADA-style resolution waits for every selected worker; grouped resolution
takes the fastest member of each selected group and waits for the slowest
group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import rng
from .errors import ContractError


@dataclass(frozen=True)
class ComputeTimeModel:
    mean: float
    seed: int
    num_workers: int

    def __post_init__(self):
        if self.mean <= 0:
            raise ContractError("mean compute time must be positive")
        if self.num_workers < 1:
            raise ContractError("need at least one worker")


@dataclass(frozen=True)
class IterationTiming:
    """Sampled times for dispatched workers and the resulting wall clock."""

    times: dict[int, float]
    uploads: tuple[int, ...]
    wall_clock: float
    group_times: dict[int, float] | None = None
    group_uploader: dict[int, int] | None = None


def exponential_from_uniform(u: float, mean: float) -> float:
    """Inverse CDF: t = -mean * ln(u) for u in (0, 1]."""
    return -mean * float(np.log(u))


def sample_times(model: ComputeTimeModel, iteration: int,
                 worker_ids: Sequence[int] | None = None) -> dict[int, float]:
    """Exponential compute times for the given workers at this iteration.

    The full worker population is drawn in ascending-id order and then
    subset, so a worker's time never depends on which others were dispatched.
    """
    raw = rng.stream(model.seed, rng.DOMAIN_COMPUTE_TIMES, iteration).random(
        model.num_workers)
    u = 1.0 - raw  # (0, 1]
    times = -model.mean * np.log(u)
    ids = range(model.num_workers) if worker_ids is None else worker_ids
    return {int(m): float(times[m]) for m in ids}


def resolve_cada(times: Mapping[int, float],
                 selected: Sequence[int]) -> IterationTiming:
    """All selected workers upload; the iteration lasts until the slowest."""
    uploads = tuple(sorted(selected))
    if not uploads:
        return IterationTiming(times={}, uploads=(), wall_clock=0.0)
    wall = max(times[m] for m in uploads)
    return IterationTiming(times={m: times[m] for m in uploads},
                           uploads=uploads, wall_clock=wall)


def resolve_gcada(times: Mapping[int, float],
                  selected_groups: Mapping[int, Sequence[int]]) -> IterationTiming:
    """Fastest member of each selected group uploads (ties: lowest id).

    The iteration lasts until the slowest group, i.e. the max over selected
    groups of the per-group minimum time.
    """
    if not selected_groups:
        return IterationTiming(times={}, uploads=(), wall_clock=0.0,
                               group_times={}, group_uploader={})
    group_times: dict[int, float] = {}
    group_uploader: dict[int, int] = {}
    dispatched: dict[int, float] = {}
    for gid in sorted(selected_groups):
        members = selected_groups[gid]
        if not members:
            raise ContractError(f"group {gid} has no members")
        for m in members:
            dispatched[int(m)] = times[m]
        fastest = min(members, key=lambda m: (times[m], m))
        group_uploader[gid] = int(fastest)
        group_times[gid] = times[fastest]
    uploads = tuple(sorted(group_uploader.values()))
    wall = max(group_times.values())
    return IterationTiming(times=dispatched, uploads=uploads, wall_clock=wall,
                           group_times=group_times, group_uploader=group_uploader)
