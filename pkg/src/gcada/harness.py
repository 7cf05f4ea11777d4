"""End-to-end experiment driver for the four schemes.

A run owns one dataset, one sharding plan, one optimizer state and one
logical clock. Per iteration the server selects units (all of them for
d-sgd/d-adam, adaptively for cada/g-cada), dispatches the current iterate,
draws per-worker compute times and mini-batches from counter-based streams,
resolves who uploads, aggregates fresh plus cached gradients, updates the
iterate, and appends one metrics record. Iteration 0 always dispatches
every unit so each cache entry exists before the first stale read.

Everything is deterministic given (config, seed): reruns produce
byte-identical CSV output.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import rng
from .datamodel import (PER_GROUP_REPLICATED, PER_WORKER_DISJOINT, Dataset,
                        load_idx, shard, synth_regression)
from .errors import ConfigurationError, ContractError, DivergenceError, NumericalError
from .lossmodel import MiniBatch, global_loss, minibatch_gradient, smoothness_constant
from .optimizer import OptimizerState, aggregate, amsgrad_step, sgd_step
from .scheduler import (REASON_FORCED, GroupMeta, IterateHistory, SelectionResult,
                        WorkerMeta, select_groups, select_workers, update_aoi)
from .stragglersim import ComputeTimeModel, IterationTiming, resolve_cada, \
    resolve_gcada, sample_times

SCHEME_D_SGD = "d-sgd"
SCHEME_D_ADAM = "d-adam"
SCHEME_CADA = "cada"
SCHEME_G_CADA = "g-cada"
SCHEMES = (SCHEME_D_SGD, SCHEME_D_ADAM, SCHEME_CADA, SCHEME_G_CADA)

SCALE_LOCAL = "local"    # smoothness of the shard-average loss: 1/|shard|
SCALE_BATCH = "batch"    # expected smoothness of a batch-sum gradient: b/|shard|

CSV_HEADER = ("k,t_iter,t_cum,n_dispatch,n_upload,"
              "comm_iter,comm_cum,comp_iter,comp_cum,loss")
SUMMARY_HEADER = ("scheme,seed,iterations,final_loss,reached,"
                  "iters_to_threshold,time_to_threshold,"
                  "comm_to_threshold,comp_to_threshold")

# Defaults mirror the reference experiment: 12 workers in 3 groups of 4,
# beta1=0.9, beta2=0.999, mean compute time 1e-4 s, skip constants 2.0
# (cada) and 0.3 (g-cada). The plain-SGD stepsize is calibrated for the
# summed-gradient convention used here (see lossmodel) rather than copied.
DEFAULT_C = {SCHEME_CADA: 2.0, SCHEME_G_CADA: 0.3}
DEFAULT_ALPHA = {SCHEME_D_SGD: 0.5, SCHEME_D_ADAM: 0.01,
                 SCHEME_CADA: 0.01, SCHEME_G_CADA: 0.01}


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synth"                 # "synth" | "idx"
    n: int = 2400
    d: int = 50
    noise_sd: float = 0.0
    images: str | None = None
    labels: str | None = None
    limit: int | None = None
    append_bias: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str
    workers: int = 12
    groups: int = 3
    max_age: int = 10               # D: forced-refresh age and history window
    threshold_c: float = 2.0        # c in the skip condition
    alpha: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eta: float = 1e-4               # mean compute time, seconds
    batch_size: int = 32
    max_iters: int = 2000
    loss_threshold: float = 0.1
    seed: int = 0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    smoothness_scale: str = SCALE_LOCAL
    sgd_normalize: bool = True      # divide the d-sgd estimate by workers*batch
    classic_amsgrad: bool = False
    loss_every: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.alpha <= 0 or self.eta <= 0:
            raise ConfigurationError("alpha and eta must be positive")
        if self.workers < 1 or self.max_iters < 1 or self.batch_size < 1:
            raise ConfigurationError("workers, max_iters, batch_size must be >= 1")
        if self.max_age < 1:
            raise ConfigurationError("max_age must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.loss_every < 1:
            raise ConfigurationError("loss_every must be >= 1")
        if self.smoothness_scale not in (SCALE_LOCAL, SCALE_BATCH):
            raise ConfigurationError(
                f"unknown smoothness scale {self.smoothness_scale!r}")
        if self.scheme == SCHEME_G_CADA:
            if self.groups < 1 or self.workers % self.groups != 0:
                raise ConfigurationError(
                    f"workers {self.workers} must be a multiple of groups {self.groups}")

    @property
    def group_size(self) -> int:
        return self.workers // self.groups

    @property
    def redundancy(self) -> int:
        # storage redundancy is implied by the scheme, never set directly
        return self.group_size if self.scheme == SCHEME_G_CADA else 1


def default_config(scheme: str, **overrides) -> ExperimentConfig:
    """Reference-experiment defaults with per-scheme c and stepsize."""
    values = {"threshold_c": DEFAULT_C.get(scheme, 2.0),
              "alpha": DEFAULT_ALPHA.get(scheme, 0.01)}
    values.update(overrides)
    return ExperimentConfig(scheme=scheme, **values)


@dataclass(frozen=True)
class MetricsRecord:
    k: int
    t_iter: float
    t_cum: float
    n_dispatch: int
    n_upload: int
    comm_iter: int
    comm_cum: int
    comp_iter: int
    comp_cum: int
    loss: float


@dataclass(frozen=True)
class RunSummary:
    scheme: str
    seed: int
    iterations: int
    final_loss: float
    reached: bool
    iters_to_threshold: int | None
    time_to_threshold: float | None
    comm_to_threshold: int | None
    comp_to_threshold: int | None
    config: dict = field(repr=False, default_factory=dict)


def build_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    if spec.kind == "synth":
        ds = synth_regression(spec.n, spec.d, spec.noise_sd, seed)
    elif spec.kind == "idx":
        if not spec.images or not spec.labels:
            raise ConfigurationError("idx dataset needs image and label paths")
        ds = load_idx(spec.images, spec.labels, spec.limit)
    else:
        raise ConfigurationError(f"unknown dataset kind {spec.kind!r}")
    return ds.with_bias_column() if spec.append_bias else ds


def _smoothness_scale(config: ExperimentConfig, shard_size: int) -> float:
    if config.smoothness_scale == SCALE_BATCH:
        return config.batch_size / shard_size
    return 1.0 / shard_size


def run(config: ExperimentConfig, dataset: Dataset | None = None,
        probe: Callable[[int, SelectionResult, dict[int, int]], None] | None = None,
        ) -> tuple[list[MetricsRecord], RunSummary]:
    """Simulate one full training run; see the module docstring for the loop.

    ``probe``, when given, is called once per iteration with
    (k, selection, age-at-check-time per unit) for instrumentation.
    """
    if dataset is None:
        dataset = build_dataset(config.dataset, config.seed)
    grouped = config.scheme == SCHEME_G_CADA
    adaptive = config.scheme in (SCHEME_CADA, SCHEME_G_CADA)

    if grouped:
        plan = shard(dataset, config.workers, config.groups, PER_GROUP_REPLICATED)
        members = {gid: tuple(sorted(plan.shards[gid].owners))
                   for gid in range(config.groups)}
        metas = [GroupMeta(id=gid, members=members[gid], tau=0,
                           smoothness=_unit_smoothness(config, plan, gid, dataset,
                                                       adaptive))
                 for gid in range(config.groups)]
    else:
        plan = shard(dataset, config.workers, mode=PER_WORKER_DISJOINT)
        metas = [WorkerMeta(id=m, tau=0,
                            smoothness=_unit_smoothness(config, plan, m, dataset,
                                                        adaptive))
                 for m in range(config.workers)]

    unit_ids = tuple(meta.id for meta in metas)
    shard_size = plan.shards[0].size
    theta = np.zeros(dataset.d)
    history = IterateHistory(config.max_age, theta)
    opt_state = OptimizerState.initial(dataset.d, config.alpha, config.beta1,
                                       config.beta2, config.eps,
                                       config.classic_amsgrad)
    time_model = ComputeTimeModel(config.eta, config.seed, config.workers)
    by_id = {meta.id: meta for meta in metas}

    records: list[MetricsRecord] = []
    t_cum = 0.0
    comm_cum = 0
    comp_cum = 0
    loss = global_loss(theta, dataset)
    reached = False

    for k in range(config.max_iters):
        if k == 0 or not adaptive:
            selection = SelectionResult(
                selected=unit_ids,
                reasons={uid: REASON_FORCED for uid in unit_ids})
        elif grouped:
            selection = select_groups(metas, history, config.threshold_c,
                                      config.max_age)
        else:
            selection = select_workers(metas, history, config.threshold_c,
                                       config.max_age)

        if grouped:
            dispatch = tuple(w for gid in selection.selected
                             for w in by_id[gid].members)
        else:
            dispatch = selection.selected

        if dispatch:
            times = sample_times(time_model, k, dispatch)
            if grouped:
                timing = resolve_gcada(
                    times, {gid: by_id[gid].members for gid in selection.selected})
            else:
                timing = resolve_cada(times, selection.selected)
        else:
            timing = IterationTiming(times={}, uploads=(), wall_clock=0.0)

        fresh = _fresh_gradients(config, dataset, plan, selection, timing,
                                 theta, shard_size, grouped, k)
        for uid, grad in fresh.items():
            by_id[uid].cached_gradient = grad
        stale = {meta.id: meta.cached_gradient
                 for meta in metas if meta.id not in fresh}
        stale_aoi = {meta.id: meta.tau for meta in metas if meta.id not in fresh}
        estimate = aggregate(fresh, stale, stale_aoi)

        try:
            if config.scheme == SCHEME_D_SGD:
                grad = estimate.values
                if config.sgd_normalize:
                    grad = grad / (config.workers * config.batch_size)
                theta_new = sgd_step(theta, grad, config.alpha)
            else:
                theta_new, opt_state = amsgrad_step(opt_state, theta,
                                                    estimate.values)
        except NumericalError as exc:
            raise DivergenceError(
                f"update diverged at iteration {k}: {exc}",
                diagnostics=_diagnostics(config, k, records)) from exc

        history.push(theta_new)
        ages_at_check = {meta.id: meta.tau for meta in metas}
        update_aoi(selection, metas)
        theta = theta_new

        if k % config.loss_every == 0 or k == config.max_iters - 1:
            loss = global_loss(theta, dataset)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training loss became non-finite at iteration {k}",
                    diagnostics=_diagnostics(config, k, records))

        n_dispatch = len(dispatch)
        n_upload = len(timing.uploads)
        t_cum += timing.wall_clock
        comm_cum += n_dispatch + n_upload
        comp_cum += n_dispatch * config.batch_size
        records.append(MetricsRecord(
            k=k, t_iter=timing.wall_clock, t_cum=t_cum,
            n_dispatch=n_dispatch, n_upload=n_upload,
            comm_iter=n_dispatch + n_upload, comm_cum=comm_cum,
            comp_iter=n_dispatch * config.batch_size, comp_cum=comp_cum,
            loss=loss))
        if probe is not None:
            probe(k, selection, ages_at_check)
        if loss <= config.loss_threshold:
            reached = True
            break

    last = records[-1]
    summary = RunSummary(
        scheme=config.scheme, seed=config.seed, iterations=len(records),
        final_loss=last.loss, reached=reached,
        iters_to_threshold=len(records) if reached else None,
        time_to_threshold=last.t_cum if reached else None,
        comm_to_threshold=last.comm_cum if reached else None,
        comp_to_threshold=last.comp_cum if reached else None,
        config=_config_echo(config))
    return records, summary


def _unit_smoothness(config, plan, uid, dataset, adaptive: bool) -> float:
    if not adaptive:
        return 0.0  # full-selection schemes never evaluate the condition
    sh = plan.shards[uid]
    return smoothness_constant(sh, dataset, _smoothness_scale(config, sh.size))


def _fresh_gradients(config, dataset, plan, selection, timing, theta,
                     shard_size, grouped, iteration) -> dict[int, np.ndarray]:
    if not selection.selected:
        return {}
    positions = rng.stream(config.seed, rng.DOMAIN_MINIBATCH, iteration).integers(
        0, shard_size, size=(config.workers, config.batch_size))
    fresh = {}
    for uid in selection.selected:
        # grouped mode: every member computes, but only the fastest one's
        # batch reaches the server
        worker = timing.group_uploader[uid] if grouped else uid
        indices = plan.shards[uid].indices[positions[worker]]
        fresh[uid] = minibatch_gradient(theta, MiniBatch(indices), dataset)
    return fresh


def _diagnostics(config, iteration, records) -> dict:
    last_finite = next((r.loss for r in reversed(records) if np.isfinite(r.loss)),
                       None)
    return {"scheme": config.scheme, "seed": config.seed, "iteration": iteration,
            "last_finite_loss": last_finite}


def _config_echo(config: ExperimentConfig) -> dict:
    echo = {k: v for k, v in vars(config).items() if k != "dataset"}
    echo["dataset"] = vars(config.dataset).copy()
    return echo


def compare(configs: Sequence[ExperimentConfig], seed: int,
            probe=None) -> list[tuple[ExperimentConfig, list[MetricsRecord], RunSummary]]:
    """Run several schemes on one dataset with coupled timing randomness.

    All configs must share the dataset spec and eta; the given seed
    overrides each config's own so the compute-time draws coincide.
    """
    if not configs:
        raise ContractError("nothing to compare")
    spec0, eta0 = configs[0].dataset, configs[0].eta
    for cfg in configs[1:]:
        if cfg.dataset != spec0 or cfg.eta != eta0:
            raise ConfigurationError(
                "compared configs must share the dataset spec and eta")
    dataset = build_dataset(spec0, seed)
    out = []
    for cfg in configs:
        coupled = replace(cfg, seed=seed)
        records, summary = run(coupled, dataset=dataset, probe=probe)
        out.append((coupled, records, summary))
    return out


def sweep(configs: Sequence[ExperimentConfig],
          seeds: Sequence[int]) -> list[RunSummary]:
    """One run per (config, seed); summaries sorted by (scheme, seed)."""
    summaries = []
    for cfg in configs:
        for seed in seeds:
            _, summary = run(replace(cfg, seed=seed))
            summaries.append(summary)
    summaries.sort(key=lambda s: (s.scheme, s.seed))
    return summaries


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


def format_csv(records: Sequence[MetricsRecord]) -> str:
    """Per-iteration CSV text: 9 significant digits, LF line endings."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in records:
        buf.write(",".join([
            str(r.k), _fmt(r.t_iter), _fmt(r.t_cum), str(r.n_dispatch),
            str(r.n_upload), str(r.comm_iter), str(r.comm_cum),
            str(r.comp_iter), str(r.comp_cum), _fmt(r.loss)]) + "\n")
    return buf.getvalue()


def emit_csv(records: Sequence[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(records))


def format_summary_csv(summaries: Sequence[RunSummary]) -> str:
    buf = io.StringIO()
    buf.write(SUMMARY_HEADER + "\n")
    for s in summaries:
        buf.write(",".join([
            s.scheme, str(s.seed), str(s.iterations), _fmt(s.final_loss),
            _fmt(s.reached), _fmt(s.iters_to_threshold),
            _fmt(s.time_to_threshold), _fmt(s.comm_to_threshold),
            _fmt(s.comp_to_threshold)]) + "\n")
    return buf.getvalue()


def emit_summary_csv(summaries: Sequence[RunSummary], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_summary_csv(summaries))
