"""Simulator and analysis toolkit for straggler-aware distributed SGD.

A parameter server trains linear regression with four schemes: plain
distributed SGD, distributed AMSGrad, adaptive worker selection with stale
gradient reuse, and its grouped variant where replicated shards let only
the fastest member of each group upload. Runs are simulated on a logical
clock with exponential compute times and are bit-reproducible from
(config, seed).
"""

from .analysis import (AnalysisInputs, LoadPredictions, TimePredictions,
                       expected_group_max, expected_order_stat, harmonic,
                       mc_group_time_mean, mc_order_stat_mean, predicted_loads,
                       predicted_times, selection_bound_groups,
                       selection_bound_workers)
from .datamodel import (PER_GROUP_REPLICATED, PER_WORKER_DISJOINT, Dataset,
                        Shard, ShardingPlan, load_idx, shard, synth_regression,
                        write_idx)
from .errors import (ConfigurationError, ConsistencyError, ContractError,
                     DataFormatError, DivergenceError, NumericalError,
                     SimulationError, StateError)
from .harness import (SCHEMES, DatasetSpec, ExperimentConfig, MetricsRecord,
                      RunSummary, compare, default_config, emit_csv,
                      emit_summary_csv, run, sweep)
from .lossmodel import (MiniBatch, global_loss, minibatch_gradient,
                        smoothness_constant)
from .optimizer import (GradientEstimate, OptimizerState, aggregate,
                        amsgrad_step, sgd_step)
from .scheduler import (GroupMeta, IterateHistory, SelectionResult, WorkerMeta,
                        check_condition, select_groups, select_workers,
                        update_aoi)
from .stragglersim import (ComputeTimeModel, IterationTiming, resolve_cada,
                           resolve_gcada, sample_times)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
