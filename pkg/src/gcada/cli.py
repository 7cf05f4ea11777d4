"""Command line interface.

Subcommands:
  run      one scheme, one seed -> per-iteration CSV (stdout or --out)
  compare  several schemes, coupled timing draws -> CSV per scheme + summary
  analyze  closed-form time/load predictions + Monte Carlo validation table
  sweep    schemes x seeds -> summary CSV

A flat key=value config file (--config) may supply any flag; values given
on the command line win. Exit codes: 0 ok, 2 bad configuration, 3 numerical
divergence, 4 IO/format error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import analysis, harness, report
from .datamodel import PER_GROUP_REPLICATED, PER_WORKER_DISJOINT, shard
from .errors import (ConfigurationError, ContractError, DataFormatError,
                     DivergenceError, NumericalError, SimulationError)
from .harness import (SCHEMES, DatasetSpec, ExperimentConfig, build_dataset,
                      default_config)
from .lossmodel import smoothness_constant

_INT_KEYS = {"workers", "groups", "group_size", "max_delay", "batch", "iters",
             "seed", "limit", "mc_reps", "loss_every"}
_FLOAT_KEYS = {"beta1", "beta2", "epsilon", "eta", "loss_threshold"}
_BOOL_KEYS = {"plot", "sgd_no_normalize", "classic_amsgrad", "append_bias"}


def _add_experiment_flags(p: argparse.ArgumentParser, single_scheme: bool):
    p.add_argument("--config", help="key=value file; command line overrides")
    if single_scheme:
        p.add_argument("--scheme", choices=SCHEMES)
    else:
        p.add_argument("--schemes",
                       help="comma list (default: all four schemes)")
    p.add_argument("--workers", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--group-size", type=int)
    p.add_argument("--max-delay", type=int, metavar="D",
                   help="forced-refresh age / history window")
    p.add_argument("--threshold-c",
                   help="skip-condition constant c; a comma list pairs with "
                        "--schemes (per-scheme default)")
    p.add_argument("--lr",
                   help="stepsize; a comma list pairs with --schemes "
                        "(per-scheme default)")
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta", type=float, help="mean compute time, seconds")
    p.add_argument("--batch", type=int, help="mini-batch size in samples")
    p.add_argument("--iters", type=int, help="iteration cap")
    p.add_argument("--loss-threshold", type=float)
    p.add_argument("--loss-every", type=int,
                   help="evaluate the loss every this many iterations")
    p.add_argument("--seed", type=int)
    p.add_argument("--smoothness-scale", choices=("local", "batch"))
    p.add_argument("--sgd-no-normalize", action="store_true", default=None,
                   help="keep the raw gradient sum in the d-sgd update")
    p.add_argument("--classic-amsgrad", action="store_true", default=None,
                   help="second-moment recursion on v instead of v-hat")
    # dataset
    p.add_argument("--synth", metavar="N,d,sd",
                   help="synthetic regression: samples, dimension, noise sd")
    p.add_argument("--mnist-images", help="IDX image file")
    p.add_argument("--mnist-labels", help="IDX label file")
    p.add_argument("--limit", type=int, help="cap on loaded samples")
    p.add_argument("--append-bias", action=argparse.BooleanOptionalAction,
                   default=None,
                   help="append a constant-1 feature (default: IDX yes, synth no)")
    p.add_argument("--out", help="output path (file, or directory for compare)")
    p.add_argument("--plot", action="store_true", default=None,
                   help="render figures next to the CSV output")


def _load_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(
                        f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}")
    return values


def _coerce(key: str, text: str):
    try:
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
        if key in _BOOL_KEYS:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
    except ValueError as exc:
        raise ConfigurationError(f"config value {key}={text!r}: {exc}")
    return text


def _merge_config_file(ns: argparse.Namespace):
    """Fill flags the command line left unset from the --config file."""
    if not ns.config:
        return
    for key, text in _load_config_file(ns.config).items():
        if not hasattr(ns, key):
            raise ConfigurationError(f"unknown config key {key!r}")
        if getattr(ns, key) is None:
            setattr(ns, key, _coerce(key, text))


def _parse_synth(text: str) -> tuple[int, int, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigurationError(f"--synth wants N,d,sd, got {text!r}")
    try:
        return int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError as exc:
        raise ConfigurationError(f"--synth {text!r}: {exc}")


def _dataset_spec(ns: argparse.Namespace) -> DatasetSpec:
    if ns.mnist_images or ns.mnist_labels:
        if not (ns.mnist_images and ns.mnist_labels):
            raise ConfigurationError(
                "--mnist-images and --mnist-labels go together")
        bias = True if ns.append_bias is None else ns.append_bias
        return DatasetSpec(kind="idx", images=ns.mnist_images,
                           labels=ns.mnist_labels, limit=ns.limit,
                           append_bias=bias)
    spec = DatasetSpec()
    if ns.synth:
        n, d, sd = _parse_synth(ns.synth)
        spec = DatasetSpec(n=n, d=d, noise_sd=sd)
    if ns.append_bias:
        spec = replace(spec, append_bias=True)
    return spec


def _resolve_groups(ns: argparse.Namespace, workers: int) -> int | None:
    if ns.group_size is not None:
        if workers % ns.group_size != 0:
            raise ConfigurationError(
                f"workers {workers} not divisible by group size {ns.group_size}")
        derived = workers // ns.group_size
        if ns.groups is not None and ns.groups != derived:
            raise ConfigurationError(
                f"--groups {ns.groups} conflicts with --group-size "
                f"{ns.group_size} at {workers} workers")
        return derived
    return ns.groups


def _per_scheme_float(flag: str, text: str | None, idx: int,
                      count: int) -> float | None:
    """A scalar applies to every scheme; a comma list pairs with --schemes."""
    if text is None:
        return None
    parts = str(text).split(",")
    if len(parts) not in (1, count):
        raise ConfigurationError(
            f"{flag} got {len(parts)} values for {count} scheme(s)")
    try:
        return float(parts[0] if len(parts) == 1 else parts[idx])
    except ValueError as exc:
        raise ConfigurationError(f"{flag} {text!r}: {exc}")


def _experiment_config(ns: argparse.Namespace, scheme: str, idx: int = 0,
                       count: int = 1) -> ExperimentConfig:
    overrides = {"dataset": _dataset_spec(ns)}
    workers = ns.workers if ns.workers is not None else 12
    groups = _resolve_groups(ns, workers)
    threshold_c = _per_scheme_float("--threshold-c", ns.threshold_c, idx, count)
    lr = _per_scheme_float("--lr", ns.lr, idx, count)
    for key, value in (("workers", ns.workers), ("groups", groups),
                       ("max_age", ns.max_delay), ("threshold_c", threshold_c),
                       ("alpha", lr), ("beta1", ns.beta1), ("beta2", ns.beta2),
                       ("eps", ns.epsilon), ("eta", ns.eta),
                       ("batch_size", ns.batch), ("max_iters", ns.iters),
                       ("loss_threshold", ns.loss_threshold),
                       ("loss_every", ns.loss_every), ("seed", ns.seed),
                       ("smoothness_scale", ns.smoothness_scale),
                       ("classic_amsgrad", ns.classic_amsgrad)):
        if value is not None:
            overrides[key] = value
    if ns.sgd_no_normalize:
        overrides["sgd_normalize"] = False
    return default_config(scheme, **overrides)


def _scheme_list(ns: argparse.Namespace) -> list[str]:
    if not ns.schemes:
        return list(SCHEMES)
    schemes = [s.strip() for s in ns.schemes.split(",") if s.strip()]
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {s!r}")
    if not schemes:
        raise ConfigurationError("--schemes is empty")
    return schemes


def _parse_seeds(text: str | None) -> list[int]:
    if not text:
        return [0]
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            seeds = list(range(int(lo), int(hi)))
        else:
            seeds = [int(s) for s in text.split(",")]
    except ValueError as exc:
        raise ConfigurationError(f"--seeds {text!r}: {exc}")
    if not seeds:
        raise ConfigurationError(f"--seeds {text!r} selects nothing")
    return seeds


def _stem(path: str) -> str:
    root, ext = os.path.splitext(path)
    return root if ext else path


def _summary_line(s: harness.RunSummary) -> str:
    if s.reached:
        return (f"{s.scheme}: reached loss {s.final_loss:.4g} in {s.iterations} "
                f"iterations, {s.time_to_threshold:.6g} s, "
                f"{s.comm_to_threshold} messages, "
                f"{s.comp_to_threshold} gradient samples")
    return (f"{s.scheme}: loss {s.final_loss:.4g} after {s.iterations} "
            f"iterations (threshold not reached)")


def _cmd_run(ns: argparse.Namespace) -> int:
    scheme = ns.scheme or "cada"
    cfg = _experiment_config(ns, scheme)
    records, summary = harness.run(cfg)
    if ns.out:
        parent = os.path.dirname(ns.out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        harness.emit_csv(records, ns.out)
        if ns.plot:
            report.render_run(records, _stem(ns.out), scheme)
        print(_summary_line(summary))
    else:
        sys.stdout.write(harness.format_csv(records))
    return 0


def _cmd_compare(ns: argparse.Namespace) -> int:
    schemes = _scheme_list(ns)
    configs = [_experiment_config(ns, s, i, len(schemes))
               for i, s in enumerate(schemes)]
    seed = ns.seed if ns.seed is not None else 0
    results = harness.compare(configs, seed)
    if ns.out:
        os.makedirs(ns.out, exist_ok=True)
        for cfg, records, _ in results:
            harness.emit_csv(records, os.path.join(ns.out, f"{cfg.scheme}.csv"))
        harness.emit_summary_csv([r[2] for r in results],
                                 os.path.join(ns.out, "summary.csv"))
        if ns.plot:
            report.render_comparison(results, os.path.join(ns.out, "compare"))
    for _, _, summary in results:
        print(_summary_line(summary))
    return 0


def _cmd_sweep(ns: argparse.Namespace) -> int:
    schemes = _scheme_list(ns)
    configs = [_experiment_config(ns, s, i, len(schemes))
               for i, s in enumerate(schemes)]
    summaries = harness.sweep(configs, _parse_seeds(ns.seeds))
    if ns.out:
        harness.emit_summary_csv(summaries, ns.out)
        print(f"wrote {len(summaries)} run summaries to {ns.out}")
    else:
        sys.stdout.write(harness.format_summary_csv(summaries))
    return 0


def _analyze_rows(ns: argparse.Namespace) -> list[tuple[str, float, float | None]]:
    cfg = _experiment_config(ns, "g-cada")  # carries M, G, eta, D, b, dataset
    dataset = build_dataset(cfg.dataset, cfg.seed)
    worker_plan = shard(dataset, cfg.workers, mode=PER_WORKER_DISJOINT)
    group_plan = shard(dataset, cfg.workers, cfg.groups, PER_GROUP_REPLICATED)
    scale = cfg.batch_size if cfg.smoothness_scale == "batch" else 1.0
    worker_ls = [smoothness_constant(sh, dataset, scale / sh.size)
                 for sh in worker_plan.shards]
    group_ls = [smoothness_constant(sh, dataset, scale / sh.size)
                for sh in group_plan.shards]
    inputs = analysis.AnalysisInputs.from_scalar_c(
        cfg.workers, cfg.groups, cfg.group_size, cfg.eta, cfg.max_age,
        cfg.batch_size, cfg.threshold_c, worker_ls, group_ls)
    if ns.cds:
        cds = tuple(float(x) for x in ns.cds.split(","))
        inputs = replace(inputs, cds=cds)

    mbar = analysis.selection_bound_workers(inputs)
    gbar = analysis.selection_bound_groups(inputs)
    loads = analysis.predicted_loads(inputs, mbar, gbar)
    times = analysis.predicted_times(inputs, mbar, gbar)
    reps, seed = ns.mc_reps, cfg.seed
    m_sel = max(1, round(mbar))
    g_sel = max(1, round(gbar))
    return [
        ("avg_selected_workers_bound", mbar, None),
        ("avg_selected_groups_bound", gbar, None),
        ("t_iter_d_adam", times.t_d_adam,
         analysis.mc_order_stat_mean(cfg.workers, cfg.workers, cfg.eta, reps, seed)),
        ("t_iter_cada", times.t_cada,
         analysis.mc_order_stat_mean(m_sel, m_sel, cfg.eta, reps, seed)),
        ("t_iter_g_cada", times.t_g_cada,
         analysis.mc_group_time_mean(g_sel, cfg.group_size, cfg.eta, reps, seed)),
        ("comm_iter_d_adam", loads.comm_d_adam, None),
        ("comm_iter_cada_bound", loads.comm_cada, None),
        ("comm_iter_g_cada_bound", loads.comm_g_cada, None),
        ("comp_iter_d_adam", loads.comp_d_adam, None),
        ("comp_iter_cada_bound", loads.comp_cada, None),
        ("comp_iter_g_cada_bound", loads.comp_g_cada, None),
    ]


def _cmd_analyze(ns: argparse.Namespace) -> int:
    rows = _analyze_rows(ns)
    width = max(len(name) for name, _, _ in rows)
    print(f"{'quantity':<{width}}  {'predicted':>14}  {'monte_carlo':>14}")
    for name, pred, mc in rows:
        mc_text = f"{mc:>14.6g}" if mc is not None else f"{'-':>14}"
        print(f"{name:<{width}}  {pred:>14.6g}  {mc_text}")
    if ns.out:
        with open(ns.out, "w", newline="") as fh:
            fh.write("quantity,predicted,monte_carlo\n")
            for name, pred, mc in rows:
                fh.write(f"{name},{format(pred, '.9g')},"
                         f"{format(mc, '.9g') if mc is not None else ''}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcada",
        description="straggler- and communication-aware distributed SGD simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scheme")
    _add_experiment_flags(p_run, single_scheme=True)
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="coupled-randomness comparison across schemes")
    _add_experiment_flags(p_cmp, single_scheme=False)
    p_cmp.set_defaults(func=_cmd_compare)

    p_ana = sub.add_parser("analyze",
                           help="expected time/load table with MC validation")
    _add_experiment_flags(p_ana, single_scheme=True)
    p_ana.add_argument("--cds", metavar="c1,..,cD",
                       help="per-age constants for the selection bounds")
    p_ana.add_argument("--mc-reps", type=int, default=20000)
    p_ana.set_defaults(func=_cmd_analyze)

    p_sweep = sub.add_parser("sweep", help="schemes x seeds, summary CSV")
    _add_experiment_flags(p_sweep, single_scheme=False)
    p_sweep.add_argument("--seeds", metavar="a:b|s1,s2,..",
                         help="seed range (half-open) or comma list")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        _merge_config_file(ns)
        return ns.func(ns)
    except (ConfigurationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
