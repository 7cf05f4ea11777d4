"""Closed-form per-iteration expectations and bounds, plus Monte Carlo checks.

Everything here is a pure function of scalar inputs. For exponential compute
times the a-th order statistic out of b has mean eta*(H_b - H_{b-a}); the
fastest-of-a-group time is exponential with mean eta/M_G, and the slowest of
several group times comes out of a CDF-power integral that is evaluated by
quadrature (and, for exponentials, cross-checked against the closed form).

Selection-rate bounds bin each unit's squared smoothness constant into age
buckets delimited by c_d/(d*M^2); a unit in bucket d refreshes about every
d+1 iterations. The printed lower boundary of bucket 0 would be an empty
interval, so the top bucket is unbounded above and buckets partition by
half-open intervals [lower, upper).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, exp, isinf

import numpy as np
from scipy import integrate

from . import rng
from .errors import ContractError

INTEGRAND_CUTOFF = 1e-12
QUADRATURE_ABS_TOL = 1e-8


@dataclass(frozen=True)
class AnalysisInputs:
    workers: int                      # M
    groups: int                       # G
    group_size: int                   # M_G
    eta: float                        # mean compute time (seconds)
    max_age: int                      # D
    batch_size: int                   # gradient samples per mini-batch
    cds: tuple[float, ...]            # per-age constants c_1..c_D
    worker_smoothness: tuple[float, ...]
    group_smoothness: tuple[float, ...]

    def __post_init__(self):
        if self.workers != self.groups * self.group_size:
            raise ContractError("workers must equal groups * group_size")
        if min(self.workers, self.groups, self.group_size, self.max_age,
               self.batch_size) < 1 or self.eta <= 0:
            raise ContractError("all analysis inputs must be positive")
        if len(self.cds) != self.max_age:
            raise ContractError("need one c_d per age 1..D")

    @classmethod
    def from_scalar_c(cls, workers, groups, group_size, eta, max_age,
                      batch_size, c, worker_smoothness, group_smoothness):
        return cls(workers, groups, group_size, eta, max_age, batch_size,
                   cds=tuple(float(c) for _ in range(max_age)),
                   worker_smoothness=tuple(worker_smoothness),
                   group_smoothness=tuple(group_smoothness))


@dataclass(frozen=True)
class LoadPredictions:
    comm_d_adam: float       # exact: 2M
    comm_cada: float         # bound: 2 * avg selected workers
    comm_g_cada: float       # bound: avg selected groups * (M_G + 1)
    comp_d_adam: float       # exact: b*M gradient samples
    comp_cada: float         # bound: b * avg selected workers
    comp_g_cada: float       # bound: b * avg selected groups * M_G


@dataclass(frozen=True)
class TimePredictions:
    t_d_adam: float          # eta * H_M
    t_cada: float            # eta * H_round(avg selected workers)
    t_g_cada: float          # slowest of round(avg selected groups) group minima


def harmonic(a: int) -> float:
    """H_a = sum_{k=1}^{a} 1/k."""
    if a < 1:
        raise ContractError("harmonic number needs a >= 1")
    return sum(1.0 / k for k in range(1, a + 1))


def expected_order_stat(a: int, b: int, eta: float) -> float:
    """Mean of the a-th smallest of b i.i.d. exponentials: eta*(H_b - H_{b-a})."""
    if not 1 <= a <= b:
        raise ContractError(f"need 1 <= a <= b, got a={a}, b={b}")
    tail = harmonic(b - a) if b > a else 0.0
    return eta * (harmonic(b) - tail)


def group_cdf(x: float, group_size: int, eta: float) -> float:
    """CDF of a group's fastest-member time at x.

    Binomial form sum_j C(M_G, j) F^j (1-F)^{M_G-j} over j >= 1 with
    F(x) = 1 - exp(-x/eta); algebraically 1 - (1-F(x))^{M_G}.
    """
    if x < 0:
        raise ContractError("x must be non-negative")
    f = 1.0 - exp(-x / eta)
    return sum(comb(group_size, j) * f**j * (1.0 - f) ** (group_size - j)
               for j in range(1, group_size + 1))


def expected_group_max(a: int, groups: int, group_size: int, eta: float) -> float:
    """Mean of the slowest of ``a`` i.i.d. group-minimum times, by quadrature.

    Integrates 1 - F_group(x)^a from 0 up to an adaptive cutoff where the
    integrand drops below 1e-12. For exponential inputs this equals
    (eta/M_G) * H_a.
    """
    if not 1 <= a <= groups:
        raise ContractError(f"need 1 <= a <= groups, got a={a}, groups={groups}")

    def integrand(x: float) -> float:
        return 1.0 - group_cdf(x, group_size, eta) ** a

    upper = eta
    while integrand(upper) > INTEGRAND_CUTOFF:
        upper *= 2.0
        if isinf(upper):
            raise ContractError("integrand does not decay")
    value, err = integrate.quad(integrand, 0.0, upper,
                                epsabs=QUADRATURE_ABS_TOL, limit=200)
    if err > 1e-6:
        from .errors import NumericalError
        raise NumericalError("group-time quadrature did not converge", partial=value)
    return float(value)


def _bound(scale: int, smoothness, cds, max_age: int) -> float:
    # thresholds[d] = upper boundary of bucket d; bucket d = [thr[d+1], thr[d])
    thresholds = [float("inf")] + [cds[d - 1] / (d * scale * scale)
                                   for d in range(1, max_age + 1)] + [0.0]
    total = 0.0
    for smooth in smoothness:
        l2 = smooth * smooth
        for d in range(max_age + 1):
            if l2 >= thresholds[d + 1]:
                total += 1.0 / (d + 1)
                break
    return total


def selection_bound_workers(inputs: AnalysisInputs) -> float:
    """Upper bound on the average number of workers refreshed per iteration."""
    if len(inputs.worker_smoothness) != inputs.workers:
        raise ContractError("need one smoothness constant per worker")
    return _bound(inputs.workers, inputs.worker_smoothness, inputs.cds,
                  inputs.max_age)


def selection_bound_groups(inputs: AnalysisInputs) -> float:
    """Upper bound on the average number of groups refreshed per iteration."""
    if len(inputs.group_smoothness) != inputs.groups:
        raise ContractError("need one smoothness constant per group")
    return _bound(inputs.groups, inputs.group_smoothness, inputs.cds,
                  inputs.max_age)


def predicted_loads(inputs: AnalysisInputs, avg_workers: float,
                    avg_groups: float) -> LoadPredictions:
    """Per-iteration communication and computation loads for the three schemes."""
    b = inputs.batch_size
    return LoadPredictions(
        comm_d_adam=2.0 * inputs.workers,
        comm_cada=2.0 * avg_workers,
        comm_g_cada=avg_groups * (inputs.group_size + 1),
        comp_d_adam=float(b * inputs.workers),
        comp_cada=b * avg_workers,
        comp_g_cada=b * avg_groups * inputs.group_size,
    )


def predicted_times(inputs: AnalysisInputs, avg_workers: float,
                    avg_groups: float) -> TimePredictions:
    """Expected per-iteration wall clock for the three schemes.

    Non-integer average selection counts are rounded to the nearest integer
    (floor 1) before indexing the order statistic; a documented approximation.
    """
    if avg_workers > inputs.workers or avg_groups > inputs.groups:
        raise ContractError("averages cannot exceed the population")
    m_sel = max(1, round(avg_workers))
    g_sel = max(1, round(avg_groups))
    return TimePredictions(
        t_d_adam=expected_order_stat(inputs.workers, inputs.workers, inputs.eta),
        t_cada=expected_order_stat(m_sel, m_sel, inputs.eta),
        t_g_cada=expected_group_max(g_sel, inputs.groups, inputs.group_size,
                                    inputs.eta),
    )


def mc_order_stat_mean(a: int, b: int, eta: float, reps: int,
                       seed: int = 0) -> float:
    """Monte Carlo mean of the a-th smallest of b exponentials."""
    if not 1 <= a <= b:
        raise ContractError(f"need 1 <= a <= b, got a={a}, b={b}")
    u = rng.stream(seed, rng.DOMAIN_MONTE_CARLO).random((reps, b))
    t = -eta * np.log1p(-u)
    ath = t.max(axis=1) if a == b else np.partition(t, a - 1, axis=1)[:, a - 1]
    return float(ath.mean())


def mc_group_time_mean(a: int, group_size: int, eta: float, reps: int,
                       seed: int = 0) -> float:
    """Monte Carlo mean of the slowest of ``a`` group-minimum times."""
    u = rng.stream(seed, rng.DOMAIN_MONTE_CARLO).random((reps, a, group_size))
    t = -eta * np.log1p(-u)
    return float(t.min(axis=2).max(axis=1).mean())
