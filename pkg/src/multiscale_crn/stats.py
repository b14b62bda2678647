"""Ensemble execution, moment estimation and goodness-of-fit tests.

Run ``i`` of an ensemble always uses seed ``base ^ i``. Runs are grouped in
fixed chunks whose accumulators are merged in index order, so results do
not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .network import Network
from .simulate import (LinearPredicate, RunConfig, StopRule, Trajectory, ssa_run,
                       trajectory_seed)

CHUNK = 64


class GofError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


# --------------------------------------------------------------------------
# mergeable accumulators

class Welford:
    """Streaming mean and covariance of vectors (Chan et al. pairwise merge)."""

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    def add(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += np.outer(d, x - self.mean)

    def merge(self, other: "Welford") -> "Welford":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean = self.mean + d * (other.n / n)
        self.m2 = self.m2 + other.m2 + np.outer(d, d) * (self.n * other.n / n)
        self.n = n
        return self

    @property
    def cov(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.m2, np.nan)
        return self.m2 / (self.n - 1)


@dataclass
class EnsembleStats:
    """Means, (co)variances and standard errors of named observables."""

    names: list[str]
    n_runs: int
    mean: np.ndarray
    cov: np.ndarray
    n_truncated: int = 0
    samples: np.ndarray | None = None  # (n_runs, n_obs) if kept

    @property
    def var(self) -> np.ndarray:
        return np.clip(np.diag(self.cov), 0.0, None)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.var / self.n_runs)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def get_mean(self, name):
        return float(self.mean[self.index(name)])

    def get_var(self, name):
        return float(self.var[self.index(name)])

    def get_se(self, name):
        return float(self.se[self.index(name)])

    def var_se(self, name) -> float:
        """Standard error of the sample variance, from the fourth central moment."""
        if self.samples is None:
            raise ValueError("variance SE needs kept samples")
        return variance_se(self.samples[:, self.index(name)])

    def csv(self, times: Sequence[float] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "observable", "mean", "var", "se", "n"])
        for j, name in enumerate(self.names):
            t, obs = _split_name(name)
            w.writerow([t, obs, repr(float(self.mean[j])), repr(float(self.var[j])),
                        repr(float(self.se[j])), self.n_runs])
        return buf.getvalue()


def _split_name(name: str) -> tuple[str, str]:
    if "@" in name:
        obs, t = name.rsplit("@", 1)
        return t, obs
    return "", name


def variance_se(x) -> float:
    x = np.asarray(x, dtype=float)
    n = len(x)
    m = x.mean()
    m2 = np.mean((x - m) ** 2)
    m4 = np.mean((x - m) ** 4)
    return math.sqrt(max(m4 - m2 * m2 * (n - 3) / (n - 1), 0.0) / n)


def covariance_se(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = len(x)
    p = (x - x.mean()) * (y - y.mean())
    return float(np.std(p, ddof=1) / math.sqrt(n))


def stats_from_samples(names: Sequence[str], samples, n_truncated: int = 0, keep: bool = True) -> EnsembleStats:
    samples = np.asarray(samples, dtype=float)
    acc = Welford(samples.shape[1])
    for lo in range(0, len(samples), CHUNK):
        part = Welford(samples.shape[1])
        for row in samples[lo:lo + CHUNK]:
            part.add(row)
        acc.merge(part)
    return EnsembleStats(list(names), acc.n, acc.mean, acc.cov, n_truncated, samples if keep else None)


# --------------------------------------------------------------------------
# ensembles

Observable = Callable[[Trajectory], Sequence[float]]


@dataclass(frozen=True)
class GridObservable:
    """Species (or reaction counts) read off the run's grid, named ``X@t``."""

    times: tuple[float, ...]
    species: tuple[str, ...] = ()
    reactions: tuple[str, ...] = ()

    def names(self) -> list[str]:
        return [f"{s}@{t:g}" for t in self.times for s in (*self.species, *self.reactions)]


def _run_one(net, x0, stop, cfg_method, seed, grid, record):
    return ssa_run(net, x0, stop, RunConfig(seed, cfg_method), record=record, grid=grid)


def run_ensemble(net: Network, x0, stop: StopRule, n_runs: int, base_seed: int,
                 observables: GridObservable | None = None, *, method: str = "direct",
                 per_run: Callable[[Trajectory], Sequence[float]] | None = None,
                 per_run_names: Sequence[str] | None = None, record: bool = False,
                 threads: int = 1, keep_samples: bool = True,
                 grid: Sequence[float] | None = None) -> EnsembleStats:
    """Simulate ``n_runs`` trajectories and summarize observables.

    Grid observables are read from the kernel's grid recording. ``per_run``
    maps a finished trajectory to extra values (set ``record=True`` if it
    needs the jumps). ``grid`` adds recording times that ``per_run`` can read
    from ``grid_states`` without turning them into observables. Truncated
    runs are counted, and their grid values are left out of the statistics
    only if the grid was not reached.
    """
    if n_runs < 2:
        raise ValueError("need at least 2 runs")
    obs_times = list(observables.times) if observables else []
    if grid is not None or obs_times:
        grid = np.unique(np.concatenate([np.asarray(obs_times, float), np.asarray(grid if grid is not None else [], float)]))
    at = [int(np.searchsorted(grid, t)) for t in obs_times]
    sp_idx = [net.species_index(s) for s in observables.species] if observables else []
    rx_idx = [net.reaction_index(r) for r in observables.reactions] if observables else []
    names = (observables.names() if observables else []) + list(per_run_names or [])

    def one(i):
        tr = _run_one(net, x0, stop, method, trajectory_seed(base_seed, i), grid, record)
        row = []
        if observables:
            ng = len(tr.grid_states)
            for j in at:
                if j < ng:
                    row += [float(tr.grid_states[j, s]) for s in sp_idx]
                    row += [float(tr.grid_counts[j, r]) for r in rx_idx]
                else:
                    row += [math.nan] * (len(sp_idx) + len(rx_idx))
        if per_run is not None:
            row += [float(v) for v in per_run(tr)]
        return row, tr.truncated

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, range(n_runs)))
    else:
        results = [one(i) for i in range(n_runs)]
    rows = np.array([r for r, _ in results], dtype=float).reshape(n_runs, len(names))
    n_trunc = sum(1 for _, t in results if t)
    ok = ~np.isnan(rows).any(axis=1)
    return stats_from_samples(names, rows[ok], n_trunc, keep_samples)


@dataclass
class ConditionedResult:
    stats: EnsembleStats | None
    attempts: int
    accepted: int
    partial: bool
    n_truncated: int = 0
    hit_times: np.ndarray = field(default_factory=lambda: np.array([]))
    accepted_seeds: list[int] = field(default_factory=list)

    @property
    def acceptance_fraction(self) -> float:
        return self.accepted / self.attempts if self.attempts else math.nan

    @property
    def acceptance_se(self) -> float:
        p = self.acceptance_fraction
        return math.sqrt(p * (1 - p) / self.attempts) if self.attempts else math.nan


def conditioned_ensemble(net: Network, x0, predicate: LinearPredicate, n_accepted: int, base_seed: int,
                         *, after: Callable[[Trajectory, np.random.Generator], Sequence[float]] | None = None,
                         names: Sequence[str] | None = None, max_attempts: int | None = None,
                         max_events: int = 10**9, method: str = "direct") -> ConditionedResult:
    """Rejection sampling on the predicate being reached.

    Attempt ``i`` runs with seed ``base ^ i`` until the predicate holds or the
    chain is absorbed. For accepted attempts ``after(trajectory, rng)`` may
    continue the run with the same generator and return observables.
    """
    max_attempts = max_attempts if max_attempts is not None else 100 * max(n_accepted, 1)
    rows, hits, seeds = [], [], []
    attempts = accepted = n_trunc = 0
    while accepted < n_accepted and attempts < max_attempts:
        seed = trajectory_seed(base_seed, attempts)
        attempts += 1
        rng = np.random.Generator(np.random.PCG64(seed))
        tr = ssa_run(net, x0, StopRule(math.inf, predicate, max_events), RunConfig(seed, method),
                     record=False, rng=rng)
        if tr.truncated:
            n_trunc += 1
            continue
        if tr.hit_time is None:
            continue
        accepted += 1
        hits.append(tr.hit_time)
        seeds.append(seed)
        if after is not None:
            rows.append([float(v) for v in after(tr, rng)])
    st = None
    if rows:
        st = stats_from_samples(list(names or [f"obs{j}" for j in range(len(rows[0]))]), rows)
    return ConditionedResult(st, attempts, accepted, accepted < n_accepted, n_trunc,
                             np.array(hits), seeds)


def establishment_fraction(net: Network, x0, predicate: LinearPredicate, n_attempts: int, base_seed: int,
                           max_events: int = 10**9) -> tuple[float, float, np.ndarray]:
    """Fraction of ``n_attempts`` runs reaching the predicate (fixed number of attempts)."""
    hits = []
    for i in range(n_attempts):
        seed = trajectory_seed(base_seed, i)
        tr = ssa_run(net, x0, StopRule(math.inf, predicate, max_events), RunConfig(seed), record=False)
        if tr.truncated:
            raise BudgetExceeded(f"attempt {i} truncated")
        if tr.hit_time is not None:
            hits.append(tr.hit_time)
    p = len(hits) / n_attempts
    return p, math.sqrt(p * (1 - p) / n_attempts), np.array(hits)


# --------------------------------------------------------------------------
# goodness of fit

@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    bins: tuple = ()

    def csv_row(self, test: str) -> str:
        return f"{test},{self.statistic!r},{self.dof},{self.p_value!r}"


def chi2_sf(x: float, dof: int) -> float:
    return float(sps.chi2.sf(x, dof))


def _merge_bins(expected: np.ndarray, observed: np.ndarray, min_expected: float = 5.0):
    exp_b, obs_b = [], []
    e_acc = o_acc = 0.0
    for e, o in zip(expected, observed):
        e_acc += e
        o_acc += o
        if e_acc >= min_expected:
            exp_b.append(e_acc)
            obs_b.append(o_acc)
            e_acc = o_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_b:
            exp_b[-1] += e_acc
            obs_b[-1] += o_acc
        else:
            exp_b.append(e_acc)
            obs_b.append(o_acc)
    return np.array(exp_b), np.array(obs_b)


def gof_categorical(samples, pmf: Callable[[np.ndarray], np.ndarray], support_max: int,
                    min_expected: float = 5.0) -> GofResult:
    """Chi-square test of integer samples against a pmf on ``0..support_max``.

    The last cell absorbs the upper tail, so the cell probabilities sum to 1.
    Adjacent cells are merged left to right until each expected count reaches
    ``min_expected``; leftovers join the last bin.
    """
    x = np.asarray(samples)
    if x.size == 0:
        raise GofError("no samples")
    if np.any(x != np.round(x)) or np.any(x < 0):
        raise GofError("samples must be nonnegative integers")
    x = x.astype(np.int64)
    n = x.size
    top = max(int(support_max), int(x.max()))
    k = np.arange(top + 1)
    probs = np.asarray(pmf(k), dtype=float)
    probs[-1] = max(0.0, 1.0 - probs[:-1].sum())
    observed = np.bincount(x, minlength=top + 1).astype(float)
    e, o = _merge_bins(n * probs, observed, min_expected)
    if np.any((e <= 0) & (o > 0)):
        return GofResult(math.inf, max(len(e) - 1, 0), 0.0, tuple(zip(e, o)))
    if len(e) < 2:
        raise GofError("fewer than two bins after merging; need more samples")
    mask = e > 0
    stat = float(np.sum((o[mask] - e[mask]) ** 2 / e[mask]))
    dof = len(e) - 1
    return GofResult(stat, dof, chi2_sf(stat, dof), tuple(zip(e, o)))


def gof_poisson(samples, mean: float, min_expected: float = 5.0) -> GofResult:
    if mean <= 0:
        raise GofError("Poisson mean must be positive")
    x = np.asarray(samples)
    top = int(max(x.max() if x.size else 0, sps.poisson.ppf(1 - 1e-12, mean)))
    return gof_categorical(x, lambda k: sps.poisson.pmf(k, mean), top, min_expected)


def gof_binomial(samples, n: int, p: float, min_expected: float = 5.0) -> GofResult:
    if not 0 <= p <= 1:
        raise GofError("p must lie in [0, 1]")
    x = np.asarray(samples)
    if x.size == 0:
        raise GofError("no samples")
    if p in (0.0, 1.0):
        target = 0 if p == 0 else n
        bad = int(np.sum(x != target))
        return GofResult(math.inf if bad else 0.0, 0, 0.0 if bad else 1.0)
    if np.any(x > n):
        return GofResult(math.inf, 0, 0.0)
    return gof_categorical(x, lambda k: sps.binom.pmf(k, n, p), n, min_expected)


def gof_table(samples, probabilities: np.ndarray, min_expected: float = 5.0) -> GofResult:
    """Chi-square of integer-coded samples against explicit cell probabilities."""
    probs = np.asarray(probabilities, float)
    x = np.asarray(samples)
    if x.size and x.max() >= len(probs):
        return GofResult(math.inf, 0, 0.0)
    return gof_categorical(samples, lambda k: probs[k], len(probs) - 1, min_expected)


@dataclass(frozen=True)
class ZScore:
    name: str
    estimate: float
    oracle: float
    se: float
    z: float

    @property
    def flagged(self) -> bool:
        return not abs(self.z) <= 3.0


def compare_to_oracle(stats: EnsembleStats, oracle: dict[str, float], what: str = "mean") -> list[ZScore]:
    """z = (estimate - oracle) / SE for each named observable; |z| > 3 is flagged.

    ``what`` is "mean" or "var"; variance SEs use the kept samples.
    """
    out = []
    for name, target in oracle.items():
        if what == "mean":
            est, se = stats.get_mean(name), stats.get_se(name)
        elif what == "var":
            est, se = stats.get_var(name), stats.var_se(name)
        else:
            raise ValueError("what must be 'mean' or 'var'")
        if se == 0:
            z = 0.0 if est == target else math.copysign(math.inf, est - target)
        else:
            z = (est - target) / se
        out.append(ZScore(name, est, float(target), se, z))
    return out


def gof_csv(results: dict[str, GofResult]) -> str:
    lines = ["test,statistic,dof,p"] + [r.csv_row(name) for name, r in results.items()]
    return "\n".join(lines) + "\n"
