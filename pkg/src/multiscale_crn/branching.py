"""Branching-process view of the early viral infection.

Each template molecule lives an Exp(0.25) time and meanwhile produces
genomes at rate 1, so its offspring count is shifted-geometric,
``P(xi = k) = (1/5)(4/5)^k``. Genomes turn back into templates, so extinction
is the event that ``S_n = 1 + sum (xi_i - 1)`` hits zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring law on {0, 1, ...} given by its pmf.

    ``pgf`` may be supplied in closed form; otherwise it is summed from the
    pmf up to ``support_cap``.
    """

    pmf: Callable[[int], float]
    pgf_closed: Callable[[float], float] | None = None
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None
    support_cap: int = 10_000

    def total_mass(self) -> float:
        return math.fsum(self.pmf(k) for k in range(self.support_cap))

    @property
    def mean(self) -> float:
        return math.fsum(k * self.pmf(k) for k in range(self.support_cap))


def geometric_law(p_stop: float = 0.2) -> OffspringLaw:
    """``P(xi = k) = p (1-p)^k``; the default p = 1/5 has mean 4."""
    q = 1.0 - p_stop
    return OffspringLaw(
        pmf=lambda k: p_stop * q**k,
        pgf_closed=lambda s: p_stop / (1.0 - q * s),
        # numpy's geometric counts trials, so subtract one for failures
        sampler=lambda rng, n: rng.geometric(p_stop, size=n) - 1,
    )


def viral_offspring_law(kappa1: float = 1.0, kappa4: float = 0.25) -> OffspringLaw:
    """Offspring law of a template producing at rate ``kappa1`` over an Exp(``kappa4``) lifetime."""
    return geometric_law(kappa4 / (kappa4 + kappa1))


DEFAULT_LAW = viral_offspring_law()


def pgf_eval(law: OffspringLaw, s: float) -> float:
    if not 0.0 <= s <= 1.0:
        raise ValueError("pgf argument must lie in [0, 1]")
    if law.pgf_closed is not None:
        return law.pgf_closed(s)
    return math.fsum(law.pmf(k) * s**k for k in range(law.support_cap))


def extinction_probability(law: OffspringLaw = DEFAULT_LAW, tol: float = 1e-12,
                           max_iter: int = 10_000_000) -> float:
    """Smallest root of ``s = pgf(s)`` by iteration from 0."""
    s = 0.0
    for _ in range(max_iter):
        nxt = pgf_eval(law, s)
        if abs(nxt - s) < tol * 1e-3:
            return nxt
        s = nxt
    return s


def walk_extinction_mc(law: OffspringLaw = DEFAULT_LAW, n_walks: int = 100_000, cap: int = 10_000,
                       seed: int = 0) -> tuple[float, float]:
    """Monte Carlo of ``S_n = 1 + sum (xi_i - 1)`` hitting 0 within ``cap`` steps.

    Returns (estimate, standard error). Walks still alive at the cap count as
    surviving. A walk sitting at level ``S`` needs at least ``S`` more steps
    to die, so walks with ``S > cap - n`` are retired early as survivors;
    this is exact with respect to the capped definition.
    """
    if law.sampler is None:
        raise ValueError("law has no sampler")
    rng = np.random.default_rng(seed)
    level = np.ones(n_walks, dtype=np.int64)
    alive = np.arange(n_walks)
    extinct = 0
    for n in range(cap):
        if alive.size == 0:
            break
        level[alive] += law.sampler(rng, alive.size) - 1
        dead = level[alive] == 0
        extinct += int(dead.sum())
        alive = alive[~dead]
        alive = alive[level[alive] <= cap - n - 1]
    p = extinct / n_walks
    return p, math.sqrt(max(p * (1 - p), 0.0) / n_walks)


def q_matrix(n: float) -> np.ndarray:
    """Mean matrix of the two-type (template, genome) process without reaction f."""
    e = 2.5 * n ** (-2.0 / 3.0)
    return np.array([[-0.25, e], [1.0, -e]])


def growth_rate(n: float) -> float:
    """Largest eigenvalue of :func:`q_matrix`, in closed form."""
    if n <= 0:
        raise ValueError("n must be positive")
    e = 2.5 * n ** (-2.0 / 3.0)
    b = 0.25 + e
    disc = b * b + 3.0 * e
    # (-b + sqrt(disc)) / 2 without cancellation
    return (3.0 * e) / (2.0 * (b + math.sqrt(disc)))


def rho(n: float) -> float:
    """Weight making ``(rho, 1)`` the left eigenvector: ``rho = 1 + lambda n^(2/3) / 2.5``."""
    return 1.0 + growth_rate(n) * n ** (2.0 / 3.0) / 2.5


def eigen_residuals(n: float) -> tuple[float, float]:
    lam, r = growth_rate(n), rho(n)
    return (1.0 - 0.25 * r) - lam * r, 2.5 * (r - 1.0) * n ** (-2.0 / 3.0) - lam


@dataclass(frozen=True)
class EstablishmentSpec:
    n: float
    eps: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps < 2:
            raise ValueError("eps must lie in (0, 2)")
        if self.n <= 1:
            raise ValueError("n must exceed 1")

    @property
    def rho(self) -> float:
        return rho(self.n)

    @property
    def threshold(self) -> float:
        return self.eps * self.n ** (2.0 / 3.0)


def predict_establishment_time(n: float, eps: float = 1.0) -> float:
    """Leading-order establishment time ``(4/45) n^(2/3) log n`` (independent of eps)."""
    if n <= 1:
        raise ValueError("n must exceed 1")
    if not 0 < eps < 2:
        raise ValueError("eps must lie in (0, 2)")
    return 4.0 / 45.0 * n ** (2.0 / 3.0) * math.log(n)


def predict_level_crossing_gap(n: float, eps1: float, eps2: float) -> float:
    """Lower-edge time between crossing ``eps1`` and ``eps2``: ``(2/15) log(eps2/eps1) n^(2/3)``."""
    if not 0 < eps1 <= eps2 < 2:
        raise ValueError("need 0 < eps1 <= eps2 < 2")
    return 2.0 / 15.0 * math.log(eps2 / eps1) * n ** (2.0 / 3.0)
