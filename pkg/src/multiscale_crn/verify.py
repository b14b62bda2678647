"""Monte Carlo and exact checks of each exemplar against its closed-form laws.

Every check function takes ``level`` ("fast" or "full") and a base seed and
returns a list of :class:`Check`. ``fast`` uses reduced run counts; ``full``
uses the counts the tolerances were designed for.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from . import branching, exemplars
from .cme import solve_cme
from .limits import (build_reduced, diffusion_approx, fluid_limit, integrate_ode, logistic_solution,
                     moment_polynomial, printed_recursion_residual, simulate_em_ensemble)
from .scaling import LimitCase, classify_case, propose_exponents
from .simulate import LinearPredicate, RunConfig, StopRule, ssa_run
from .stats import (GridObservable, conditioned_ensemble, covariance_se, establishment_fraction,
                    gof_binomial, gof_poisson, gof_table, run_ensemble, variance_se)

DEFAULT_SEED = 20240611
LEVELS = ("fast", "full")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _pick(level: str, full, fast):
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    return full if level == "full" else fast


def _within_se(est, target, se, k=3.0) -> bool:
    return abs(est - target) <= k * se


def _threads() -> int:
    return int(os.environ.get("MULTISCALE_CRN_THREADS", "1"))


# --------------------------------------------------------------------------
# crystallization

def crystallization_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    ex = exemplars.exemplar("crystallization")
    net = ex.network
    runs = _pick(level, 10_000, 1_000)
    grid = np.linspace(0.0, 10.0, 201)
    zA = np.array([ex.oracle("Z_A", t) for t in grid])
    n0 = float(ex.scaling.n0)
    worst = [0.0]

    def sup_err(tr):
        err = float(np.max(np.abs(tr.grid_states[:, 0] / n0 - zA)))
        worst[0] = max(worst[0], err)
        return [err]

    st = run_ensemble(net, None, StopRule(10.0), runs, seed, GridObservable((10.0,), ("C",)),
                      per_run=sup_err, per_run_names=["sup_err"], threads=_threads(), grid=grid)
    xc = st.samples[:, 0]
    g = gof_binomial(xc, 10, ex.oracle("p", 10.0))
    mean, se = st.get_mean("C@10"), st.get_se("C@10")
    var, vse = st.get_var("C@10"), st.var_se("C@10")
    return [
        Check("crystallization C(10) ~ Binomial(10, 1/2)", g.p_value > 1e-3, f"chi2={g.statistic:.3f} dof={g.dof} p={g.p_value:.4g}"),
        Check("crystallization mean C(10)", _within_se(mean, 5.0, se), f"{mean:.4f} vs 5 (se {se:.4f})"),
        Check("crystallization var C(10)", _within_se(var, ex.oracle("var_Z_C", 10.0), vse),
              f"{var:.4f} vs 2.5 (se {vse:.4f})"),
        Check("crystallization Z_A paths", worst[0] < 0.01, f"worst sup error {worst[0]:.2e} over {runs} runs"),
    ]


# --------------------------------------------------------------------------
# enzyme kinetics

def enzyme_1_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    ex = exemplars.exemplar("enzyme-1")
    times = (10.0, 20.0, 30.0)
    st = run_ensemble(ex.network, None, StopRule(30.0), _pick(level, 1000, 200), seed,
                      GridObservable(times, ("P",)), threads=_threads())
    out = []
    for t in times:
        m, target = st.get_mean(f"P@{t:g}"), ex.oracle("X_p", t)
        out.append(Check(f"enzyme-1 mean X_p({t:g})", abs(m - target) <= 0.05 * target,
                         f"{m:.3f} vs {target:.3f} (5% band)"))
    return out


def enzyme_2_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    ex = exemplars.exemplar("enzyme-2")
    st = run_ensemble(ex.network, None, StopRule(5.0), _pick(level, 2000, 500), seed,
                      GridObservable((5.0,), ("P",)), threads=_threads())
    m, se = st.get_mean("P@5"), st.get_se("P@5")
    g = gof_poisson(st.samples[:, 0], ex.oracle("mean_X_p", 5.0))
    return [
        Check("enzyme-2 mean X_p(5)", _within_se(m, 5.0, se), f"{m:.4f} vs 5 (se {se:.4f})"),
        Check("enzyme-2 X_p(5) ~ Poisson(5)", g.p_value > 1e-3, f"chi2={g.statistic:.3f} dof={g.dof} p={g.p_value:.4g}"),
    ]


# --------------------------------------------------------------------------
# isomerization

def isom_1_slow_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    ex = exemplars.exemplar("isom-1")
    horizon = float(ex.scaling.n0) ** (2.0 / 3.0)
    st = run_ensemble(ex.network, None, StopRule(horizon), _pick(level, 500, 100), seed,
                      GridObservable((horizon,), ("X3",)), threads=_threads())
    name = st.names[0]
    m, se = st.get_mean(name), st.get_se(name)
    target = ex.oracle("mean_U_3", 1.0)
    g = gof_poisson(st.samples[:, 0], target)
    return [
        Check("isom-1 mean X3 at t=N^(2/3)", _within_se(m, target, se), f"{m:.4f} vs {target:g} (se {se:.4f})"),
        Check("isom-1 X3 ~ Poisson(5C/3)", g.p_value > 1e-3, f"chi2={g.statistic:.3f} dof={g.dof} p={g.p_value:.4g}"),
    ]


def isom_2_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    ex = exemplars.exemplar("isom-2")
    st = run_ensemble(ex.network, None, StopRule(10.0), _pick(level, 500, 100), seed,
                      GridObservable((10.0,), ("X3",)), threads=_threads())
    m, se = st.get_mean("X3@10"), st.get_se("X3@10")
    v, vse = st.get_var("X3@10"), st.var_se("X3@10")
    out = [
        Check("isom-2 mean X3(10)", _within_se(m, 10.0, se), f"{m:.4f} vs 10 (se {se:.4f})"),
        Check("isom-2 var X3(10)", _within_se(v, 10.0, vse), f"{v:.4f} vs 10 (se {vse:.4f})"),
    ]
    # V time scale at a reduced anchor: physical time n * 0.2
    n = 100
    small = exemplars.isom_2_at(n)
    t_v = 0.2
    st2 = run_ensemble(small, None, StopRule(n * t_v), _pick(level, 2000, 500), seed ^ 0x5A5A,
                       GridObservable((n * t_v,), ("X2",)), threads=_threads())
    lam = ex.oracle("mean_V_2", t_v)
    g = gof_poisson(st2.samples[:, 0], lam)
    out.append(Check(f"isom-2 V2(0.2) ~ Poisson(2.5 V1) at n={n}", g.p_value > 1e-3,
                     f"mean {st2.get_mean(st2.names[0]):.4f} vs {lam:.4f}; chi2={g.statistic:.3f} dof={g.dof} p={g.p_value:.4g}"))
    return out


def master_equation_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    net = exemplars.three_molecule_isomerization()
    x0 = net.initial_state()
    sol = solve_cme(net, x0, 1.0)
    index = sol.index()
    st = run_ensemble(net, x0, StopRule(1.0), _pick(level, 10_000, 2_000), seed,
                      GridObservable((1.0,), ("X1", "X2")), threads=_threads())
    codes = [index[(int(a), int(b))] for a, b in st.samples]
    g = gof_table(codes, sol.probabilities)
    return [Check("3-molecule isomerization law at t=1 vs master equation", g.p_value > 1e-3,
                  f"{len(sol.states)} states; chi2={g.statistic:.3f} dof={g.dof} p={g.p_value:.4g}")]


def diffusion_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    ex = exemplars.exemplar("isom-1")
    n = 1000
    net = ex.network
    init = net.initial_state() / n
    paths = _pick(level, 500, 100)
    sde = diffusion_approx(net, n)
    em = simulate_em_ensemble(sde, init, 1.0, 1e-3, paths, seed)
    ode = integrate_ode(fluid_limit(net, None, n), init, 1.0, 1e-3)
    out = []
    for t in (0.5, 1.0):
        j = int(round(t / 1e-3))
        for i, s in enumerate(("X1", "X2")):
            x = em.values[:, j, i]
            se = x.std(ddof=1) / math.sqrt(paths)
            out.append(Check(f"diffusion mean Z_{s[1]}({t:g}) vs fluid ODE", _within_se(x.mean(), ode.values[j, i], se),
                             f"{x.mean():.6f} vs {ode.values[j, i]:.6f} (se {se:.2e})"))
    ssa = run_ensemble(net, None, StopRule(1.0), _pick(level, 500, 100), seed ^ 0x3C3C,
                       GridObservable((1.0,), ("X1",)), threads=_threads())
    v_ssa = ssa.get_var("X1@1") / n**2
    v_em = float(np.var(em.values[:, -1, 0], ddof=1))
    ratio = v_em / v_ssa
    out.append(Check("diffusion Var Z_1(1) vs SSA", 1 / 3 <= ratio <= 3,
                     f"EM {v_em:.3e} vs SSA {v_ssa:.3e} (ratio {ratio:.3f})"))
    return out


# --------------------------------------------------------------------------
# viral infection

def _viral_predicate(n: float, eps: float = 1.0) -> LinearPredicate:
    spec = branching.EstablishmentSpec(n, eps)
    return LinearPredicate({"T": spec.rho, "G": 1.0}, level=spec.threshold)


def viral_establishment_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    net = exemplars.exemplar("viral").network
    attempts = _pick(level, 2000, 400)
    p, se, _ = establishment_fraction(net, None, _viral_predicate(1000), attempts, seed)
    tol = max(0.04, 3 * se) if level == "fast" else 0.04
    q = branching.extinction_probability()
    q_mc, q_se = branching.walk_extinction_mc(n_walks=_pick(level, 100_000, 20_000),
                                              cap=_pick(level, 10_000, 2_000), seed=seed)
    return [
        Check("viral establishment fraction", abs(p - 0.75) <= tol, f"{p:.4f} over {attempts} attempts (band +-{tol:.3f})"),
        Check("extinction probability fixed point", abs(q - 0.25) <= 1e-12, f"q={q!r}"),
        Check("extinction walk Monte Carlo", abs(q_mc - q) <= 2 * q_se, f"{q_mc:.5f} vs {q:.5f} (se {q_se:.5f})"),
    ]


@lru_cache(maxsize=4)
def _viral_conditioned(level: str, seed: int):
    """Runs conditioned on the genome count reaching N^(2/3), then followed
    for one unit of rescaled time. Returns (V2 paths, V1(1), V3(1), V2(1), grid)."""
    ex = exemplars.exemplar("viral")
    net = ex.network
    n = float(ex.scaling.n0)
    scale_t = n ** (2.0 / 3.0)
    grid = np.linspace(0.0, 1.0, 41)
    pred = LinearPredicate({"G": 1.0}, level=scale_t)

    def after(tr, rng):
        h = tr.hit_time
        t2 = ssa_run(net, tr.final_state, StopRule(h + scale_t), RunConfig(0), record=False,
                     rng=rng, t0=h, grid=h + scale_t * grid)
        g = t2.grid_states
        return [*(g[:, 1] / scale_t), g[-1, 0], g[-1, 2] / n]

    res = conditioned_ensemble(net, None, pred, _pick(level, 200, 60), seed, after=after)
    s = res.stats.samples
    k = len(grid)
    return s[:, :k], s[:, k], s[:, k + 1], s[:, k - 1], grid


def viral_logistic_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    v2, _, _, _, grid = _viral_conditioned(level, seed)
    m = v2.mean(axis=0)
    err = float(np.max(np.abs(m - logistic_solution(1.0, grid))))
    return [Check("viral mean V2 path vs logistic", err <= 0.15, f"sup error {err:.4f} over {len(v2)} runs")]


def viral_fast_law_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    _, v1, v3, v2_end, _ = _viral_conditioned(level, seed)
    v2 = float(v2_end.mean())
    g = gof_poisson(v1, 10 * v2)
    se3 = v3.std(ddof=1) / math.sqrt(len(v3))
    var3 = float(np.var(v3, ddof=1))
    cov = float(np.cov(v1, v3)[0, 1])
    t_var, t_cov = 20 / 9 * v2, 40 / 9 * v2
    band_v, band_c = 0.25, 0.35
    if level == "fast":
        # few samples: widen to three relative standard errors
        band_v = max(band_v, 3 * variance_se(v3) / var3)
        band_c = max(band_c, 3 * covariance_se(v1, v3) / abs(cov))
    return [
        Check("viral V1(1) ~ Poisson(10 V2(1))", g.p_value > 1e-3, f"V2(1)={v2:.4f}; chi2={g.statistic:.3f} dof={g.dof} p={g.p_value:.4g}"),
        Check("viral mean V3(1)", _within_se(v3.mean(), 5 * v2, se3), f"{v3.mean():.4f} vs {5 * v2:.4f} (se {se3:.4f})"),
        Check("viral var V3(1)", abs(var3 / t_var - 1) <= band_v, f"{var3:.4f} vs {t_var:.4f} ({band_v:.0%} band)"),
        Check("viral cov(V1, V3)(1)", abs(cov / t_cov - 1) <= band_c, f"{cov:.4f} vs {t_cov:.4f} ({band_c:.0%} band)"),
    ]


def moment_engine_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    F = Fraction
    ez, ey = moment_polynomial(1, 0), moment_polynomial(0, 1)
    ezy, ey2 = moment_polynomial(1, 1), moment_polynomial(0, 2)
    half = [c / 2 for c in ezy]
    resid = [printed_recursion_residual(nn, mm, F(3), "full") for nn in range(4) for mm in range(1, 4)]
    return [
        Check("E[Z] = 10 v2", ez == [0, 10], str(ez)),
        Check("E[Y] = 5 v2", ey == [0, 5], str(ey)),
        Check("E[ZY] = 40/9 v2 + 50 v2^2", ezy == [0, F(40, 9), 50], str(ezy)),
        Check("E[Y^2] = E[ZY]/2", ey2 == half, str(ey2)),
        Check("moment recursion residual (full sums)", all(r == 0 for r in resid), f"{len(resid)} orders"),
    ]


def scaling_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    ex = exemplars.exemplar("viral")
    net = ex.network.without_hints()
    props = propose_exponents(net, n0=1000, max_denominator=_pick(level, 6, 3))
    target = ex.scaling
    found = [p for p in props if p.key() == target.key()]
    case = classify_case(found[0]) if found else None
    want = (Fraction(3, 40), Fraction(3, 8000))
    seen = set()
    n_slow = 0
    for p in props:
        if classify_case(p) != LimitCase.LOGISTIC_SLOW:
            continue
        n_slow += 1
        red = build_reduced(net, p)
        seen.add((red.descaled_coefficients["a"], red.descaled_coefficients["b"]))
    return [
        Check("viral assignment among proposals", bool(found), f"{len(props)} admissible proposals"),
        Check("viral assignment is LogisticSlow", case == LimitCase.LOGISTIC_SLOW, str(case)),
        Check("descaled coefficients 3/40 and 3/8000, invariant", seen == {want},
              f"{n_slow} LogisticSlow assignments, distinct values {sorted(seen)}"),
    ]


def establishment_trend_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    per = _pick(level, 50, 15)
    medians = {}
    for n in (1000, 10_000):
        net = exemplars.exemplar("viral", n=n).network
        res = conditioned_ensemble(net, None, _viral_predicate(n), per, seed ^ n)
        medians[n] = float(np.median(res.hit_times) / (n ** (2 / 3) * math.log(n)))
    c = 4 / 45
    inside = all(0.02 < m < 0.25 for m in medians.values())
    toward = abs(medians[10_000] - c) < abs(medians[1000] - c)
    text = ", ".join(f"N={n}: {m:.4f}" for n, m in medians.items())
    return [
        Check("establishment time ratio in (0.02, 0.25)", inside, text),
        Check("establishment time ratio moves toward 4/45", toward, text),
    ]


def branching_checks(level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    worst = max(max(abs(r) for r in branching.eigen_residuals(n)) for n in (1e2, 1e3, 1e4, 1e6))
    big = 1e6
    lam = branching.growth_rate(big) * big ** (2 / 3)
    rho = branching.rho(big)
    return [
        Check("eigen-equations", worst <= 1e-10, f"max residual {worst:.2e}"),
        Check("N^(2/3) lambda at N=1e6", abs(lam / 7.5 - 1) <= 0.05, f"{lam:.4f} vs 7.5"),
        Check("rho at N=1e6", abs(rho / 4 - 1) <= 0.02, f"{rho:.4f} vs 4"),
    ]


# --------------------------------------------------------------------------

SUITES: dict[str, list[Callable[..., list[Check]]]] = {
    "crystallization": [crystallization_checks],
    "enzyme-1": [enzyme_1_checks],
    "enzyme-2": [enzyme_2_checks],
    "isom-1": [isom_1_slow_checks, master_equation_checks, diffusion_checks],
    "isom-2": [isom_2_checks],
    "viral": [viral_establishment_checks, viral_logistic_checks, viral_fast_law_checks,
              moment_engine_checks, scaling_checks, establishment_trend_checks, branching_checks],
}


def verify(name: str, level: str = "fast", seed: int = DEFAULT_SEED) -> list[Check]:
    if name not in SUITES:
        raise exemplars.UnknownExemplar(f"unknown exemplar {name!r}; choose from {', '.join(SUITES)}")
    _pick(level, 0, 0)
    out: list[Check] = []
    for fn in SUITES[name]:
        out.extend(fn(level, seed))
    return out
