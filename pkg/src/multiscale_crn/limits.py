"""Reduced (limit) models: fluid ODEs, diffusion approximations, the case
systems of the viral template, piecewise-deterministic hybrids, and the
averaged law of the fast viral components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .network import Network, format_rational
from .scaling import (LimitCase, NPoly, ScalingError, ScalingExponents, check_balance, classify_case,
                      match_template, split_rate_constant, term_orders)


class IntegrationError(RuntimeError):
    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message if time is None else f"{message} at t={time:g}")


class UnsupportedReduction(ValueError):
    pass


class ThinningBoundError(RuntimeError):
    """A rate exceeded its thinning bound; the bound computation is wrong."""


# --------------------------------------------------------------------------
# ODE models

@dataclass
class ODEModel:
    """Mass-action drift ``F(c) = D @ (coef * prod_i c_i^nu_ik)``.

    ``D`` is species x reactions (net change, zeroed for dropped terms) and
    ``nu`` reactions x species. ``exact_coef`` keeps the coefficients as
    rationals when they are.
    """

    species: list[str]
    D: np.ndarray
    nu: np.ndarray
    coef: np.ndarray
    exact_coef: list = field(default_factory=list)
    reactions: list[str] = field(default_factory=list)
    fast_terms: list = field(default_factory=list)  # (species, reaction, order) with order > 0
    custom: Callable[[np.ndarray], np.ndarray] | None = None
    text: list[str] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(self.species)

    def rates(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if self.nu.size == 0:
            return np.zeros(len(self.coef)) if c.ndim == 1 else np.zeros(c.shape[:-1] + (len(self.coef),))
        # works for a single state (S,) or a batch (..., S)
        return self.coef * np.prod(c[..., None, :] ** self.nu, axis=-1)

    def drift(self, c) -> np.ndarray:
        if self.custom is not None:
            return self.custom(np.asarray(c, dtype=float))
        if self.D.size == 0:
            return np.zeros_like(np.asarray(c, dtype=float))
        return self.rates(c) @ self.D.T

    def equations(self) -> list[str]:
        if self.custom is not None:
            return list(self.text) or ["(custom drift)"]
        lines = []
        for i, s in enumerate(self.species):
            parts = []
            for k in range(len(self.coef)):
                if self.D[i, k] == 0:
                    continue
                c = self.D[i, k] * self.coef[k]
                mono = "*".join(f"{self.species[j]}" + (f"^{int(m)}" if m > 1 else "")
                                for j, m in enumerate(self.nu[k]) if m > 0) or "1"
                parts.append(f"{c:+.6g}*{mono}")
            lines.append(f"d{s}/dt = " + (" ".join(parts) if parts else "0"))
        return lines


def _inv_factorial(nu_row) -> Fraction:
    out = 1
    for m in nu_row:
        out *= math.factorial(int(m))
    return Fraction(1, out)


def fluid_limit(net: Network, scaling: ScalingExponents | None = None, n: float = 1.0,
                species: Sequence[str] | None = None) -> ODEModel:
    """Deterministic mass-action limit.

    Without a scaling this is the classical limit at system size ``n``:
    ``dc/dt = sum_k kappa_k n^(|nu_k|-1) prod c^nu / nu! (nu'_k - nu_k)``.
    With a scaling, only terms of order exactly 0 in the rescaled equations
    are kept and each carries ``lambda_k / nu!``. The ``1/nu!`` comes from the
    subset-count propensity ``C(x, nu) ~ x^nu / nu!``.
    """
    names = list(species) if species is not None else net.species_names
    keep = [net.species_index(s) for s in names]
    S_full = net.compiled.stoich
    from .network import input_matrix
    nu_full = input_matrix(net).T  # reactions x species
    R = net.n_reactions
    D = S_full[keep, :].astype(float)
    exact: list = []
    fast = []
    if scaling is None:
        for k, r in enumerate(net.reactions):
            order = int(nu_full[k].sum())
            c = r.kappa_exact * _inv_factorial(nu_full[k])
            nn = Fraction(n) if isinstance(n, int) else None
            if nn is not None:
                exact.append(c * nn ** (order - 1))
            else:
                exact.append(float(c) * float(n) ** (order - 1))
    else:
        orders = {(o.species, o.reaction): o.order for o in term_orders(net, scaling)}
        for i_row, i in enumerate(keep):
            for k, r in enumerate(net.reactions):
                o = orders.get((net.species_names[i], r.name))
                if o is None:
                    continue
                if o != 0:
                    D[i_row, k] = 0.0
                    if o > 0:
                        fast.append((net.species_names[i], r.name, o))
        for k, r in enumerate(net.reactions):
            lam = split_rate_constant(r.kappa_exact, scaling.beta[r.name], scaling.n0)
            exact.append(lam * _inv_factorial(nu_full[k]) if isinstance(lam, Fraction)
                         else lam * float(_inv_factorial(nu_full[k])))
    used = np.flatnonzero(np.any(D != 0, axis=0))
    for k in used:
        outside = [net.species_names[j] for j in np.flatnonzero(nu_full[k]) if j not in keep]
        if outside:
            raise ValueError(f"reaction {net.reaction_names[k]} depends on species outside the subset: {outside}")
    nu = nu_full[:, keep].astype(float)
    return ODEModel(names, D, nu, np.array([float(c) for c in exact]), exact, net.reaction_names, fast)


@dataclass
class Path:
    times: np.ndarray
    values: np.ndarray  # (len(times), dim)
    names: list[str] = field(default_factory=list)

    def csv(self) -> str:
        lines = [",".join(["time", *self.names])]
        for t, row in zip(self.times, self.values):
            lines.append(",".join([repr(float(t)), *(repr(float(v)) for v in np.atleast_1d(row))]))
        return "\n".join(lines) + "\n"


def integrate_ode(model: ODEModel | Callable, init, horizon: float, step: float = 1e-3,
                  names: Sequence[str] | None = None) -> Path:
    """Classical fourth-order Runge-Kutta on a uniform grid (last step shortened)."""
    if step <= 0:
        raise ValueError("step must be positive")
    f = model.drift if isinstance(model, ODEModel) else model
    names = list(names) if names is not None else (model.species if isinstance(model, ODEModel) else [])
    n_steps = int(math.ceil(horizon / step - 1e-9)) if horizon > 0 else 0
    times = np.minimum(np.arange(n_steps + 1) * step, horizon)
    y = np.array(init, dtype=float)
    out = np.empty((n_steps + 1,) + y.shape)
    out[0] = y
    for j in range(n_steps):
        h = times[j + 1] - times[j]
        y = rk4_step(f, y, h)
        if not np.all(np.isfinite(y)):
            raise IntegrationError("nonfinite state", float(times[j + 1]))
        out[j + 1] = y
    return Path(times, out, names)


def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def logistic_solution(eps: float, t):
    """Solution of ``V' = 7.5 V - 3.75 V^2``, ``V(0) = eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return 2.0 * eps / (eps + (2.0 - eps) * np.exp(-7.5 * np.asarray(t, dtype=float)))


# --------------------------------------------------------------------------
# diffusion approximation

@dataclass
class SDEModel:
    fluid: ODEModel
    n: float

    @property
    def noise_scale(self) -> float:
        return self.n ** -0.5

    def drift(self, c):
        return self.fluid.drift(c)

    def columns(self, c) -> np.ndarray:
        """Diffusion matrix, species x reactions: ``sqrt(rate_k(c)) (nu'_k - nu_k)``."""
        r = np.clip(self.fluid.rates(c), 0.0, None)
        return self.fluid.D * np.sqrt(r)[..., None, :]


def diffusion_approx(net: Network, n: float) -> SDEModel:
    if n <= 0:
        raise ValueError("n must be positive")
    return SDEModel(fluid_limit(net, None, n), float(n))


def simulate_em(model: SDEModel, init, horizon: float, step: float, seed: int,
                reflect: bool = True) -> Path:
    """Euler-Maruyama with reflection at 0 (``x -> |x|``)."""
    res = simulate_em_ensemble(model, init, horizon, step, 1, seed, reflect=reflect, base_is_seed=True)
    return Path(res.times, res.values[0], model.fluid.species)


@dataclass
class EnsemblePaths:
    times: np.ndarray
    values: np.ndarray  # (paths, times, dim)


def simulate_em_ensemble(model: SDEModel, init, horizon: float, step: float, n_paths: int,
                         base_seed: int, reflect: bool = True, base_is_seed: bool = False) -> EnsemblePaths:
    """Vectorized EM over paths. Path ``i`` draws its noise from seed ``base ^ i``
    up front, so each path is the same regardless of how many are run."""
    if step <= 0:
        raise ValueError("step must be positive")
    n_steps = int(math.ceil(horizon / step - 1e-9))
    R = model.fluid.D.shape[1]
    noise = np.empty((n_paths, n_steps, R))
    for i in range(n_paths):
        seed = base_seed if base_is_seed else (base_seed ^ i)
        noise[i] = np.random.default_rng(seed).standard_normal((n_steps, R))
    x = np.tile(np.asarray(init, dtype=float), (n_paths, 1))
    out = np.empty((n_paths, n_steps + 1, x.shape[1]))
    out[:, 0] = x
    times = np.minimum(np.arange(n_steps + 1) * step, horizon)
    scale = model.noise_scale
    for j in range(n_steps):
        h = times[j + 1] - times[j]
        sig = model.columns(x)  # (paths, S, R)
        x = x + model.drift(x) * h + scale * math.sqrt(h) * np.einsum("psr,pr->ps", sig, noise[:, j])
        if reflect:
            x = np.abs(x)
        if not np.all(np.isfinite(x)):
            raise IntegrationError("nonfinite state", float(times[j + 1]))
        out[:, j + 1] = x
    return EnsemblePaths(times, out)


# --------------------------------------------------------------------------
# averaged law of the fast pair (Z, Y)

MAX_MOMENT_DEGREE = 8


@dataclass(frozen=True)
class FastParams:
    """Generator ``b v D+ + d z D- + (c z - e y) d/dy`` of the fast pair."""

    b: Fraction = Fraction(5, 2)
    d: Fraction = Fraction(1, 4)
    c: Fraction = Fraction(1)
    e: Fraction = Fraction(2)


def _stirling2(n: int, k: int) -> int:
    return sum((-1) ** (k - j) * math.comb(k, j) * j**n for j in range(k + 1)) // math.factorial(k)


def _padd(p, q):
    out = list(p) + [Fraction(0)] * (len(q) - len(p))
    for i, c in enumerate(q):
        out[i] += c
    return out


def _pscale(p, s):
    return [c * s for c in p]


def _pshift(p):  # multiply by v
    return [Fraction(0)] + list(p)


def _trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p or [Fraction(0)]


def moment_table(max_degree: int = MAX_MOMENT_DEGREE, params: FastParams = FastParams()) -> dict:
    """Exact ``E[Z^p Y^q]`` as polynomials in v (coefficient lists, lowest power first).

    ``Z`` is Poisson(``b v / d``); mixed moments follow from requiring the
    generator applied to ``z^p y^q`` to average to zero:

        (q e + p d) M(p,q) = b v sum_{k<p} C(p,k) M(k,q)
                             + d sum_{k<p-1} C(p,k) (-1)^(p-k) M(k+1,q)
                             + q c M(p+1,q-1)

    solved degree by degree, increasing q within a degree.
    """
    if max_degree > MAX_MOMENT_DEGREE:
        raise ValueError(f"moment degree capped at {MAX_MOMENT_DEGREE}")
    b, d, c, e = (Fraction(x) for x in (params.b, params.d, params.c, params.e))
    mu = b / d  # Poisson mean per unit v
    M: dict[tuple[int, int], list[Fraction]] = {}
    for n in range(max_degree + 2):
        # Touchard: E[Z^n] = sum_k S(n,k) (mu v)^k
        M[(n, 0)] = [Fraction(_stirling2(n, k)) * mu**k for k in range(n + 1)] if n else [Fraction(1)]
    for deg in range(1, max_degree + 1):
        for q in range(1, deg + 1):
            p = deg - q
            rhs = [Fraction(0)]
            for k in range(p):
                rhs = _padd(rhs, _pscale(_pshift(M[(k, q)]), b * math.comb(p, k)))
            for k in range(p - 1):
                rhs = _padd(rhs, _pscale(M[(k + 1, q)], d * math.comb(p, k) * (-1) ** (p - k)))
            rhs = _padd(rhs, _pscale(M[(p + 1, q - 1)], q * c))
            M[(p, q)] = _trim(_pscale(rhs, 1 / (q * e + p * d)))
    return {k: _trim(v) for k, v in M.items() if sum(k) <= max_degree}


_TABLE_CACHE: dict = {}


def moment_polynomial(n: int, m: int, params: FastParams = FastParams()) -> list[Fraction]:
    if n < 0 or m < 0:
        raise ValueError("orders must be nonnegative")
    if n + m > MAX_MOMENT_DEGREE:
        raise ValueError(f"degree {n + m} exceeds cap {MAX_MOMENT_DEGREE}")
    if params not in _TABLE_CACHE:
        _TABLE_CACHE[params] = moment_table(MAX_MOMENT_DEGREE, params)
    return _TABLE_CACHE[params][(n, m)]


def eval_poly(coefs, v):
    v = Fraction(v) if isinstance(v, (int, Fraction)) else v
    return sum(c * v**i for i, c in enumerate(coefs))


def averaged_moments(v2, n: int, m: int, params: FastParams = FastParams()):
    """``E[Z^n Y^m]`` under the averaged law at slow value ``v2`` (exact for rational v2)."""
    val = eval_poly(moment_polynomial(n, m, params), v2)
    return val if isinstance(v2, (int, Fraction)) else float(val)


def printed_recursion_residual(n: int, m: int, v2, upper: str = "printed"):
    """Residual of the moment recursion for ``g = z^n y^m`` with the default
    viral constants, using generator-derived moments.

    ``upper="printed"`` sums k = 1..n-1; ``upper="full"`` sums k = 1..n,
    which is what the generator expansion gives.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    top = n - 1 if upper == "printed" else n
    E = lambda p, q: averaged_moments(Fraction(v2), p, q)
    res = m * E(n + 1, m - 1) - 2 * m * E(n, m)
    res += Fraction(5, 2) * Fraction(v2) * sum(math.comb(n, k) * E(n - k, m) for k in range(1, top + 1))
    res += Fraction(1, 4) * sum(math.comb(n, k) * (-1) ** k * E(n - k + 1, m) for k in range(1, top + 1))
    return res


@dataclass(frozen=True)
class FastLaw:
    v2: float
    z_mean: float
    moments: dict

    @property
    def var_z(self):
        return self.moments[(2, 0)] - self.moments[(1, 0)] ** 2

    @property
    def mean_y(self):
        return self.moments[(0, 1)]

    @property
    def var_y(self):
        return self.moments[(0, 2)] - self.moments[(0, 1)] ** 2

    @property
    def cov_zy(self):
        return self.moments[(1, 1)] - self.moments[(1, 0)] * self.moments[(0, 1)]


def averaged_fast_law(v2, max_degree: int = 2, params: FastParams = FastParams()) -> FastLaw:
    if v2 < 0:
        raise ValueError("v2 must be nonnegative")
    mom = {(p, q): averaged_moments(v2, p, q, params)
           for p in range(max_degree + 1) for q in range(max_degree + 1 - p)}
    return FastLaw(v2, params.b / params.d * v2 if isinstance(v2, Fraction) else float(params.b / params.d) * v2, mom)


# --------------------------------------------------------------------------
# reduced models for the viral template

@dataclass
class ReducedModel:
    case: str
    components: dict
    coefficients: dict  # symbolic NPoly per coefficient name (read at N = n0)
    descaled_coefficients: dict  # exact rationals in molecule units where available
    scaling: ScalingExponents

    def report(self) -> str:
        lines = [f"case: {self.case}", f"scaling: {self.scaling.describe()}"]
        for name, poly in self.coefficients.items():
            lines.append(f"{name} = {poly.value(self.scaling.n0):.10g}")
        for name, val in self.descaled_coefficients.items():
            lines.append(f"descaled {name} = {format_rational(val) if isinstance(val, Fraction) else val} "
                         f"(= {float(val):.6g})")
        ode = self.components.get("ode")
        if ode is not None:
            lines += ode.equations()
        law = self.components.get("fast_law_params")
        if law is not None:
            lines.append("fast pair: Z ~ Poisson(%s v2); moments E[Z^n Y^m]:" %
                         format_rational(law.b / law.d))
            for deg in range(1, 3):
                for q in range(deg + 1):
                    coefs = moment_polynomial(deg - q, q, law)
                    poly = " + ".join(f"({format_rational(c)}) v2^{i}" for i, c in enumerate(coefs) if c != 0)
                    lines.append(f"  E[Z^{deg - q} Y^{q}] = {poly or '0'}")
        return "\n".join(lines)


def build_reduced(net: Network, scaling: ScalingExponents) -> ReducedModel:
    roles = scaling.roles or match_template(net)
    if roles is None:
        raise UnsupportedReduction("case systems exist only for networks matching the viral template")
    scaling = scaling.with_(roles=dict(roles))
    rep = check_balance(net, scaling)
    if not rep.admissible:
        raise UnsupportedReduction("scaling not admissible: " + "; ".join(rep.violated))
    case = classify_case(scaling)
    lam = {rr: NPoly.monomial(net.reactions[net.reaction_index(roles[rr])].kappa_exact,
                              -scaling.beta[roles[rr]]) for rr in "abcdef"}
    n0 = scaling.n0
    val = {rr: p.value(n0) for rr, p in lam.items()}
    names = [roles["1"], roles["2"], roles["3"]]
    if case == LimitCase.FULL_ODE:
        ode = fluid_limit(net, scaling, species=names)
        return ReducedModel(case, {"ode": ode}, {f"lambda_{r}": lam[r] for r in "abcdef"}, {}, scaling)
    if case == LimitCase.AVERAGED_ODE:
        k = lam["f"] * lam["c"] / lam["e"]
        kv = k.value(n0)

        def drift(v):
            v1, v2 = v[..., 0], v[..., 1]
            return np.stack([val["b"] * v2 - val["d"] * v1,
                             val["a"] * v1 - val["b"] * v2 - kv * v1 * v2], axis=-1)
        v1, v2 = names[:2]
        ode = ODEModel(names[:2], np.zeros((2, 0)), np.zeros((0, 2)), np.zeros(0), custom=drift, text=[
            f"d{v1}/dt = {val['b']:.6g}*{v2} - {val['d']:.6g}*{v1}",
            f"d{v2}/dt = {val['a']:.6g}*{v1} - {val['b']:.6g}*{v2} - {kv:.6g}*{v1}*{v2}"])
        return ReducedModel(case, {"ode": ode}, {"lambda_f*lambda_c/lambda_e": k}, {}, scaling)
    if case == LimitCase.LOGISTIC_SLOW:
        a = lam["a"] * lam["b"] / lam["d"] - lam["b"]
        b = lam["f"] * lam["c"] * lam["b"] / (lam["e"] * lam["d"])
        a2 = scaling.alpha[roles["2"]]
        a_hat = a.shift(-scaling.gamma)
        b_hat = b.shift(-(a2 + scaling.gamma))
        av, bv = a.value(n0), b.value(n0)
        ode = ODEModel([roles["2"]], np.zeros((1, 0)), np.zeros((0, 1)), np.zeros(0),
                       custom=lambda v: av * v - bv * v * v,
                       text=[f"d{roles['2']}/dt = {av:.6g}*{roles['2']} - {bv:.6g}*{roles['2']}^2"])
        comps = {"ode": ode}
        if scaling.alpha[roles["1"]] == 0 and scaling.beta[roles["e"]] == 0:
            ex = {rr: lam[rr].exact(n0) for rr in "bcde"}
            if all(x is not None for x in ex.values()):
                comps["fast_law_params"] = FastParams(ex["b"], ex["d"], ex["c"], ex["e"])
        descaled = {"a": a_hat.constant() if a_hat.is_constant else a_hat,
                    "b": b_hat.constant() if b_hat.is_constant else b_hat}
        return ReducedModel(case, comps, {"a": a, "b": b}, descaled, scaling)
    raise UnsupportedReduction(f"no reduced system for case {case}")


# --------------------------------------------------------------------------
# hybrid (piecewise-deterministic) models

@dataclass
class JumpChannel:
    """Discrete channel with rate ``rate(t, c, d)`` and effect ``delta`` on ``d``.

    ``cumulative(t0, t, c0, d)``, if given, is the integrated rate from
    ``t0`` to ``t`` starting from continuous state ``c0`` with discrete state
    ``d`` held fixed; it enables exact sampling by inversion.
    """

    name: str
    rate: Callable[[float, np.ndarray, np.ndarray], float]
    delta: Sequence[int]
    cumulative: Callable[[float, float, np.ndarray, np.ndarray], float] | None = None


@dataclass
class HybridModel:
    continuous: list[str]
    discrete: list[str]
    drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    channels: list[JumpChannel]
    flow: Callable[[float, float, np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if set(self.continuous) & set(self.discrete):
            raise ValueError("a species cannot be both continuous and discrete")


@dataclass
class HybridPath:
    jump_times: np.ndarray
    jump_channels: np.ndarray
    grid_times: np.ndarray
    grid_continuous: np.ndarray
    grid_discrete: np.ndarray
    final_continuous: np.ndarray
    final_discrete: np.ndarray


class _Flow:
    def __init__(self, model: HybridModel, step: float):
        self.model, self.step = model, step

    def advance(self, t0, c0, d, t1):
        if t1 <= t0:
            return np.array(c0, dtype=float)
        if self.model.flow is not None:
            return np.asarray(self.model.flow(t0, t1, c0, d), dtype=float)
        n = max(1, int(math.ceil((t1 - t0) / self.step - 1e-12)))
        h = (t1 - t0) / n
        y, t = np.array(c0, dtype=float), t0
        for _ in range(n):
            f = lambda yy, tt=t: self.model.drift(tt, yy, d)
            k1 = f(y)
            k2 = self.model.drift(t + h / 2, y + h / 2 * k1, d)
            k3 = self.model.drift(t + h / 2, y + h / 2 * k2, d)
            k4 = self.model.drift(t + h, y + h * k3, d)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
            if not np.all(np.isfinite(y)):
                raise IntegrationError("nonfinite continuous state", t)
        return y


def simulate_hybrid(model: HybridModel, c0, d0, horizon: float, seed: int, *, step: float = 1e-2,
                    method: str = "auto", grid: Sequence[float] | None = None,
                    margin: float = 1.5) -> HybridPath:
    """Simulate a piecewise-deterministic path.

    ``method="exact"`` inverts the integrated rate (all channels need
    ``cumulative``); ``"thinning"`` proposes events at a bound taken from the
    rate at the start, middle and end of each step times ``margin``, raising
    :class:`ThinningBoundError` if the true rate ever exceeds it; ``"auto"``
    picks exact when possible.
    """
    if method == "auto":
        method = "exact" if model.channels and all(ch.cumulative for ch in model.channels) else "thinning"
    if method == "exact" and not all(ch.cumulative for ch in model.channels):
        raise ValueError("exact sampling needs a cumulative rate for every channel")
    rng = np.random.default_rng(seed)
    flow = _Flow(model, step)
    grid = np.asarray([] if grid is None else grid, dtype=float)
    gc = np.zeros((len(grid), len(model.continuous)))
    gd = np.zeros((len(grid), len(model.discrete)), dtype=np.int64)
    gi = 0
    t = 0.0
    c = np.array(c0, dtype=float)
    d = np.array(d0, dtype=np.int64)
    jt, jc = [], []
    deltas = [np.asarray(ch.delta, dtype=np.int64) for ch in model.channels]

    def total_rate(tt, cc):
        return np.array([ch.rate(tt, cc, d) for ch in model.channels], dtype=float)

    def record_until(t_stop, t_from, c_from, inclusive):
        nonlocal gi
        while gi < len(grid) and (grid[gi] < t_stop or (inclusive and grid[gi] <= t_stop)):
            gc[gi] = flow.advance(t_from, c_from, d, grid[gi])
            gd[gi] = d
            gi += 1

    def fire(tt, cc):
        nonlocal d
        r = total_rate(tt, cc)
        k = int(np.searchsorted(np.cumsum(r), rng.random() * r.sum(), side="right"))
        k = min(k, len(r) - 1)
        d = d + deltas[k]
        jt.append(tt)
        jc.append(k)

    if method == "exact":
        while True:
            target = -math.log1p(-rng.random())
            cum = lambda s: sum(ch.cumulative(t, s, c, d) for ch in model.channels) - target
            if not model.channels or cum(horizon) < 0:
                break
            s = brentq(cum, t, horizon, xtol=1e-13, rtol=4 * np.finfo(float).eps)
            record_until(s, t, c, False)
            c = flow.advance(t, c, d, s)
            t = s
            fire(t, c)
    else:
        while t < horizon and model.channels:
            t1 = min(t + step, horizon)
            cm, c1 = flow.advance(t, c, d, (t + t1) / 2), flow.advance(t, c, d, t1)
            bound = margin * max(total_rate(t, c).sum(), total_rate((t + t1) / 2, cm).sum(),
                                 total_rate(t1, c1).sum())
            s = t
            jumped = False
            while bound > 0:
                s += -math.log1p(-rng.random()) / bound
                if s >= t1:
                    break
                cs = flow.advance(t, c, d, s)
                lam = total_rate(s, cs).sum()
                if lam > bound:
                    raise ThinningBoundError(f"rate {lam} exceeds bound {bound} at t={s}")
                if rng.random() * bound < lam:
                    record_until(s, t, c, False)
                    c, t = cs, s
                    fire(t, c)
                    jumped = True
                    break
            if not jumped:
                record_until(t1, t, c, False)
                c, t = c1, t1
    t_end = horizon
    record_until(t_end, t, c, True)
    c = flow.advance(t, c, d, t_end)
    return HybridPath(np.array(jt), np.array(jc, dtype=np.int64), grid, gc, gd, c, d)


def crystallization_hybrid(rate: float = 0.1) -> HybridModel:
    """Deterministic ``Z_A' = -rate Z_A^2``, ``Z_B' = rate/2 Z_A^2`` driving a
    linear death of ``Z_C`` at rate ``rate Z_A Z_C``."""

    def drift(t, c, d):
        a = c[0]
        return np.array([-rate * a * a, 0.5 * rate * a * a])

    def flow(t0, t1, c, d):
        a0 = c[0]
        a1 = a0 / (1.0 + rate * a0 * (t1 - t0))
        return np.array([a1, c[1] + 0.5 * (a0 - a1)])

    ch = JumpChannel(
        "death", lambda t, c, d: rate * c[0] * d[0], [-1],
        cumulative=lambda t0, t1, c, d: d[0] * math.log1p(rate * c[0] * (t1 - t0)),
    )
    return HybridModel(["A", "B"], ["C"], drift, [ch], flow)
