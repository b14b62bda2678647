import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps
from scipy.linalg import null_space

from multiscale_crn import exemplars
from multiscale_crn.limits import (FastParams, HybridModel, IntegrationError, JumpChannel, ODEModel, SDEModel,
                                   ThinningBoundError, UnsupportedReduction, averaged_fast_law, averaged_moments,
                                   build_reduced, crystallization_hybrid, diffusion_approx, fluid_limit,
                                   integrate_ode, logistic_solution, moment_polynomial, printed_recursion_residual,
                                   simulate_em, simulate_em_ensemble, simulate_hybrid)
from multiscale_crn.network import parse_network, stoichiometry_matrix
from multiscale_crn.scaling import LimitCase, ScalingExponents, classify_case, propose_exponents
from multiscale_crn.stats import gof_binomial

VIRAL = exemplars.exemplar("viral")


# --------------------------------------------------------------------------
# fluid limit and ODE integration

def test_isomerization_fluid_limit_drops_slow_channel():
    ex = exemplars.exemplar("isom-1")
    ode = fluid_limit(ex.network, ex.scaling)
    z = np.array([0.7, 1.3, 0.4])
    np.testing.assert_allclose(ode.drift(z), [-z[0] + 2 * z[1], z[0] - 2 * z[1], 0.0], rtol=1e-14)
    assert ode.fast_terms == []


def test_crystallization_slow_pair():
    ex = exemplars.exemplar("crystallization")
    ode = fluid_limit(ex.network, ex.scaling, species=["A", "B"])
    for a in (1.0, 0.5, 0.13):
        np.testing.assert_allclose(ode.drift([a, 0.2]), [-0.1 * a * a, 0.05 * a * a], rtol=1e-14)


def test_classical_limit_includes_size_factor():
    net = parse_network("species A init=0\nspecies B init=0\nreaction r: 2 A -> B @ 3")
    ode = fluid_limit(net, None, n=10)
    # kappa n^(|nu|-1) / nu! = 3 * 10 / 2
    assert ode.exact_coef == [F(15)]


def test_catalytic_only_network_has_zero_drift():
    ode = fluid_limit(parse_network("species A init=3\nreaction r: A -> A @ 2"))
    assert ode.drift([3.0]).tolist() == [0.0]
    path = integrate_ode(ode, [3.0], 1.0, 0.1)
    assert (path.values == 3.0).all()


def test_rk4_crystallization_closed_form():
    ex = exemplars.exemplar("crystallization")
    ode = fluid_limit(ex.network, ex.scaling, species=["A", "B"])
    path = integrate_ode(ode, [1.0, 0.0], 10.0, 1e-3)
    assert path.times[-1] == 10.0
    assert abs(path.values[-1, 0] - 0.5) < 1e-8
    assert abs(path.values[-1, 1] - 0.25) < 1e-8


def test_rk4_logistic_matches_closed_form():
    path = integrate_ode(lambda v: 7.5 * v - 3.75 * v * v, [1.0], 0.1, 1e-3)
    assert abs(path.values[-1, 0] - logistic_solution(1.0, 0.1)) < 1e-8
    assert abs(path.values[-1, 0] - 1.3584) < 1e-4


def test_rk4_fourth_order():
    exact = 1 / (1 + 0.1 * 10)
    errs = [abs(integrate_ode(lambda a: -0.1 * a * a, [1.0], 10.0, h).values[-1, 0] - exact) for h in (0.5, 0.25)]
    assert 12 < errs[0] / errs[1] < 20


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_reports_time():
    with pytest.raises(IntegrationError) as e:
        integrate_ode(lambda z: z * z, [1.0], 2.0, 1e-3)
    assert 0.99 < e.value.time <= 2.0
    with pytest.raises(ValueError):
        integrate_ode(lambda z: z, [1.0], 1.0, 0.0)


@pytest.mark.parametrize("name", ["crystallization", "enzyme-1", "enzyme-2", "isom-1", "isom-2", "viral"])
def test_linear_conservation_along_fluid_paths(name):
    net = exemplars.exemplar(name).network
    W = null_space(stoichiometry_matrix(net).T.astype(float))
    if W.shape[1] == 0:
        pytest.skip("no conservation law")
    n = 100.0
    init = net.initial_state() / n + 0.1
    path = integrate_ode(fluid_limit(net, None, n), init, 0.01, 1e-5)
    drift = path.values @ W - init @ W
    assert np.max(np.abs(drift)) < 1e-9


def test_isomerization_sum_conserved():
    ex = exemplars.exemplar("isom-1")
    path = integrate_ode(fluid_limit(ex.network, ex.scaling), [1.2, 0.6, 0.0], 2.0)
    s = path.values[:, 0] + path.values[:, 1]
    assert np.max(np.abs(s - 1.8)) < 1e-12
    np.testing.assert_allclose(path.values[:, 0], 1.2, atol=1e-12)


def test_path_csv():
    p = integrate_ode(lambda v: -v, [1.0, 2.0], 0.2, 0.1, names=["x", "y"])
    lines = p.csv().splitlines()
    assert lines[0] == "time,x,y" and len(lines) == 4


# --------------------------------------------------------------------------
# logistic solution

def test_logistic_examples():
    assert logistic_solution(1.0, 50.0) == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(logistic_solution(2.0, np.linspace(0, 3, 7)), 2.0)
    assert float(logistic_solution(1.0, 0.0)) == 1.0
    with pytest.raises(ValueError):
        logistic_solution(0.0, 1.0)


@given(st.floats(1e-3, 1.999), st.floats(0, 5), st.floats(1e-4, 1.0))
def test_logistic_monotone_and_bounded(eps, t, dt):
    a, b = logistic_solution(eps, t), logistic_solution(eps, t + dt)
    assert eps <= a <= b <= 2.0
    # derivative at zero is positive below the equilibrium
    assert 7.5 * eps - 3.75 * eps * eps > 0


# --------------------------------------------------------------------------
# diffusion approximation

def test_noise_scale():
    net = exemplars.exemplar("isom-1").network
    assert diffusion_approx(net, 1e4).noise_scale == pytest.approx(1e-2)
    with pytest.raises(ValueError):
        diffusion_approx(net, 0)


@given(st.lists(st.floats(0.0, 5.0), min_size=3, max_size=3))
def test_diffusion_columns_parallel_to_stoichiometry(c):
    net = VIRAL.network
    sde = diffusion_approx(net, 1000)
    cols = sde.columns(np.array(c))
    S = stoichiometry_matrix(net).astype(float)
    rates = sde.fluid.rates(np.array(c))
    np.testing.assert_allclose(cols, S * np.sqrt(rates), rtol=1e-13, atol=1e-300)


def test_em_without_noise_is_euler():
    ex = exemplars.exemplar("isom-1")
    fluid = fluid_limit(ex.network, ex.scaling)
    sde = SDEModel(fluid, math.inf)
    h = 1e-2
    em = simulate_em(sde, [1.0, 0.2, 0.0], 1.0, h, seed=3)
    y = np.array([1.0, 0.2, 0.0])
    for _ in range(100):
        y = y + h * fluid.drift(y)
    np.testing.assert_allclose(em.values[-1], y, rtol=1e-12)
    rk = integrate_ode(fluid, [1.0, 0.2, 0.0], 1.0, h)
    assert np.max(np.abs(em.values - rk.values)) < 10 * h


def test_pure_noise_is_a_martingale():
    net = parse_network("species A init=1\nspecies B init=1\nreaction f: A -> B @ 1\nreaction g: B -> A @ 1")
    base = fluid_limit(net, None, 1.0)
    flat = ODEModel(base.species, base.D, base.nu, base.coef, custom=lambda c: np.zeros_like(c))
    sde = SDEModel(flat, 100.0)
    ens = simulate_em_ensemble(sde, [1.0, 1.0], 1.0, 1e-2, 2000, 17, reflect=False)
    end = ens.values[:, -1, :]
    se = end.std(axis=0, ddof=1) / math.sqrt(len(end))
    assert np.all(np.abs(end.mean(axis=0) - 1.0) <= 3 * se)


def test_em_paths_do_not_depend_on_ensemble_size():
    sde = diffusion_approx(exemplars.exemplar("isom-1").network, 50)
    a = simulate_em_ensemble(sde, [1.2, 0.6, 0.0], 0.1, 1e-2, 3, 5)
    b = simulate_em_ensemble(sde, [1.2, 0.6, 0.0], 0.1, 1e-2, 7, 5)
    np.testing.assert_array_equal(a.values, b.values[:3])
    assert (b.values >= 0).all()


# --------------------------------------------------------------------------
# averaged fast law

def test_published_moments_exact():
    assert moment_polynomial(1, 0) == [0, 10]
    assert moment_polynomial(0, 1) == [0, 5]
    assert moment_polynomial(1, 1) == [0, F(40, 9), 50]
    assert moment_polynomial(0, 2) == [c / 2 for c in moment_polynomial(1, 1)]
    assert averaged_moments(F(3), 1, 1) == F(40, 3) + 450
    assert isinstance(averaged_moments(0.5, 1, 1), float)


def test_degree_cap():
    with pytest.raises(ValueError):
        moment_polynomial(5, 4)
    with pytest.raises(ValueError):
        moment_polynomial(-1, 0)


@pytest.mark.parametrize("v", [F(1, 3), F(2), F(7, 5)])
def test_z_marginal_is_poisson(v):
    for n in range(1, 9):
        want = sps.poisson(float(10 * v)).moment(n)
        assert float(averaged_moments(v, n, 0)) == pytest.approx(want, rel=1e-12)


def _generator_expectation(p, q, v, prm=FastParams()):
    # E[A z^p y^q] for A g = b v (g(z+1) - g) + d z (g(z-1) - g) + (c z - e y) dg/dy
    M = lambda i, j: averaged_moments(v, i, j, prm)
    out = sum(prm.b * v * math.comb(p, k) * M(k, q) for k in range(p))
    out += sum(prm.d * math.comb(p, k) * (-1) ** (p - k) * M(k + 1, q) for k in range(p))
    if q:
        out += q * prm.c * M(p + 1, q - 1) - q * prm.e * M(p, q)
    return out


@pytest.mark.parametrize("prm", [FastParams(), FastParams(F(3), F(1, 2), F(2), F(1))])
def test_moments_solve_stationary_generator(prm):
    for v in (F(1, 2), F(3)):
        for deg in range(1, 8):
            for q in range(deg + 1):
                assert _generator_expectation(deg - q, q, v, prm) == 0


def test_printed_recursion_limits():
    for n in range(5):
        for m in range(1, 4):
            assert printed_recursion_residual(n, m, F(2), "full") == 0
    # the printed upper limit n - 1 only agrees where both sums are empty
    assert all(printed_recursion_residual(0, m, F(2)) == 0 for m in (1, 2, 3))
    assert printed_recursion_residual(1, 1, F(2)) == F(20, 9)
    assert printed_recursion_residual(2, 1, F(2)) == F(-920, 9)


def _pdmp_time_averages(v, horizon, seed):
    # Z birth-death (births 2.5 v, deaths 0.25 z), Y' = z - 2 y; exact between jumps
    rng = np.random.default_rng(seed)
    z, y, t = 10, 5.0, 0.0
    acc = np.zeros(4)  # y, y^2, z y, z
    while t < horizon:
        rate = 2.5 * v + 0.25 * z
        dt = min(rng.exponential(1 / rate), horizon - t)
        a, r = z / 2, y - z / 2
        e1, e2 = (1 - math.exp(-2 * dt)) / 2, (1 - math.exp(-4 * dt)) / 4
        iy = a * dt + r * e1
        iy2 = a * a * dt + 2 * a * r * e1 + r * r * e2
        acc += [iy, iy2, z * iy, z * dt]
        y = a + r * math.exp(-2 * dt)
        t += dt
        if rng.random() * rate < 2.5 * v:
            z += 1
        else:
            z -= 1
    return acc / horizon


def test_moments_against_pdmp_time_average():
    ey, ey2, ezy, ez = _pdmp_time_averages(1.0, 20_000.0, 12)
    law = averaged_fast_law(1.0)
    assert ez == pytest.approx(10, rel=0.03)
    assert ey == pytest.approx(law.mean_y, rel=0.03)
    assert ey2 - ey * ey == pytest.approx(law.var_y, rel=0.08)
    assert ezy - ez * ey == pytest.approx(law.cov_zy, rel=0.08)


def test_fast_law_examples():
    law = averaged_fast_law(F(2))
    assert law.moments[(1, 0)] == 20
    assert law.var_y == F(40, 9) and law.cov_zy == F(80, 9) and law.var_z == 20
    zero = averaged_fast_law(0)
    assert zero.moments[(1, 0)] == 0 and zero.var_y == 0 and zero.cov_zy == 0
    with pytest.raises(ValueError):
        averaged_fast_law(-1)


@given(st.fractions(0, 50, max_denominator=20))
def test_fast_law_invariants(v):
    law = averaged_fast_law(v)
    m = law.moments
    assert m[(0, 1)] == m[(1, 0)] / 2
    assert law.var_z == 10 * v and law.var_y >= 0
    assert m[(1, 1)] ** 2 <= m[(2, 0)] * m[(0, 2)]
    assert law.cov_zy ** 2 <= law.var_z * law.var_y


# --------------------------------------------------------------------------
# reduced models

def test_logistic_slow_reduction():
    red = build_reduced(VIRAL.network, VIRAL.scaling)
    assert red.case == LimitCase.LOGISTIC_SLOW
    assert red.coefficients["a"].value(1000) == pytest.approx(7.5)
    assert red.coefficients["b"].value(1000) == pytest.approx(3.75)
    assert red.descaled_coefficients == {"a": F(3, 40), "b": F(3, 8000)}
    ode = red.components["ode"]
    assert ode.drift(np.array([1.0]))[0] == pytest.approx(3.75)
    law = red.components["fast_law_params"]
    assert law.b / law.d == 10
    text = red.report()
    assert "LogisticSlow" in text and "E[Z^1 Y^1]" in text


def test_descaled_coefficients_hand_values():
    # (k1 k2 / k4 - k2) and k6 k3 k2 / (k5 k4) in molecule units
    k1, k2, k3, k4, k5, k6 = F(1), F(1, 40), F(1000), F(1, 4), F(2), F(75, 10**7)
    red = build_reduced(VIRAL.network, VIRAL.scaling)
    assert red.descaled_coefficients["a"] == k1 * k2 / k4 - k2 == F(3, 40)
    assert red.descaled_coefficients["b"] == k6 * k3 * k2 / (k5 * k4) == F(3, 8000)


def test_descaled_coefficients_invariant_across_assignments():
    net = VIRAL.network.without_hints()
    seen = set()
    for p in propose_exponents(net, n0=1000, max_denominator=3):
        if classify_case(p) == LimitCase.LOGISTIC_SLOW:
            d = build_reduced(net, p).descaled_coefficients
            seen.add((d["a"], d["b"]))
    assert seen == {(F(3, 40), F(3, 8000))}


def _viral_variant(c, e):
    alpha = {"T": F(2, 3), "G": F(2, 3), "S": F(1)}
    beta = {"a": F(0), "b": F(0), "c": c, "d": F(0), "e": e, "f": F(-1)}
    return ScalingExponents(alpha, beta, F(0), 1000)


def test_full_ode_reduction():
    sc = _viral_variant(F(1, 3), F(0))
    red = build_reduced(VIRAL.network, sc)
    assert red.case == LimitCase.FULL_ODE
    lam = {r: float(red.coefficients[f"lambda_{r}"].value(1000)) for r in "abcdef"}
    v = np.array([0.3, 1.7, 2.2])
    want = [lam["b"] * v[1] - lam["d"] * v[0],
            lam["a"] * v[0] - lam["b"] * v[1] - lam["f"] * v[1] * v[2],
            lam["c"] * v[0] - lam["e"] * v[2]]
    np.testing.assert_allclose(red.components["ode"].drift(v), want, rtol=1e-13)


def test_averaged_ode_reduction():
    sc = _viral_variant(F(2, 3), F(1, 3))
    red = build_reduced(VIRAL.network, sc)
    assert red.case == LimitCase.AVERAGED_ODE
    assert red.components["ode"].dimension == 2


def test_unclassified_reduction_raises():
    ex = exemplars.exemplar("isom-1")
    with pytest.raises(UnsupportedReduction):
        build_reduced(ex.network, ex.scaling)
    bad = VIRAL.scaling.with_(alpha={"T": F(0), "G": F(2, 3), "S": F(1, 2)})
    with pytest.raises(UnsupportedReduction):
        build_reduced(VIRAL.network, bad)


# --------------------------------------------------------------------------
# hybrid models

def _hybrid_finals(method, runs, seed0):
    model = crystallization_hybrid()
    return np.array([simulate_hybrid(model, [1.0, 0.0], [10], 10.0, seed0 + i, method=method).final_discrete[0]
                     for i in range(runs)])


def test_hybrid_binomial_and_thinning_agree():
    exact = _hybrid_finals("exact", 3000, 0)
    thin = _hybrid_finals("thinning", 3000, 10**6)
    assert gof_binomial(exact, 10, 0.5).p_value > 1e-3
    assert gof_binomial(thin, 10, 0.5).p_value > 1e-3
    table = np.array([np.bincount(exact, minlength=11), np.bincount(thin, minlength=11)])
    table = table[:, table.sum(axis=0) > 0]
    assert sps.chi2_contingency(table).pvalue > 1e-3


def test_hybrid_continuous_part_follows_ode():
    p = simulate_hybrid(crystallization_hybrid(), [1.0, 0.0], [10], 10.0, 1, grid=[0.0, 5.0, 10.0])
    np.testing.assert_allclose(p.grid_continuous[:, 0], [1.0, 1 / 1.5, 0.5], rtol=1e-12)
    assert (np.diff(p.grid_discrete[:, 0]) <= 0).all()
    assert p.grid_discrete[-1, 0] == p.final_discrete[0]


def test_hybrid_without_channels_is_pure_ode():
    model = HybridModel(["a"], [], lambda t, c, d: -c, [])
    p = simulate_hybrid(model, [1.0], [], 2.0, 0, step=1e-3)
    assert len(p.jump_times) == 0
    assert p.final_continuous[0] == pytest.approx(math.exp(-2.0), rel=1e-10)


def test_constant_rate_channel_is_poisson():
    ch = JumpChannel("birth", lambda t, c, d: 2.0, [1], cumulative=lambda t0, t1, c, d: 2.0 * (t1 - t0))
    model = HybridModel([], ["n"], lambda t, c, d: np.zeros(0), [ch])
    for method in ("exact", "thinning"):
        p = simulate_hybrid(model, [], [0], 5000.0, 4, method=method, step=1.0)
        gaps = np.diff(np.concatenate([[0.0], p.jump_times]))
        assert sps.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 1e-3
        assert p.final_discrete[0] == len(p.jump_times)


def test_thinning_bound_violation_raises():
    ch = JumpChannel("spiky", lambda t, c, d: 1.0 + 100.0 * math.sin(4 * math.pi * t) ** 2, [1])
    model = HybridModel([], ["n"], lambda t, c, d: np.zeros(0), [ch])
    with pytest.raises(ThinningBoundError):
        simulate_hybrid(model, [], [0], 20.0, 0, step=0.5, margin=1.0)


def test_exact_needs_cumulative_rates():
    ch = JumpChannel("x", lambda t, c, d: 1.0, [1])
    model = HybridModel([], ["n"], lambda t, c, d: np.zeros(0), [ch])
    with pytest.raises(ValueError):
        simulate_hybrid(model, [], [0], 1.0, 0, method="exact")
    with pytest.raises(ValueError):
        HybridModel(["a"], ["a"], lambda t, c, d: c, [])
