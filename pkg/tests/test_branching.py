import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiscale_crn import branching as br
from multiscale_crn import exemplars
from multiscale_crn.simulate import LinearPredicate
from multiscale_crn.stats import conditioned_ensemble


def printed_growth_rate(n) -> Decimal:
    # the closed form as printed, in 50-digit decimal arithmetic
    getcontext().prec = 50
    n = Decimal(n)
    e = Decimal("2.5") / (n ** (Decimal(2) / Decimal(3)))
    b = Decimal("0.25") + e
    return (-b + (b * b + Decimal("7.5") / n ** (Decimal(2) / Decimal(3))).sqrt()) / 2


def test_pgf_examples():
    law = br.DEFAULT_LAW
    assert br.pgf_eval(law, 0.0) == pytest.approx(0.2)
    assert br.pgf_eval(law, 1.0) == pytest.approx(1.0)
    assert br.pgf_eval(law, 0.25) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        br.pgf_eval(law, 1.5)


@given(st.floats(0.0, 1.0))
def test_closed_pgf_matches_series(s):
    law = br.DEFAULT_LAW
    summed = br.OffspringLaw(law.pmf, support_cap=400)
    assert br.pgf_eval(law, s) == pytest.approx(1 / (5 - 4 * s), rel=1e-12)
    assert br.pgf_eval(summed, s) == pytest.approx(1 / (5 - 4 * s), rel=1e-10)


def test_offspring_law_normalized_with_mean_four():
    law = br.DEFAULT_LAW
    assert abs(law.total_mass() - 1.0) < 1e-12
    assert law.mean == pytest.approx(4.0, rel=1e-12)


def test_extinction_probability():
    q = br.extinction_probability()
    assert abs(q - 0.25) < 1e-12
    assert abs(br.pgf_eval(br.DEFAULT_LAW, q) - q) < 1e-12
    dead = br.OffspringLaw(lambda k: 1.0 if k == 0 else 0.0, lambda s: 1.0)
    assert br.extinction_probability(dead) == 1.0


@given(st.floats(0.05, 0.95))
def test_extinction_below_one_iff_supercritical(p):
    law = br.geometric_law(p)
    q = br.extinction_probability(law)
    mean = (1 - p) / p
    assert abs(br.pgf_eval(law, q) - q) < 1e-9
    if mean > 1.05:
        # geometric law: the nontrivial root is p / (1 - p)
        assert q == pytest.approx(p / (1 - p), abs=1e-8)
    elif mean < 0.95:
        assert q == pytest.approx(1.0, abs=1e-8)


def test_walk_monte_carlo_oracle():
    q_mc, se = br.walk_extinction_mc(n_walks=50_000, cap=10_000, seed=1)
    assert abs(q_mc - 0.25) <= 3 * se


def test_growth_rate_matches_printed_formula():
    assert br.growth_rate(1000) == pytest.approx(0.0565522, abs=1e-6)
    for n in (1e2, 1e3, 1e4, 1e6, 1e9):
        assert br.growth_rate(n) == pytest.approx(float(printed_growth_rate(n)), rel=1e-12)


def test_rho_examples():
    r = br.rho(1000)
    assert r == pytest.approx(3.2621, abs=1e-3)
    lam = br.growth_rate(1000)
    assert 1 - 0.25 * r == pytest.approx(lam * r, abs=1e-12)
    assert lam * r == pytest.approx(0.18447, abs=1e-5)


@pytest.mark.parametrize("n", [1e2, 1e3, 1e4, 1e6])
def test_eigen_equations(n):
    assert max(abs(x) for x in br.eigen_residuals(n)) <= 1e-10
    # (rho, 1) is a left eigenvector of Q
    v = np.array([br.rho(n), 1.0])
    np.testing.assert_allclose(v @ br.q_matrix(n), br.growth_rate(n) * v, atol=1e-12)
    assert br.growth_rate(n) == pytest.approx(max(np.linalg.eigvals(br.q_matrix(n)).real), rel=1e-9)


def test_large_n_limits():
    n = 1e6
    assert n ** (2 / 3) * br.growth_rate(n) == pytest.approx(7.5, rel=0.05)
    assert br.rho(n) == pytest.approx(4.0, rel=0.02)


@given(st.floats(2.0, 1e12), st.floats(1.01, 100.0))
def test_monotone_in_n(n, f):
    assert br.growth_rate(n * f) < br.growth_rate(n)
    assert br.rho(n * f) > br.rho(n) - 1e-12
    assert br.growth_rate(n) > 0 and br.rho(n) < 4


def test_establishment_spec():
    spec = br.EstablishmentSpec(1000, 1.0)
    assert spec.threshold == pytest.approx(100.0)
    assert spec.rho == br.rho(1000)
    for bad in (0.0, 2.0):
        with pytest.raises(ValueError):
            br.EstablishmentSpec(1000, bad)


def test_establishment_time_prediction():
    assert br.predict_establishment_time(1000) == pytest.approx(4 / 45 * 100 * math.log(1000))
    assert br.predict_establishment_time(1000) == pytest.approx(61.4, abs=0.05)
    for n in (1e3, 1e5):
        assert br.predict_establishment_time(n, 0.5) / (n ** (2 / 3) * math.log(n)) == pytest.approx(4 / 45)


def test_level_crossing_gap():
    assert br.predict_level_crossing_gap(1000, 0.7, 0.7) == 0.0
    assert br.predict_level_crossing_gap(1000, 0.5, 1.0) == pytest.approx(9.24, abs=0.01)
    with pytest.raises(ValueError):
        br.predict_level_crossing_gap(1000, 1.0, 0.5)


@given(st.floats(0.01, 0.6), st.floats(1.0, 1.5), st.floats(1.0, 1.5))
def test_gap_additive(e1, f2, f3):
    e2, e3 = e1 * f2, e1 * f2 * f3
    g = br.predict_level_crossing_gap
    assert g(1000, e1, e3) == pytest.approx(g(1000, e1, e2) + g(1000, e2, e3), rel=1e-12, abs=1e-12)


def test_subcritical_variant_establishes_rarely():
    # scaling kappa_a by 0.1 gives offspring mean 0.4: extinction is certain
    law = br.viral_offspring_law(0.1, 0.25)
    assert br.extinction_probability(law) == pytest.approx(1.0)
    net = exemplars.exemplar("viral").network
    weak = net.with_kappas({"a": 0.1})
    spec = br.EstablishmentSpec(1000)
    pred = LinearPredicate({"T": spec.rho, "G": 1.0}, level=spec.threshold)
    res = conditioned_ensemble(weak, None, pred, 10, 3, max_attempts=300)
    assert res.acceptance_fraction < 0.1
