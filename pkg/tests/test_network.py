import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiscale_crn import exemplars
from multiscale_crn.network import (InsufficientMolecules, Network, NetworkError, ParseError, Reaction,
                                    SpeciesSpec, UnknownSpeciesError, apply_reaction, parse_network,
                                    propensity, render_network, stoichiometry_matrix, volume_form_kappa)


def test_parse_simple_dimerization():
    net = parse_network("species A init=2\nspecies B init=0\nreaction r: 2 A -> B @ 0.5")
    r = net.reactions[0]
    assert r.input_of("A") == 2 and r.output_of("B") == 1
    assert r.kappa == 0.5
    assert net.initial_state().tolist() == [2, 0]


def test_parse_comments_hints_and_anchor():
    text = """
    # a comment
    n0 = 1000
    species T init=1 alpha=0
    species G init=0 alpha=2/3   # trailing comment
    reaction a: T -> T + G @ 1 beta=0
    reaction b: G -> 0 @ 0.025 beta=-2/3
    """
    net = parse_network(text)
    assert net.n0 == 1000
    assert net.species[1].alpha_hint == Fraction(2, 3)
    assert net.reactions[1].beta_hint == Fraction(-2, 3)
    assert net.reactions[1].outputs == ()
    assert net.reactions[1].kappa_exact == Fraction(1, 40)


def test_unknown_species_reported_with_line():
    with pytest.raises(UnknownSpeciesError) as e:
        parse_network("species A init=1\nreaction r: A -> C @ 1")
    assert e.value.lineno == 2


@pytest.mark.parametrize("text", [
    "species A init=-1\nreaction r: A -> 0 @ 1",
    "species A init=1.5\nreaction r: A -> 0 @ 1",
    "species A init=1\nreaction r: A -> 0 @ 0",
    "species A init=1\nreaction r: A -> 0 @ -2",
    "species A init=1\nreaction r: 1.5 A -> 0 @ 1",
    "species A init=1\nreaction r: A => 0 @ 1",
    "species A init=1\nspecies A init=2\nreaction r: A -> 0 @ 1",
    "species A init=1",
    "bogus line",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_network(text)


def test_multiplicity_cap():
    with pytest.raises(NetworkError):
        Reaction("r", {"A": 9}, {}, 1.0)


def test_viral_dsl_matches_six_reactions():
    net = parse_network(exemplars.exemplar("viral").dsl())
    assert net.species_names == ["T", "G", "S"]
    assert net.reaction_names == list("abcdef")
    f = net.reactions[5]
    assert dict(f.inputs) == {"G": 1, "S": 1} and f.outputs == ()


def test_crystallization_propensities():
    net = exemplars.exemplar("crystallization").network
    # independent oracle: exact integer arithmetic on kappa * x (x - 1) / 2
    want = Fraction(1, 10**7) * 10**6 * (10**6 - 1) / 2
    assert propensity(net, [10**6, 0, 10], 0) == pytest.approx(float(want), rel=1e-15)
    assert propensity(net, [10**6, 0, 10], 0) == pytest.approx(49999.995)
    assert propensity(net, [1, 0, 10], 0) == 0.0
    assert propensity(net, [10**6, 0, 10], 1) == pytest.approx(1.0)


def test_volume_form_kappa():
    assert volume_form_kappa(3.7, 1, 123.0) == 3.7
    assert volume_form_kappa(1.0, [2], 10.0) == pytest.approx(0.2)
    assert volume_form_kappa(1.0, 0, 10.0) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        volume_form_kappa(1.0, 1, 0.0)


@given(st.integers(0, 60), st.integers(0, 60), st.integers(1, 3), st.integers(0, 2),
       st.floats(0.1, 10.0), st.floats(1.0, 1e4))
def test_volume_form_reproduces_scaled_rate(xa, xb, ma, mb, kappa, n):
    # lambda^N(x) = N kappa prod nu! / N^|nu| prod C(x_i, nu_i)
    net = Network((SpeciesSpec("A"), SpeciesSpec("B")),
                  (Reaction("r", {"A": ma, "B": mb}, {}, volume_form_kappa(kappa, [ma, mb], n)),))
    lam = n * kappa * math.factorial(ma) * math.factorial(mb) / n ** (ma + mb) \
        * math.comb(xa, ma) * math.comb(xb, mb)
    assert propensity(net, [xa, xb], 0) == pytest.approx(lam, rel=1e-12, abs=1e-300)


def test_apply_reaction_examples():
    cry = exemplars.exemplar("crystallization").network
    assert apply_reaction([10, 0, 5], cry, 0).tolist() == [8, 1, 5]
    vir = exemplars.exemplar("viral").network
    assert apply_reaction([1, 0, 0], vir, 0).tolist() == [1, 1, 0]
    assert apply_reaction([1, 2, 3], vir, 5).tolist() == [1, 1, 2]
    with pytest.raises(InsufficientMolecules):
        apply_reaction([1, 0, 0], vir, 5)


def test_stoichiometry_examples():
    iso = exemplars.exemplar("isom-1").network
    assert stoichiometry_matrix(iso).T.tolist() == [[-1, 1, 0], [1, -1, 0], [0, -1, 1]]
    cry = exemplars.exemplar("crystallization").network
    assert stoichiometry_matrix(cry).T.tolist() == [[-2, 1, 0], [-1, 0, -1]]
    cat = parse_network("species A init=1\nreaction r: A -> A @ 1")
    assert stoichiometry_matrix(cat).tolist() == [[0]]


# --------------------------------------------------------------------------
# generated networks

names = st.sampled_from(["A", "B", "C", "D"])
cplx = st.dictionaries(names, st.integers(1, 3), max_size=3)


@st.composite
def networks(draw):
    n_rx = draw(st.integers(1, 5))
    rx = []
    for k in range(n_rx):
        kappa = draw(st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False))
        beta = draw(st.none() | st.fractions(-3, 3, max_denominator=6))
        rx.append(Reaction(f"r{k}", draw(cplx), draw(cplx), kappa, beta))
    sp = [SpeciesSpec(s, draw(st.integers(0, 50)), draw(st.none() | st.fractions(0, 2, max_denominator=6)))
          for s in ["A", "B", "C", "D"]]
    n0 = draw(st.none() | st.sampled_from([10.0, 1000.0, 1e6]))
    return Network(tuple(sp), tuple(rx), n0)


@given(networks())
def test_render_parse_round_trip(net):
    back = parse_network(render_network(net))
    assert back == net
    assert [r.kappa_exact for r in back.reactions] == [r.kappa_exact for r in net.reactions]


@given(networks(), st.lists(st.integers(0, 12), min_size=4, max_size=4))
def test_stoichiometry_column_equals_reaction_effect(net, x):
    S = stoichiometry_matrix(net)
    for k in range(net.n_reactions):
        if propensity(net, x, k) > 0:
            y = apply_reaction(x, net, k)
            assert np.array_equal(y - np.asarray(x), S[:, k])
            assert (y >= 0).all()
        else:
            # zero propensity exactly when some input is short
            r = net.reactions[k]
            assert any(x[net.species_index(s)] < m for s, m in r.inputs)
