from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiscale_crn import exemplars
from multiscale_crn.network import Network, SpeciesSpec, parse_network
from multiscale_crn.scaling import (LimitCase, NPoly, ScalingError, ScalingExponents, UnsupportedSchema,
                                    check_balance, classify_case, default_n0, exact_power, match_template,
                                    parse_scaling, propose_exponents, rational_grid, render_scaling,
                                    split_rate_constant, term_orders)

VIRAL = exemplars.exemplar("viral")
BARE = VIRAL.network.without_hints()


def viral_scaling(**over):
    alpha = {"T": F(0), "G": F(2, 3), "S": F(1)}
    beta = {"a": F(0), "b": F(-2, 3), "c": F(1), "d": F(0), "e": F(0), "f": F(-5, 3)}
    alpha.update({k: v for k, v in over.items() if k in alpha})
    beta.update({k: v for k, v in over.items() if k in beta})
    return ScalingExponents(alpha, beta, over.get("gamma", F(2, 3)), 1000)


def test_split_rate_constant():
    assert split_rate_constant(F("7.5e-6"), F(-5, 3), 1000) == F(3, 4)
    assert split_rate_constant(1000, 1, 1000) == 1
    assert split_rate_constant(F(37, 10), 0, 12345) == F(37, 10)
    # irrational power falls back to a float
    assert split_rate_constant(1.0, F(1, 2), 10) == pytest.approx(10 ** -0.5)
    with pytest.raises(ScalingError):
        split_rate_constant(1.0, 0, 1)


def test_exact_power():
    assert exact_power(F(1000), F(2, 3)) == 100
    assert exact_power(F(1000), F(-5, 3)) == F(1, 100000)
    assert exact_power(F(10), F(1, 2)) is None
    assert exact_power(F(8, 27), F(1, 3)) == F(2, 3)


@given(st.integers(2, 50), st.integers(-4, 4), st.integers(1, 4))
def test_exact_power_inverts_integer_powers(b, p, q):
    assert exact_power(F(b) ** q, F(p, q)) == F(b) ** p


def test_npoly_cancellation():
    n = NPoly.monomial(F(5, 2), F(-2, 3)) * NPoly.monomial(1000, F(2, 3))
    assert n.is_constant and n.constant() == 2500
    assert (NPoly.monomial(3, 1) - NPoly.monomial(3, 1)) == NPoly()
    assert NPoly.monomial(2, F(1, 3)).exact(F(1000)) == 20


def test_term_order_examples():
    orders = {(o.species, o.reaction): o.order for o in term_orders(VIRAL.network, viral_scaling())}
    assert orders[("G", "a")] == 0
    assert orders[("S", "c")] == F(2, 3)
    ident = ScalingExponents({s: 0 for s in "TGS"}, {r: 0 for r in "abcdef"}, 0, 1000)
    assert all(o.order == 0 for o in term_orders(VIRAL.network, ident))
    with pytest.raises(ScalingError):
        term_orders(VIRAL.network, ScalingExponents({"T": 0}, {}, 0, 1000))


@given(st.lists(st.fractions(-2, 2, max_denominator=6), min_size=3, max_size=3),
       st.lists(st.fractions(-2, 2, max_denominator=6), min_size=6, max_size=6),
       st.fractions(0, 2, max_denominator=6))
def test_term_order_formula(alphas, betas, gamma):
    sc = ScalingExponents(dict(zip("TGS", alphas)), dict(zip("abcdef", betas)), gamma, 1000)
    net = VIRAL.network
    for o in term_orders(net, sc):
        r = net.reactions[o.reaction_index]
        want = gamma + sc.beta[r.name] + sum(sc.alpha[s] * m for s, m in r.inputs) - sc.alpha[o.species]
        assert o.order == want and isinstance(o.order, F)
        assert o.jump_size == -sc.alpha[o.species]


def test_viral_assignment_admissible():
    rep = check_balance(VIRAL.network, viral_scaling())
    assert rep.admissible and rep.ordering_ok and rep.violated == []
    assert rep.schema == "viral-template"
    assert "admissible" in rep.text()
    assert rep.csv().splitlines()[0] == "species,reaction,order"


def test_alpha3_half_violates_f_balance():
    rep = check_balance(VIRAL.network, viral_scaling(S=F(1, 2)))
    bad = [c for c in rep.conditions if c.name.startswith("slow balance f")][0]
    assert not bad.holds
    assert bad.lhs == F(2, 3) and bad.rhs == F(2, 3) - F(5, 3) + F(2, 3) + F(1, 2)
    assert bad.name in rep.violated


def test_all_zero_breaks_ordering():
    zero = ScalingExponents({s: 0 for s in "TGS"}, {r: 0 for r in "abcdef"}, 0, 1000)
    rep = check_balance(VIRAL.network, zero)
    assert not rep.ordering_ok and not rep.admissible
    assert "ordering beta_c > beta_e" in rep.violated


def test_template_schema_required():
    iso = exemplars.exemplar("isom-1")
    with pytest.raises(UnsupportedSchema):
        check_balance(iso.network, iso.scaling, schema="template")
    assert check_balance(iso.network, iso.scaling).schema is None


def test_match_template_with_renamed_species_and_sink():
    text = """
    species Tpl init=1
    species Gen init=0
    species Str init=0
    species V init=0
    reaction r6: Gen + Str -> V @ 7.5e-6
    reaction r1: Tpl -> Tpl + Gen @ 1
    reaction r2: Gen -> Tpl @ 0.025
    reaction r3: Tpl -> Tpl + Str @ 1000
    reaction r4: Tpl -> 0 @ 0.25
    reaction r5: Str -> 0 @ 2
    """
    roles = match_template(parse_network(text))
    assert roles["1"] == "Tpl" and roles["2"] == "Gen" and roles["3"] == "Str"
    assert roles["f"] == "r6" and roles["a"] == "r1"
    assert match_template(exemplars.exemplar("isom-1").network) is None


def test_propose_viral_includes_published_assignment():
    props = propose_exponents(BARE, n0=1000, max_denominator=3)
    assert any(p.key() == viral_scaling().key() for p in props)
    # sorted by (gamma, sum |beta|)
    keys = [(p.gamma, sum(abs(b) for b in p.beta.values())) for p in props]
    assert keys == sorted(keys)


def test_every_proposal_passes_check_balance():
    for p in propose_exponents(BARE, n0=1000, max_denominator=3):
        assert check_balance(BARE, p).admissible
        assert p.beta["a"] == 0
        assert all(isinstance(v, F) for v in (*p.alpha.values(), *p.beta.values(), p.gamma))


def test_equal_abundance_forces_beta_b_zero():
    props = propose_exponents(BARE, n0=1000, max_denominator=3, require=lambda s: s.alpha["T"] == s.alpha["G"])
    assert props
    assert all(p.beta["b"] == 0 and p.beta["d"] == 0 for p in props)


def test_single_decay_pure_fluid():
    net = parse_network("species A init=1000\nreaction d: A -> 0 @ 1")
    props = propose_exponents(net, {"A": 1000}, n0=1000)
    assert [(p.alpha, p.beta, p.gamma) for p in props] == [({"A": 1}, {"d": 0}, 0)]


def test_empty_proposal_is_not_an_error():
    net = parse_network("species A init=1\nreaction d: A -> 0 @ 1e9")
    assert propose_exponents(net, n0=10, max_denominator=1) == []


def test_classify_cases():
    assert classify_case(VIRAL.scaling) == LimitCase.LOGISTIC_SLOW
    full = viral_scaling(T=F(1), G=F(1), gamma=F(0))
    assert classify_case(full, VIRAL.network) == LimitCase.FULL_ODE
    avg = viral_scaling(T=F(1), G=F(1), gamma=F(0), e=F(1, 2))
    assert classify_case(avg, VIRAL.network) == LimitCase.AVERAGED_ODE
    assert classify_case(exemplars.exemplar("isom-1").scaling) == LimitCase.UNCLASSIFIED


def test_proposals_cover_all_three_cases():
    cases = {classify_case(p) for p in propose_exponents(BARE, n0=1000, max_denominator=3)}
    assert {LimitCase.FULL_ODE, LimitCase.AVERAGED_ODE, LimitCase.LOGISTIC_SLOW} <= cases


def test_default_n0():
    assert default_n0(BARE) == 1000
    assert default_n0(parse_network("species A init=5\nreaction d: A -> 0 @ 2e6")) == 10**6
    with pytest.raises(ScalingError):
        default_n0(parse_network("species A init=1\nreaction d: A -> 0 @ 1"))


def test_rational_grid():
    g = rational_grid(0, 1, 3)
    assert g == [F(0), F(1, 3), F(1, 2), F(2, 3), F(1)]


def test_scaling_file_round_trip():
    sc = VIRAL.scaling
    back = parse_scaling(render_scaling(sc), BARE)
    assert back.key() == sc.key()
    with pytest.raises(ScalingError):
        parse_scaling("delta = 1", BARE)


def test_anchor_must_exceed_one():
    with pytest.raises(ScalingError):
        ScalingExponents({}, {}, 0, 1)


def test_generic_path_recovers_exemplar_scalings():
    for name in ("crystallization", "enzyme-1", "isom-1", "isom-2"):
        ex = exemplars.exemplar(name)
        net = Network(tuple(SpeciesSpec(s.name, s.initial) for s in ex.network.species),
                      ex.network.reactions, ex.network.n0)
        keys = {p.key() for p in propose_exponents(net, n0=ex.scaling.n0, max_denominator=3)}
        for sc in ex.scalings.values():
            assert sc.key() in keys, (name, sc.describe())
            assert check_balance(ex.network, sc).admissible
