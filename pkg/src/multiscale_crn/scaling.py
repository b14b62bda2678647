"""Multiscale exponent calculus.

A scaling assigns each species an abundance exponent ``alpha_i``
(``Z_i = N^-alpha_i X_i``), each reaction a rate exponent ``beta_k``
(``kappa_k = lambda_k N^beta_k``) and time an exponent ``gamma``
(``V(t) = Z(N^gamma t)``). The contribution of reaction ``k`` to the
equation for species ``i`` then carries the power

    gamma + beta_k + sum_j alpha_j nu_jk - alpha_i

of ``N``. All of this is done in exact rational arithmetic.

Two analysis paths exist. Networks that map onto the three-species viral
template (species T, G, S; reactions a-f) get the named balance conditions
and ordering constraints of that template. Everything else gets the generic
term-order rules described in :func:`generic_violations`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .network import Network, exact_decimal, format_rational


class ScalingError(ValueError):
    pass


class UnsupportedSchema(ScalingError):
    """The network cannot be mapped onto the requested condition set."""


# --------------------------------------------------------------------------
# exact powers of the anchor

def _iroot(n: int, k: int) -> int | None:
    """Exact integer k-th root of n >= 0, or None."""
    if n < 0:
        return None
    if n in (0, 1):
        return n
    r = int(round(n ** (1.0 / k))) if n.bit_length() < 1000 else int(math.exp(math.log(n) / k))
    for c in (r - 1, r, r + 1):
        if c >= 0 and c**k == n:
            return c
    lo, hi = 0, 1 << (n.bit_length() // k + 1)
    while lo < hi:
        mid = (lo + hi) // 2
        if mid**k < n:
            lo = mid + 1
        else:
            hi = mid
    return lo if lo**k == n else None


def exact_power(base: Fraction, exponent: Fraction) -> Fraction | None:
    """``base**exponent`` as a Fraction when it is rational, else None."""
    base, exponent = Fraction(base), Fraction(exponent)
    if base <= 0:
        raise ValueError("base must be positive")
    p, q = exponent.numerator, exponent.denominator
    a, b = _iroot(base.numerator, q), _iroot(base.denominator, q)
    if a is None or b is None:
        return None
    return Fraction(a, b) ** p


class NPoly:
    """Finite sum ``sum_e c_e N^e`` with rational ``c_e`` and ``e``.

    Used to carry scaled rate constants symbolically so that quantities whose
    powers of ``N`` cancel come out as exact rationals.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Fraction, Fraction] | None = None):
        self.terms = {Fraction(e): Fraction(c) for e, c in (terms or {}).items() if c != 0}

    @classmethod
    def monomial(cls, coef, exp=0) -> "NPoly":
        return cls({Fraction(exp): Fraction(coef)})

    def __add__(self, other):
        other = other if isinstance(other, NPoly) else NPoly.monomial(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return NPoly(out)

    def __neg__(self):
        return NPoly({e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-(other if isinstance(other, NPoly) else NPoly.monomial(other)))

    def __mul__(self, other):
        other = other if isinstance(other, NPoly) else NPoly.monomial(other)
        out: dict[Fraction, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                out[e1 + e2] = out.get(e1 + e2, Fraction(0)) + c1 * c2
        return NPoly(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, NPoly) else NPoly.monomial(other)
        if len(other.terms) != 1:
            raise ZeroDivisionError("can only divide by a single monomial")
        (e2, c2), = other.terms.items()
        return NPoly({e - e2: c / c2 for e, c in self.terms.items()})

    def shift(self, exp) -> "NPoly":
        return NPoly({e + Fraction(exp): c for e, c in self.terms.items()})

    def __eq__(self, other):
        other = other if isinstance(other, NPoly) else NPoly.monomial(other)
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    @property
    def is_constant(self) -> bool:
        return all(e == 0 for e in self.terms)

    def constant(self) -> Fraction:
        if not self.is_constant:
            raise ValueError(f"{self} depends on N")
        return self.terms.get(Fraction(0), Fraction(0))

    def exact(self, n: Fraction) -> Fraction | None:
        total = Fraction(0)
        for e, c in self.terms.items():
            p = exact_power(n, e)
            if p is None:
                return None
            total += c * p
        return total

    def value(self, n) -> float:
        ex = self.exact(Fraction(n)) if not isinstance(n, float) else None
        if ex is not None:
            return float(ex)
        return float(sum(float(c) * float(n) ** float(e) for e, c in self.terms.items()))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            parts.append(format_rational(c) if e == 0 else f"{format_rational(c)}*N^({format_rational(e)})")
        return " + ".join(parts)


# --------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class ScalingExponents:
    """Exponents plus anchor ``n0``.

    ``roles`` optionally maps template roles ("1", "2", "3" for species,
    "a".."f" for reactions) to names in a concrete network.
    """

    alpha: dict[str, Fraction]
    beta: dict[str, Fraction]
    gamma: Fraction = Fraction(0)
    n0: Fraction = Fraction(1000)
    roles: dict[str, str] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", {k: Fraction(v) for k, v in self.alpha.items()})
        object.__setattr__(self, "beta", {k: Fraction(v) for k, v in self.beta.items()})
        object.__setattr__(self, "gamma", Fraction(self.gamma))
        n0 = self.n0 if isinstance(self.n0, Fraction) else exact_decimal(self.n0)
        if n0 <= 1:
            raise ScalingError("anchor n0 must exceed 1")
        object.__setattr__(self, "n0", n0)

    def power(self, exp) -> float:
        """``n0**exp`` as a float, exact whenever the power is rational."""
        ex = exact_power(self.n0, Fraction(exp))
        return float(ex) if ex is not None else float(self.n0) ** float(exp)

    def key(self):
        return (tuple(sorted(self.alpha.items())), tuple(sorted(self.beta.items())), self.gamma, self.n0)

    def with_(self, **kw) -> "ScalingExponents":
        d = dict(alpha=self.alpha, beta=self.beta, gamma=self.gamma, n0=self.n0, roles=self.roles)
        d.update(kw)
        return ScalingExponents(**d)

    def describe(self) -> str:
        a = ", ".join(f"{k}={format_rational(v)}" for k, v in self.alpha.items())
        b = ", ".join(f"{k}={format_rational(v)}" for k, v in self.beta.items())
        return f"alpha({a}) beta({b}) gamma={format_rational(self.gamma)} n0={format_rational(self.n0)}"


@dataclass(frozen=True)
class TermOrder:
    species: str
    reaction: str
    species_index: int
    reaction_index: int
    order: Fraction
    jump_size: Fraction
    change: int  # net stoichiometric change of the species


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: Fraction
    rhs: Fraction
    relation: str  # "=", ">=", ">", "<=", "any-eq"
    holds: bool


@dataclass
class BalanceReport:
    orders: list[TermOrder]
    violated: list[str]
    ordering_ok: bool
    conditions: list[Condition] = field(default_factory=list)
    schema: str | None = None
    roles: dict[str, str] | None = None

    @property
    def admissible(self) -> bool:
        return not self.violated

    def text(self) -> str:
        lines = [f"schema: {self.schema or 'generic'}"]
        if self.roles:
            lines.append("roles: " + ", ".join(f"{k}->{v}" for k, v in self.roles.items()))
        w = max([len(o.species) for o in self.orders] + [7])
        v = max([len(o.reaction) for o in self.orders] + [8])
        lines.append(f"{'species':<{w}}  {'reaction':<{v}}  order")
        for o in self.orders:
            lines.append(f"{o.species:<{w}}  {o.reaction:<{v}}  {format_rational(o.order)}")
        for c in self.conditions:
            mark = "ok " if c.holds else "FAIL"
            lines.append(f"[{mark}] {c.name}: {format_rational(c.lhs)} {c.relation} {format_rational(c.rhs)}")
        lines.append("ordering: " + ("ok" if self.ordering_ok else "violated"))
        lines.append("admissible" if self.admissible else "violations: " + "; ".join(self.violated))
        return "\n".join(lines)

    def csv(self) -> str:
        rows = ["species,reaction,order"]
        rows += [f"{o.species},{o.reaction},{format_rational(o.order)}" for o in self.orders]
        return "\n".join(rows) + "\n"


class LimitCase:
    FULL_ODE = "FullODE"
    AVERAGED_ODE = "AveragedODE"
    LOGISTIC_SLOW = "LogisticSlow"
    UNCLASSIFIED = "Unclassified"


# --------------------------------------------------------------------------
# basic operations

def split_rate_constant(kappa, beta, n0):
    """``lambda = kappa * n0**-beta``; a Fraction when exact, else a float."""
    n0 = n0 if isinstance(n0, Fraction) else exact_decimal(n0)
    if n0 <= 1:
        raise ScalingError("n0 must exceed 1")
    k = kappa if isinstance(kappa, Fraction) else exact_decimal(kappa)
    p = exact_power(n0, -Fraction(beta))
    if p is not None:
        return k * p
    return float(k) * float(n0) ** (-float(beta))


def scaled_rate(net: Network, scaling: ScalingExponents, reaction: str) -> NPoly:
    """``lambda_k`` as a symbolic quantity ``kappa_k N^-beta_k`` (to be read at N = n0)."""
    r = net.reactions[net.reaction_index(reaction)]
    return NPoly.monomial(r.kappa_exact, -scaling.beta[reaction])


def _require_complete(net: Network, scaling: ScalingExponents):
    miss_s = [s for s in net.species_names if s not in scaling.alpha]
    miss_r = [r for r in net.reaction_names if r not in scaling.beta]
    if miss_s or miss_r:
        raise ScalingError(f"incomplete scaling: missing species {miss_s}, reactions {miss_r}")


def term_orders(net: Network, scaling: ScalingExponents) -> list[TermOrder]:
    _require_complete(net, scaling)
    out = []
    for k, r in enumerate(net.reactions):
        base = scaling.gamma + scaling.beta[r.name] + sum(scaling.alpha[s] * m for s, m in r.inputs)
        for i, sp in enumerate(net.species):
            change = r.output_of(sp.name) - r.input_of(sp.name)
            if change == 0:
                continue
            a = scaling.alpha[sp.name]
            out.append(TermOrder(sp.name, r.name, i, k, base - a, -a, change))
    return out


# --------------------------------------------------------------------------
# the viral template

# species roles 1=T (template), 2=G (genome), 3=S (structural protein)
_TEMPLATE_SPECIES = ("1", "2", "3")
_TEMPLATE_REACTIONS = {
    "a": ({"1": 1}, {"1": 1, "2": 1}),
    "b": ({"2": 1}, {"1": 1}),
    "c": ({"1": 1}, {"1": 1, "3": 1}),
    "d": ({"1": 1}, {}),
    "e": ({"3": 1}, {}),
    "f": ({"2": 1, "3": 1}, {}),
}
TEMPLATE_NAME = "viral-template"


def match_template(net: Network) -> dict[str, str] | None:
    """Map template roles onto ``net``; None if it does not fit.

    Species outside the three roles are allowed only as pure sinks (never
    consumed), which covers an explicitly tracked product of reaction f.
    """
    if net.n_reactions != 6 or net.n_species < 3:
        return None
    names = net.species_names
    inputs_of = [dict(r.inputs) for r in net.reactions]
    consumed = {s for d in inputs_of for s in d}
    for trio in itertools.permutations(names, 3):
        role = dict(zip(_TEMPLATE_SPECIES, trio))
        if any(s in consumed for s in names if s not in trio):
            continue
        used: set[int] = set()
        rmap: dict[str, str] = {}
        ok = True
        for rr, (tin, tout) in _TEMPLATE_REACTIONS.items():
            want_in = {role[s]: m for s, m in tin.items()}
            want_out = {role[s]: m for s, m in tout.items()}
            found = None
            for k, r in enumerate(net.reactions):
                if k in used:
                    continue
                outs = {s: m for s, m in r.outputs if s in trio}
                if dict(r.inputs) == want_in and outs == want_out:
                    found = k
                    break
            if found is None:
                ok = False
                break
            used.add(found)
            rmap[rr] = net.reactions[found].name
        if ok:
            return {**role, **rmap}
    return None


def _template_conditions(scaling: ScalingExponents, roles: Mapping[str, str]):
    a1, a2, a3 = (scaling.alpha[roles[s]] for s in _TEMPLATE_SPECIES)
    b1, b2, b3, b4, b5, b6 = (scaling.beta[roles[r]] for r in "abcdef")
    g = scaling.gamma
    conds = []

    def eq(name, lhs, rhs):
        conds.append(Condition(name, lhs, rhs, "=", lhs == rhs))

    def ge(name, lhs, rhs):
        conds.append(Condition(name, lhs, rhs, ">=", lhs >= rhs))

    eq("normalization beta_a = 0", b1, Fraction(0))
    eq("slow balance a: alpha_2 = gamma + beta_a + alpha_1", a2, g + b1 + a1)
    eq("slow balance b: alpha_2 = gamma + beta_b + alpha_2", a2, g + b2 + a2)
    eq("slow balance f: alpha_2 = gamma + beta_f + alpha_2 + alpha_3", a2, g + b6 + a2 + a3)
    eq("fast balance 1: gamma + beta_b + alpha_2 = gamma + beta_d + alpha_1", g + b2 + a2, g + b4 + a1)
    lhs = g + b3 + a1
    ge("fast balance 3 (c vs e): gamma + beta_c + alpha_1 >= gamma + beta_e + alpha_3", lhs, g + b5 + a3)
    ge("fast balance 3 (c vs f): gamma + beta_c + alpha_1 >= gamma + beta_f + alpha_2 + alpha_3", lhs, g + b6 + a2 + a3)
    tight = lhs == g + b5 + a3 or lhs == g + b6 + a2 + a3
    conds.append(Condition("fast balance 3: equality in at least one", lhs, lhs, "any-eq", tight))
    order = []
    chain = [("beta_f", b6), ("beta_b", b2), ("beta_d", b4), ("beta_a", b1), ("beta_e", b5), ("beta_c", b3)]
    for (n1, v1), (n2, v2) in zip(chain, chain[1:]):
        c = Condition(f"ordering {n1} <= {n2}", v1, v2, "<=", v1 <= v2)
        order.append(c)
    order.append(Condition("ordering beta_c > beta_e", b3, b5, ">", b3 > b5))
    return conds, order


def check_balance(net: Network, scaling: ScalingExponents, schema: str = "auto") -> BalanceReport:
    """Evaluate admissibility of ``scaling`` for ``net``.

    ``schema`` is "auto" (template if the network fits, else generic),
    "template" (raise :class:`UnsupportedSchema` if it does not fit) or
    "generic".
    """
    orders = term_orders(net, scaling)
    roles = None
    if schema in ("auto", "template"):
        roles = scaling.roles if scaling.roles and _roles_valid(net, scaling.roles) else match_template(net)
        if roles is None and schema == "template":
            raise UnsupportedSchema("network does not map onto the viral template")
    elif schema != "generic":
        raise ValueError(f"unknown schema {schema!r}")
    if roles is not None:
        conds, order = _template_conditions(scaling, roles)
        ordering_ok = all(c.holds for c in order)
        violated = [c.name for c in conds + order if not c.holds]
        return BalanceReport(orders, violated, ordering_ok, conds + order, TEMPLATE_NAME, dict(roles))
    violated = generic_violations(net, scaling, orders)
    return BalanceReport(orders, violated, True, [], None, None)


def _roles_valid(net, roles) -> bool:
    return all(roles.get(s) in net.species_names for s in _TEMPLATE_SPECIES) and all(
        roles.get(r) in net.reaction_names for r in "abcdef")


def generic_violations(net: Network, scaling: ScalingExponents, orders: list[TermOrder] | None = None) -> list[str]:
    """Generic admissibility.

    * Boundedness: for each species, either every term has order <= 0, or
      among its leading (maximal, positive order) terms there is a
      consumption, or a production by a reaction that is itself a leading
      consumer of one of its inputs (flux-limited production).
    * Non-degeneracy: at least one term has order exactly 0.
    """
    orders = term_orders(net, scaling) if orders is None else orders
    by_species: dict[str, list[TermOrder]] = {}
    for o in orders:
        by_species.setdefault(o.species, []).append(o)
    leading_consumers: dict[str, set[str]] = {}
    top: dict[str, Fraction] = {}
    for sp, terms in by_species.items():
        m = max(t.order for t in terms)
        top[sp] = m
        leading_consumers[sp] = {t.reaction for t in terms if t.order == m and t.change < 0}
    problems = []
    for sp, terms in by_species.items():
        m = top[sp]
        if m <= 0:
            continue
        lead = [t for t in terms if t.order == m]
        ok = False
        for t in lead:
            if t.change < 0:
                ok = True
                break
            rx = net.reactions[t.reaction_index]
            if any(t.reaction in leading_consumers.get(s, ()) for s, _ in rx.inputs):
                ok = True
                break
        if not ok:
            problems.append(f"unbounded growth of {sp} at order {format_rational(m)}")
    if not any(o.order == 0 for o in orders):
        problems.append("no term of order 0")
    return problems


# --------------------------------------------------------------------------
# case classification

def classify_case(scaling: ScalingExponents, net: Network | None = None) -> str:
    roles = scaling.roles
    if roles is None and net is not None:
        roles = match_template(net)
    if roles is None:
        return LimitCase.UNCLASSIFIED
    a1, a2 = scaling.alpha[roles["1"]], scaling.alpha[roles["2"]]
    b5 = scaling.beta[roles["e"]]
    if a1 == a2 and a1 > 0:
        if b5 == 0:
            return LimitCase.FULL_ODE
        if b5 > 0:
            return LimitCase.AVERAGED_ODE
        return LimitCase.UNCLASSIFIED
    if a2 > a1:
        return LimitCase.LOGISTIC_SLOW
    return LimitCase.UNCLASSIFIED


# --------------------------------------------------------------------------
# proposing exponents

def rational_grid(lo, hi, max_denominator: int) -> list[Fraction]:
    lo, hi = Fraction(lo), Fraction(hi)
    vals = set()
    for q in range(1, max_denominator + 1):
        for p in range(math.ceil(lo * q), math.floor(hi * q) + 1):
            vals.add(Fraction(p, q))
    return sorted(vals)


def default_n0(net: Network) -> Fraction:
    """Anchor: explicit ``n0`` if set, else the power of ten nearest the
    largest rate constant, or the largest initial count if that is bigger."""
    if net.n0 is not None:
        return exact_decimal(net.n0)
    biggest = max([r.kappa for r in net.reactions] + [float(s.initial) for s in net.species])
    if biggest <= 1:
        raise ScalingError("cannot infer an anchor n0 > 1; pass one explicitly")
    e = round(math.log10(biggest))
    if e < 1:
        raise ScalingError("cannot infer an anchor n0 > 1; pass one explicitly")
    return Fraction(10) ** e


def _log_n0(x: float, n0: Fraction) -> float:
    return math.log(x) / math.log(float(n0))


def _lambda_ok(net: Network, beta: Mapping[str, Fraction], n0: Fraction, window: float) -> bool:
    for r in net.reactions:
        if abs(_log_n0(r.kappa, n0) - float(beta[r.name])) >= window:
            return False
    return True


def _magnitude_ok(alpha, magnitudes, n0, tol):
    if not magnitudes:
        return True
    for s, mag in magnitudes.items():
        if abs(_log_n0(mag, n0) - float(alpha[s])) > tol:
            return False
    return True


def _sort_key(sc: ScalingExponents):
    return (sc.gamma, sum(abs(b) for b in sc.beta.values()), tuple(sc.alpha.values()), tuple(sc.beta.values()))


def propose_exponents(net: Network, magnitudes: Mapping[str, float] | None = None, n0=None,
                      max_denominator: int = 6, *, lambda_window: float = 1.0,
                      magnitude_tolerance: float = 0.5,
                      require: Callable[[ScalingExponents], bool] | None = None,
                      schema: str = "auto") -> list[ScalingExponents]:
    """Enumerate admissible rational scalings, sorted by (gamma, sum |beta|).

    ``lambda_window`` keeps only assignments whose scaled constants satisfy
    ``|log_n0 lambda_k| < lambda_window``. ``magnitudes`` (species ->
    typical abundance) keeps alphas within ``magnitude_tolerance`` of
    ``log_n0`` of the abundance. ``require`` is an extra filter.
    """
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")
    for s, m in (magnitudes or {}).items():
        if m <= 0:
            raise ValueError(f"magnitude of {s} must be positive")
    n0 = default_n0(net) if n0 is None else (n0 if isinstance(n0, Fraction) else exact_decimal(n0))
    roles = match_template(net) if schema in ("auto", "template") else None
    if roles is None and schema == "template":
        raise UnsupportedSchema("network does not map onto the viral template")
    if roles is not None:
        found = _propose_template(net, roles, n0, max_denominator, lambda_window)
    else:
        found = _propose_generic(net, magnitudes, n0, max_denominator, lambda_window)
    out = []
    seen = set()
    for sc in found:
        if not _magnitude_ok(sc.alpha, magnitudes, n0, magnitude_tolerance):
            continue
        if require is not None and not require(sc):
            continue
        if sc.key() in seen:
            continue
        seen.add(sc.key())
        out.append(sc)
    out.sort(key=_sort_key)
    return out


def _propose_template(net, roles, n0, D, window):
    # Free parameters alpha_1, gamma, beta_c, beta_e; the balance equalities
    # then force alpha_2 = alpha_1 + gamma, beta_b = -gamma, beta_d = 0,
    # alpha_3 = beta_c + alpha_1 - beta_e and beta_f = -gamma - alpha_3.
    # The other branch of the fast-3 equality (beta_c + alpha_1 = alpha_2)
    # forces beta_c = 0 and is incompatible with 0 = beta_a <= beta_e < beta_c.
    kap = {rr: net.reactions[net.reaction_index(roles[rr])].kappa for rr in "abcdef"}

    def win(rr, b):
        return abs(_log_n0(kap[rr], n0) - float(b)) < window

    alphas = rational_grid(0, 3, D)
    betas = rational_grid(-3, 3, D)
    out = []
    for g in rational_grid(0, 3, D):
        b2 = -g
        if not win("b", b2):
            continue
        for b5 in betas:
            if b5 < 0 or not win("e", b5):
                continue
            for b3 in betas:
                if b3 <= b5 or not win("c", b3):
                    continue
                for a1 in alphas:
                    a2, a3 = a1 + g, b3 + a1 - b5
                    b6 = -g - a3
                    if a2 > 3 or a3 > 3 or b6 < -3 or b6.denominator > D or a3.denominator > D:
                        continue
                    if not win("f", b6):
                        continue
                    beta = {"a": Fraction(0), "b": b2, "c": b3, "d": Fraction(0), "e": b5, "f": b6}
                    if not all(win(rr, beta[rr]) for rr in "ad"):
                        continue
                    sc = ScalingExponents(
                        alpha=_extend_alpha(net, {roles["1"]: a1, roles["2"]: a2, roles["3"]: a3}),
                        beta={roles[rr]: beta[rr] for rr in "abcdef"},
                        gamma=g, n0=n0, roles=dict(roles),
                    )
                    if check_balance(net, sc).admissible:
                        out.append(sc)
    return out


def _extend_alpha(net, alpha):
    # untracked sink species get alpha 0
    return {s: alpha.get(s, Fraction(0)) for s in net.species_names}


def _snap(x: float, D: int, lo=-3, hi=3) -> Fraction:
    grid = rational_grid(lo, hi, D)
    return min(grid, key=lambda q: (abs(float(q) - x), q.denominator))


def _propose_generic(net, magnitudes, n0, D, window):
    beta = {}
    for r in net.reactions:
        beta[r.name] = r.beta_hint if r.beta_hint is not None else _snap(_log_n0(r.kappa, n0), D)
    if not _lambda_ok(net, beta, n0, window):
        return []
    choices: list[list[Fraction]] = []
    for s in net.species:
        if s.alpha_hint is not None:
            choices.append([s.alpha_hint])
        elif magnitudes and s.name in magnitudes:
            choices.append([_snap(_log_n0(magnitudes[s.name], n0), D, 0, 1)])
        else:
            choices.append(rational_grid(0, 1, D))
    n_combo = math.prod(len(c) for c in choices)
    if n_combo > 2_000_000:
        raise ScalingError(f"search space too large ({n_combo} alpha combinations); supply hints or magnitudes")

    # integer arithmetic on a common denominator for speed
    L = math.lcm(*range(1, D + 1), *(b.denominator for b in beta.values()),
                 *(c.denominator for ch in choices for c in ch))
    names = net.species_names
    idx = {s: i for i, s in enumerate(names)}
    bet = [int(beta[r.name] * L) for r in net.reactions]
    ins = [[(idx[s], m) for s, m in r.inputs] for r in net.reactions]
    terms = []  # (species i, reaction k, change)
    for k, r in enumerate(net.reactions):
        for i, s in enumerate(names):
            ch = r.output_of(s) - r.input_of(s)
            if ch:
                terms.append((i, k, ch))
    if not terms:
        return []
    int_choices = [[int(c * L) for c in ch] for ch in choices]
    g_lo, g_hi = -3 * L, 3 * L
    out = []
    for combo in itertools.product(*int_choices):
        base = [bet[k] + sum(combo[i] * m for i, m in ins[k]) for k in range(len(bet))]
        raw = [base[k] - combo[i] for i, k, _ in terms]
        for g in sorted(set(-v for v in raw)):
            if g < g_lo or g > g_hi or Fraction(g, L).denominator > D:
                continue
            if _generic_ok_int(terms, raw, g, ins, len(names)):
                alpha = {s: Fraction(combo[i], L) for i, s in enumerate(names)}
                out.append(ScalingExponents(alpha=alpha, beta=dict(beta), gamma=Fraction(g, L), n0=n0))
    return out


def _generic_ok_int(terms, raw, g, ins, n_species) -> bool:
    top = [None] * n_species
    for (i, k, ch), v in zip(terms, raw):
        o = v + g
        if top[i] is None or o > top[i]:
            top[i] = o
    lead_cons = [set() for _ in range(n_species)]
    for (i, k, ch), v in zip(terms, raw):
        if v + g == top[i] and ch < 0:
            lead_cons[i].add(k)
    for i in range(n_species):
        m = top[i]
        if m is None or m <= 0:
            continue
        ok = False
        for (j, k, ch), v in zip(terms, raw):
            if j != i or v + g != m:
                continue
            if ch < 0 or any(k in lead_cons[s] for s, _ in ins[k]):
                ok = True
                break
        if not ok:
            return False
    return True


def scaling_from_hints(net: Network, gamma=0, n0=None) -> ScalingExponents:
    """Scaling built from the DSL ``alpha=``/``beta=`` hints; missing ones default to 0."""
    n0 = default_n0(net) if n0 is None else n0
    return ScalingExponents(
        alpha={s.name: s.alpha_hint or Fraction(0) for s in net.species},
        beta={r.name: r.beta_hint or Fraction(0) for r in net.reactions},
        gamma=Fraction(gamma), n0=n0,
    )


def parse_scaling(text: str, net: Network) -> ScalingExponents:
    """Read ``alpha NAME = q``, ``beta NAME = q``, ``gamma = q``, ``n0 = x`` lines."""
    from .network import parse_rational
    alpha, beta, gamma, n0 = {}, {}, Fraction(0), None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            lhs, rhs = (p.strip() for p in line.split("=", 1))
        except ValueError:
            raise ScalingError(f"line {lineno}: expected 'key = value'") from None
        parts = lhs.split()
        if parts[0] == "alpha" and len(parts) == 2:
            alpha[parts[1]] = parse_rational(rhs)
        elif parts[0] == "beta" and len(parts) == 2:
            beta[parts[1]] = parse_rational(rhs)
        elif parts == ["gamma"]:
            gamma = parse_rational(rhs)
        elif parts == ["n0"]:
            n0 = exact_decimal(rhs)
        else:
            raise ScalingError(f"line {lineno}: unknown key {lhs!r}")
    for s in net.species:
        alpha.setdefault(s.name, s.alpha_hint if s.alpha_hint is not None else Fraction(0))
    for r in net.reactions:
        if r.name not in beta:
            if r.beta_hint is None:
                raise ScalingError(f"no beta for reaction {r.name}")
            beta[r.name] = r.beta_hint
    return ScalingExponents(alpha, beta, gamma, n0 if n0 is not None else default_n0(net))


def render_scaling(sc: ScalingExponents) -> str:
    lines = [f"alpha {k} = {format_rational(v)}" for k, v in sc.alpha.items()]
    lines += [f"beta {k} = {format_rational(v)}" for k, v in sc.beta.items()]
    lines += [f"gamma = {format_rational(sc.gamma)}", f"n0 = {format_rational(sc.n0)}"]
    return "\n".join(lines) + "\n"
