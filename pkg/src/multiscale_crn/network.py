"""Reaction networks, the line-oriented DSL, and mass-action propensities.

Rates use the subset-count convention: reaction ``k`` fires at rate
``kappa_k * prod_i C(x_i, nu_ik)`` where ``C`` is the binomial coefficient.
:func:`volume_form_kappa` converts a classical (concentration) constant into
this convention for a given system size.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_MULTIPLICITY = 8

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"


class NetworkError(ValueError):
    """Invalid network definition."""


class ParseError(NetworkError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


class UnknownSpeciesError(ParseError):
    pass


class InsufficientMolecules(NetworkError):
    """Raised when a reaction is applied to a state lacking its inputs."""


def parse_rational(text: str) -> Fraction:
    m = re.fullmatch(r"\s*([+-]?\d+)\s*(?:/\s*(\d+))?\s*", text)
    if not m:
        raise ValueError(f"not a rational: {text!r}")
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) else 1
    if den == 0:
        raise ValueError(f"zero denominator in {text!r}")
    return Fraction(num, den)


def format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def exact_decimal(value: float | str | Fraction | int) -> Fraction:
    """Exact rational for a rate literal; floats go through their shortest repr."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value.strip())


@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    initial: int = 0
    alpha_hint: Fraction | None = None

    def __post_init__(self):
        if not re.fullmatch(_NAME, self.name):
            raise NetworkError(f"invalid species name {self.name!r}")
        if int(self.initial) != self.initial or self.initial < 0:
            raise NetworkError(f"species {self.name}: initial count must be a nonnegative integer")
        object.__setattr__(self, "initial", int(self.initial))


def _as_complex(terms) -> tuple[tuple[str, int], ...]:
    if isinstance(terms, Mapping):
        terms = terms.items()
    merged: dict[str, int] = {}
    for name, mult in terms:
        if isinstance(mult, bool) or int(mult) != mult:
            raise NetworkError(f"non-integer multiplicity {mult!r} for {name}")
        mult = int(mult)
        if mult < 0:
            raise NetworkError(f"negative multiplicity {mult} for {name}")
        if mult == 0:
            continue
        merged[name] = merged.get(name, 0) + mult
    for name, mult in merged.items():
        if mult > MAX_MULTIPLICITY:
            raise NetworkError(f"multiplicity {mult} of {name} exceeds cap {MAX_MULTIPLICITY}")
    return tuple(merged.items())


@dataclass(frozen=True)
class Reaction:
    """One reaction channel.

    ``inputs``/``outputs`` accept a mapping or pairs and are stored as an
    ordered tuple of ``(species, multiplicity)``. ``kappa_exact`` keeps the
    rate literal as an exact rational for the scaling calculus; it defaults
    to the shortest decimal form of ``kappa``.
    """

    name: str
    inputs: tuple[tuple[str, int], ...]
    outputs: tuple[tuple[str, int], ...]
    kappa: float
    beta_hint: Fraction | None = None
    kappa_exact: Fraction | None = field(default=None, compare=False)

    def __post_init__(self):
        if not re.fullmatch(_NAME, self.name):
            raise NetworkError(f"invalid reaction name {self.name!r}")
        object.__setattr__(self, "inputs", _as_complex(self.inputs))
        object.__setattr__(self, "outputs", _as_complex(self.outputs))
        kappa = float(self.kappa)
        if not kappa > 0 or not math.isfinite(kappa):
            raise NetworkError(f"reaction {self.name}: rate constant must be positive, got {self.kappa!r}")
        object.__setattr__(self, "kappa", kappa)
        if self.kappa_exact is None:
            object.__setattr__(self, "kappa_exact", exact_decimal(kappa))

    @property
    def order(self) -> int:
        return sum(m for _, m in self.inputs)

    def input_of(self, species: str) -> int:
        return dict(self.inputs).get(species, 0)

    def output_of(self, species: str) -> int:
        return dict(self.outputs).get(species, 0)


@dataclass(frozen=True)
class Network:
    species: tuple[SpeciesSpec, ...]
    reactions: tuple[Reaction, ...]
    n0: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise NetworkError("species names must be unique")
        rnames = [r.name for r in self.reactions]
        if len(set(rnames)) != len(rnames):
            raise NetworkError("reaction names must be unique")
        if not self.reactions:
            raise NetworkError("a network needs at least one reaction")
        declared = set(names)
        for r in self.reactions:
            for sp, _ in r.inputs + r.outputs:
                if sp not in declared:
                    raise UnknownSpeciesError(f"reaction {r.name} references undeclared species {sp!r}")
        if self.n0 is not None and not self.n0 > 0:
            raise NetworkError("n0 must be positive")

    @property
    def species_names(self) -> list[str]:
        return [s.name for s in self.species]

    @property
    def reaction_names(self) -> list[str]:
        return [r.name for r in self.reactions]

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    def species_index(self, name: str) -> int:
        try:
            return self.species_names.index(name)
        except ValueError:
            raise UnknownSpeciesError(f"unknown species {name!r}") from None

    def reaction_index(self, name: str) -> int:
        try:
            return self.reaction_names.index(name)
        except ValueError:
            raise NetworkError(f"unknown reaction {name!r}") from None

    def initial_state(self) -> np.ndarray:
        return np.array([s.initial for s in self.species], dtype=np.int64)

    def with_kappas(self, kappas: Mapping[str, float | Fraction]) -> "Network":
        reactions = []
        for r in self.reactions:
            if r.name in kappas:
                value = kappas[r.name]
                reactions.append(Reaction(r.name, r.inputs, r.outputs, float(value), r.beta_hint,
                                          exact_decimal(value)))
            else:
                reactions.append(r)
        return Network(self.species, reactions, self.n0)

    def with_initial(self, counts: Mapping[str, int] | Sequence[int]) -> "Network":
        if not isinstance(counts, Mapping):
            counts = dict(zip(self.species_names, counts))
        species = [SpeciesSpec(s.name, counts.get(s.name, s.initial), s.alpha_hint) for s in self.species]
        return Network(species, self.reactions, self.n0)

    def without_hints(self) -> "Network":
        species = [SpeciesSpec(s.name, s.initial) for s in self.species]
        reactions = [Reaction(r.name, r.inputs, r.outputs, r.kappa, None, r.kappa_exact) for r in self.reactions]
        return Network(species, reactions, self.n0)

    @cached_property
    def compiled(self) -> "CompiledNetwork":
        return CompiledNetwork.from_network(self)


@dataclass(frozen=True)
class CompiledNetwork:
    """Flat integer arrays consumed by the simulation kernels.

    Reactant lists and net changes are stored CSR-style; ``dep_*`` lists, for
    each channel, the channels whose propensity must be refreshed after it
    fires.
    """

    n_species: int
    n_reactions: int
    kappa: np.ndarray
    react_ptr: np.ndarray
    react_sp: np.ndarray
    react_mult: np.ndarray
    delta_ptr: np.ndarray
    delta_sp: np.ndarray
    delta_val: np.ndarray
    dep_ptr: np.ndarray
    dep_rx: np.ndarray
    stoich: np.ndarray  # species x reactions

    @classmethod
    def from_network(cls, net: Network) -> "CompiledNetwork":
        idx = {name: i for i, name in enumerate(net.species_names)}
        react_ptr, react_sp, react_mult = [0], [], []
        delta_ptr, delta_sp, delta_val = [0], [], []
        stoich = stoichiometry_matrix(net)
        for k, r in enumerate(net.reactions):
            for sp, m in r.inputs:
                react_sp.append(idx[sp])
                react_mult.append(m)
            react_ptr.append(len(react_sp))
            for i in np.flatnonzero(stoich[:, k]):
                delta_sp.append(int(i))
                delta_val.append(int(stoich[i, k]))
            delta_ptr.append(len(delta_sp))
        depends_on = [set(react_sp[react_ptr[j]:react_ptr[j + 1]]) for j in range(net.n_reactions)]
        dep_ptr, dep_rx = [0], []
        for k in range(net.n_reactions):
            changed = set(delta_sp[delta_ptr[k]:delta_ptr[k + 1]])
            for j in range(net.n_reactions):
                if depends_on[j] & changed:
                    dep_rx.append(j)
            dep_ptr.append(len(dep_rx))
        i64 = lambda v: np.asarray(v, dtype=np.int64)
        return cls(
            n_species=net.n_species,
            n_reactions=net.n_reactions,
            kappa=np.array([r.kappa for r in net.reactions], dtype=np.float64),
            react_ptr=i64(react_ptr), react_sp=i64(react_sp), react_mult=i64(react_mult),
            delta_ptr=i64(delta_ptr), delta_sp=i64(delta_sp), delta_val=i64(delta_val),
            dep_ptr=i64(dep_ptr), dep_rx=i64(dep_rx),
            stoich=stoich,
        )


# --------------------------------------------------------------------------
# DSL

_SPECIES_RE = re.compile(
    rf"^species\s+({_NAME})\s+init\s*=\s*(\S+)(?:\s+alpha\s*=\s*(\S+))?$"
)
_REACTION_RE = re.compile(
    rf"^reaction\s+({_NAME})\s*:\s*(.*?)\s*->\s*(.*?)\s*@\s*(\S+)(?:\s+beta\s*=\s*(\S+))?$"
)
_N0_RE = re.compile(r"^n0\s*=\s*(\S+)$")
_TERM_RE = re.compile(rf"^(?:([+-]?\d+(?:\.\d*)?)\s*)?({_NAME})$")


def _parse_complex(text: str, lineno: int) -> list[tuple[str, int]]:
    text = text.strip()
    if text == "0":
        return []
    if not text:
        raise ParseError("empty complex (use 0 for no species)", lineno)
    terms = []
    for raw in text.split("+"):
        raw = raw.strip()
        m = _TERM_RE.match(raw)
        if not m:
            raise ParseError(f"malformed term {raw!r}", lineno)
        coef, name = m.groups()
        if coef is None:
            mult = 1
        else:
            if "." in coef:
                raise ParseError(f"non-integer multiplicity {coef!r}", lineno)
            mult = int(coef)
            if mult < 0:
                raise ParseError(f"negative multiplicity {coef!r}", lineno)
        terms.append((name, mult))
    return terms


def parse_network(text: str) -> Network:
    """Parse the line-oriented reaction DSL.

    >>> net = parse_network("species A init=2\\nspecies B init=0\\nreaction r: 2 A -> B @ 0.5")
    >>> net.reactions[0].inputs
    (('A', 2),)
    """
    species: list[SpeciesSpec] = []
    reactions: list[Reaction] = []
    n0 = None
    pending: list[tuple[int, str, list, list, str, str | None]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("species"):
            m = _SPECIES_RE.match(line)
            if not m:
                raise ParseError(f"malformed species declaration: {line!r}", lineno)
            name, init, alpha = m.groups()
            if not re.fullmatch(r"\d+", init):
                raise ParseError(f"initial count must be a nonnegative integer, got {init!r}", lineno)
            try:
                hint = parse_rational(alpha) if alpha else None
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if any(s.name == name for s in species):
                raise ParseError(f"duplicate species {name!r}", lineno)
            species.append(SpeciesSpec(name, int(init), hint))
        elif line.startswith("reaction"):
            m = _REACTION_RE.match(line)
            if not m:
                raise ParseError(f"malformed reaction declaration: {line!r}", lineno)
            name, lhs, rhs, rate, beta = m.groups()
            pending.append((lineno, name, _parse_complex(lhs, lineno), _parse_complex(rhs, lineno), rate, beta))
        elif line.startswith("n0"):
            m = _N0_RE.match(line)
            if not m:
                raise ParseError(f"malformed anchor declaration: {line!r}", lineno)
            try:
                n0 = float(m.group(1))
            except ValueError:
                raise ParseError(f"bad n0 value {m.group(1)!r}", lineno) from None
            if not n0 > 0:
                raise ParseError("n0 must be positive", lineno)
        else:
            raise ParseError(f"unrecognised statement: {line!r}", lineno)

    declared = {s.name for s in species}
    for lineno, name, lhs, rhs, rate, beta in pending:
        for sp, _ in lhs + rhs:
            if sp not in declared:
                raise UnknownSpeciesError(f"unknown species {sp!r} in reaction {name}", lineno)
        try:
            kappa_exact = exact_decimal(rate)
            kappa = float(rate)
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"bad rate constant {rate!r}", lineno) from None
        if not kappa > 0:
            raise ParseError(f"rate constant must be positive, got {rate}", lineno)
        try:
            hint = parse_rational(beta) if beta else None
            reactions.append(Reaction(name, lhs, rhs, kappa, hint, kappa_exact))
        except (NetworkError, ValueError) as exc:
            raise ParseError(str(exc), lineno) from None
    try:
        return Network(tuple(species), tuple(reactions), n0)
    except ParseError:
        raise
    except NetworkError as exc:
        raise ParseError(str(exc)) from None


def _render_complex(terms: Iterable[tuple[str, int]]) -> str:
    parts = [name if m == 1 else f"{m} {name}" for name, m in terms]
    return " + ".join(parts) if parts else "0"


def render_network(net: Network) -> str:
    lines = []
    if net.n0 is not None:
        lines.append(f"n0 = {net.n0!r}")
    for s in net.species:
        extra = f" alpha={format_rational(s.alpha_hint)}" if s.alpha_hint is not None else ""
        lines.append(f"species {s.name} init={s.initial}{extra}")
    for r in net.reactions:
        extra = f" beta={format_rational(r.beta_hint)}" if r.beta_hint is not None else ""
        lines.append(
            f"reaction {r.name}: {_render_complex(r.inputs)} -> {_render_complex(r.outputs)} @ {r.kappa!r}{extra}"
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Mass action


def propensity(net: Network, x: Sequence[int], k: int) -> float:
    """``kappa_k * prod_i C(x_i, nu_ik)``; zero when any input is short."""
    r = net.reactions[k]
    combos = 1
    for sp, m in r.inputs:
        xi = int(x[net.species_index(sp)])
        if xi < m:
            return 0.0
        combos *= math.comb(xi, m)
    return r.kappa * combos


def propensities(net: Network, x: Sequence[int]) -> np.ndarray:
    return np.array([propensity(net, x, k) for k in range(net.n_reactions)])


def volume_form_kappa(kappa_classical: float, order: int | Sequence[int], n: float) -> float:
    """Subset-count constant reproducing the volume-scaled mass-action rate.

    ``order`` is either the total order ``|nu_k|`` (all multiplicities taken
    as one) or the per-species input multiplicities.
    """
    if n <= 0:
        raise ValueError("scale must be positive")
    if isinstance(order, (int, np.integer)):
        mults = [1] * int(order)
    else:
        mults = [int(m) for m in order]
    if any(m < 0 for m in mults):
        raise ValueError("order must be nonnegative")
    total = sum(mults)
    fact = math.prod(math.factorial(m) for m in mults)
    return kappa_classical * fact * float(n) ** (1 - total)


def apply_reaction(x: Sequence[int], net: Network, k: int) -> np.ndarray:
    r = net.reactions[k]
    out = np.array(x, dtype=np.int64, copy=True)
    for sp, m in r.inputs:
        i = net.species_index(sp)
        if out[i] < m:
            raise InsufficientMolecules(f"reaction {r.name} needs {m} {sp}, state has {out[i]}")
    return out + net.compiled.stoich[:, k]


def stoichiometry_matrix(net: Network) -> np.ndarray:
    idx = {name: i for i, name in enumerate(net.species_names)}
    mat = np.zeros((net.n_species, net.n_reactions), dtype=np.int64)
    for k, r in enumerate(net.reactions):
        for sp, m in r.outputs:
            mat[idx[sp], k] += m
        for sp, m in r.inputs:
            mat[idx[sp], k] -= m
    return mat


def input_matrix(net: Network) -> np.ndarray:
    idx = {name: i for i, name in enumerate(net.species_names)}
    mat = np.zeros((net.n_species, net.n_reactions), dtype=np.int64)
    for k, r in enumerate(net.reactions):
        for sp, m in r.inputs:
            mat[idx[sp], k] += m
    return mat
