"""``multiscale-crn`` command line.

Exit codes: 0 success, 1 usage error, 2 parse error, 3 verification
failure, 4 truncated run or exhausted budget.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import exemplars, verify as verify_mod
from .limits import UnsupportedReduction, build_reduced, fluid_limit, integrate_ode
from .network import NetworkError, ParseError, format_rational, parse_network
from .scaling import (LimitCase, ScalingError, ScalingExponents, check_balance, classify_case, parse_scaling,
                      propose_exponents, scaling_from_hints)
from .simulate import RunConfig, StopRule, ssa_run, trajectory_csv
from .stats import BudgetExceeded, GridObservable, run_ensemble

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {raw!r}") from None


def _load_network(args):
    if getattr(args, "net", None) and getattr(args, "exemplar", None):
        raise UsageError("give either --net or --exemplar, not both")
    if getattr(args, "net", None):
        try:
            text = Path(args.net).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read {args.net}: {exc.strerror}") from None
        return parse_network(text), None
    if getattr(args, "exemplar", None):
        ex = exemplars.exemplar(args.exemplar)
        return ex.network, ex
    raise UsageError("one of --net or --exemplar is required")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# simulate / ensemble

def cmd_simulate(args) -> int:
    net, _ = _load_network(args)
    if args.t_end < 0:
        raise UsageError("--t-end must be nonnegative")
    grid = np.linspace(0.0, args.t_end, args.grid + 1) if args.grid else None
    tr = ssa_run(net, None, StopRule(args.t_end, max_events=args.max_events),
                 RunConfig(args.seed, args.method), record=grid is None, grid=grid)
    _write(trajectory_csv(tr, counts=args.counts), args.out)
    if tr.truncated:
        print(f"warning: run truncated after {tr.n_events} events at t={tr.final_time:g}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


_SPEC = re.compile(r"^\s*(mean|var|dist)\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*\)\s*@\s*([0-9.eE+-]+)\s*$")


def parse_observable(spec: str) -> tuple[str, str, float]:
    m = _SPEC.match(spec)
    if not m:
        raise UsageError(f"bad observable {spec!r}; expected mean(X)@t, var(X)@t or dist(X)@t")
    kind, name, t = m.groups()
    try:
        return kind, name, float(t)
    except ValueError:
        raise UsageError(f"bad time in observable {spec!r}") from None


def ensemble_csv(st, specs, n_runs) -> str:
    """Rows ``time,observable,mean,var,se,n``. ``dist`` adds one row per
    observed value ``k`` named ``P(X=k)`` whose mean is the frequency."""
    lines = ["time,observable,mean,var,se,n"]
    done = set()
    for kind, name, t in specs:
        key = f"{name}@{t:g}"
        j = st.index(key)
        if kind in ("mean", "var"):
            if key in done:
                continue
            done.add(key)
            lines.append(f"{t:g},{name},{float(st.mean[j])!r},{float(st.var[j])!r},{float(st.se[j])!r},{st.n_runs}")
        else:
            x = st.samples[:, j].astype(np.int64)
            values, counts = np.unique(x, return_counts=True)
            for v, c in zip(values, counts):
                p = c / len(x)
                lines.append(f"{t:g},P({name}={v}),{float(p)!r},{float(p * (1 - p))!r},{math.sqrt(p * (1 - p) / len(x))!r},{len(x)}")
    return "\n".join(lines) + "\n"


def cmd_ensemble(args) -> int:
    net, _ = _load_network(args)
    if args.runs < 2:
        raise UsageError("--runs must be at least 2")
    specs = [parse_observable(s) for s in args.observable] or \
        [("mean", s, args.t_end) for s in net.species_names]
    for _, name, t in specs:
        if name not in net.species_names:
            raise UsageError(f"observable names unknown species {name!r}")
        if not 0 <= t <= args.t_end:
            raise UsageError(f"observable time {t:g} outside [0, {args.t_end:g}]")
    times = tuple(sorted({t for _, _, t in specs}))
    species = tuple(dict.fromkeys(name for _, name, _ in specs))
    st = run_ensemble(net, None, StopRule(args.t_end, max_events=args.max_events), args.runs, args.seed,
                      GridObservable(times, species), method=args.method, threads=args.threads)
    _write(ensemble_csv(st, specs, args.runs), args.out)
    if st.n_truncated:
        print(f"warning: {st.n_truncated} of {args.runs} runs truncated", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# --------------------------------------------------------------------------
# scale / reduce

def _hint_scaling(net, n0) -> ScalingExponents | None:
    if not (all(s.alpha_hint is not None for s in net.species)
            and all(r.beta_hint is not None for r in net.reactions)):
        return None
    sc = scaling_from_hints(net, n0=n0)
    # hints fix alpha and beta only; take gamma from a matching admissible proposal
    for p in propose_exponents(net, n0=sc.n0):
        if p.alpha == sc.alpha and p.beta == sc.beta:
            return p
    return sc


def cmd_scale(args) -> int:
    net, ex = _load_network(args)
    n0 = Fraction(str(args.n0)) if args.n0 is not None else None
    given = None
    if args.scaling:
        given = parse_scaling(Path(args.scaling).read_text(), net)
    elif ex is not None:
        given = ex.scaling if n0 is None else ex.scaling.with_(n0=n0)
    out = []
    if given is not None:
        rep = check_balance(net, given)
        out.append("given scaling: " + given.describe())
        out.append(rep.text())
        out.append(f"case: {classify_case(given, net)}")
        if args.csv:
            Path(args.csv).write_text(rep.csv())
    props = propose_exponents(net.without_hints() if args.ignore_hints else net, n0=n0,
                              max_denominator=args.max_denom)
    shown = props if not args.limit else props[: args.limit]
    out.append(f"{len(props)} admissible proposals (sorted by gamma, then sum |beta|):")
    for sc in shown:
        tag = classify_case(sc, net)
        mark = " *given*" if given is not None and sc.key() == given.with_(n0=sc.n0).key() else ""
        out.append(f"  [{tag}] {sc.describe()}{mark}")
    if len(shown) < len(props):
        out.append(f"  ... {len(props) - len(shown)} more (raise --limit)")
    if given is None and props and args.csv:
        Path(args.csv).write_text(check_balance(net, props[0]).csv())
    print("\n".join(out))
    return EXIT_OK


def _parse_init(text: str | None, names) -> dict[str, float]:
    out = {}
    if not text:
        return out
    for part in text.split(","):
        try:
            k, v = part.split("=")
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"bad --init entry {part!r}; expected NAME=value") from None
        if k.strip() not in names:
            raise UsageError(f"--init names unknown variable {k.strip()!r}")
    return out


def cmd_reduce(args) -> int:
    net, ex = _load_network(args)
    if args.scaling and args.auto:
        raise UsageError("give either --scaling or --auto")
    if args.scaling:
        sc = parse_scaling(Path(args.scaling).read_text(), net)
    elif args.auto:
        sc = _hint_scaling(net, None) if ex is None else ex.scaling
        if sc is None:
            props = propose_exponents(net, max_denominator=args.max_denom)
            classified = [p for p in props if classify_case(p, net) != LimitCase.UNCLASSIFIED]
            if not (classified or props):
                print("no admissible scaling found", file=sys.stderr)
                return EXIT_RUNTIME
            sc = (classified or props)[0]
    else:
        raise UsageError("one of --scaling or --auto is required")
    try:
        red = build_reduced(net, sc)
        ode = red.components["ode"]
        print(red.report())
    except UnsupportedReduction as exc:
        ode = fluid_limit(net, sc)
        print(f"case: {classify_case(sc, net)} ({exc})")
        print(f"scaling: {sc.describe()}")
        print("scaled fluid limit (order-0 terms):")
        print("\n".join(ode.equations()))
        if ode.fast_terms:
            print("dropped fast terms: " + ", ".join(f"{s}/{r} order {format_rational(o)}"
                                                   for s, r, o in ode.fast_terms))
    if args.out:
        x0 = net.initial_state()
        init = [x0[net.species_index(s)] / sc.power(sc.alpha[s]) for s in ode.species]
        over = _parse_init(args.init, ode.species)
        init = [over.get(s, v) for s, v in zip(ode.species, init)]
        path = integrate_ode(ode, init, args.t_end, args.step)
        Path(args.out).write_text(path.csv())
    return EXIT_OK


# --------------------------------------------------------------------------
# verify / list

def cmd_verify(args) -> int:
    checks = verify_mod.verify(args.exemplar, args.level, args.seed)
    failed = [c for c in checks if not c.passed]
    for c in checks:
        print(c.line())
    for c in failed:
        print(f"check failed: {c.name}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_list(args) -> int:
    for name in exemplars.names():
        ex = exemplars.exemplar(name)
        print(f"{name}: {ex.description}")
        print(f"  species: {', '.join(ex.network.species_names)}; scalings: {', '.join(ex.scalings)}")
        print(f"  oracles: {', '.join(sorted(ex.oracles))}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    seed = _env_int("MULTISCALE_CRN_SEED", verify_mod.DEFAULT_SEED)
    threads = _env_int("MULTISCALE_CRN_THREADS", 1)
    p = _Parser(prog="multiscale-crn", description="Simulate and reduce multiscale reaction networks.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def source(sp):
        sp.add_argument("--net", help="network DSL file")
        sp.add_argument("--exemplar", choices=exemplars.names())

    def sim_flags(sp):
        source(sp)
        sp.add_argument("--t-end", type=float, required=True)
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--method", choices=["direct", "next-reaction"], default="direct")
        sp.add_argument("--max-events", type=int, default=10**9)
        sp.add_argument("--out", help="output CSV (default stdout)")

    s = sub.add_parser("simulate", help="one trajectory as CSV")
    sim_flags(s)
    s.add_argument("--grid", type=int, default=0, help="record on N equal steps instead of at jumps")
    s.add_argument("--counts", action="store_true", help="write reaction counts instead of species")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("ensemble", help="ensemble statistics as CSV")
    sim_flags(e)
    e.add_argument("--runs", type=int, required=True)
    e.add_argument("--observable", action="append", default=[], metavar="SPEC",
                   help="mean(X)@t, var(X)@t or dist(X)@t (repeatable)")
    e.add_argument("--threads", type=int, default=threads)
    e.set_defaults(func=cmd_ensemble)

    c = sub.add_parser("scale", help="balance report and proposed exponents")
    source(c)
    c.add_argument("--n0", type=float)
    c.add_argument("--max-denom", type=int, default=6)
    c.add_argument("--scaling", help="scaling file to check")
    c.add_argument("--csv", help="write species,reaction,order table here")
    c.add_argument("--limit", type=int, default=0, help="show at most this many proposals (0 = all)")
    c.add_argument("--ignore-hints", action="store_true", help="search without the DSL alpha/beta hints")
    c.set_defaults(func=cmd_scale)

    r = sub.add_parser("reduce", help="reduced-model report")
    source(r)
    r.add_argument("--scaling")
    r.add_argument("--auto", action="store_true")
    r.add_argument("--max-denom", type=int, default=6)
    r.add_argument("--out", help="write the integrated reduced ODE path as CSV")
    r.add_argument("--t-end", type=float, default=1.0)
    r.add_argument("--step", type=float, default=1e-3)
    r.add_argument("--init", help="initial values NAME=v,... in scaled units")
    r.set_defaults(func=cmd_reduce)

    v = sub.add_parser("verify", help="run an exemplar's acceptance checks")
    v.add_argument("exemplar", choices=list(verify_mod.SUITES))
    v.add_argument("--level", choices=list(verify_mod.LEVELS), default="fast")
    v.add_argument("--seed", type=int, default=seed)
    v.set_defaults(func=cmd_verify)

    ls = sub.add_parser("list-exemplars", help="registry listing")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be positive")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ScalingError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NetworkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
