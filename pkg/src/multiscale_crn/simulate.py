"""Exact stochastic simulation of mass-action networks.

Two interchangeable backends drive the inner loop: a compiled Cython kernel
and a pure-Python fallback. The compiled one is used when it imports, unless
``MULTISCALE_CRN_PURE=1`` is set. Both consume the same random stream and
produce identical trajectories.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _ssa_py
from .network import Network

try:
    if os.environ.get("MULTISCALE_CRN_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from . import _ssa_kernel as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

_BACKENDS = {"python": _ssa_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled
_backend_name = "cython" if _compiled is not None else "python"

METHODS = {"direct": 0, "next-reaction": 1}

HORIZON, ABSORBED, PREDICATE, TRUNCATED = 0, 1, 2, 3
STATUS_NAMES = {HORIZON: "horizon", ABSORBED: "absorbed", PREDICATE: "predicate", TRUNCATED: "truncated"}

DEFAULT_MAX_EVENTS = 10**9


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend() -> str:
    return _backend_name


def set_backend(name: str) -> None:
    global _backend_name
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _backend_name = name


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearPredicate:
    """``sum_i w_i X_i + sum_k v_k R_k >= level``, evaluated inside the kernel."""

    species_weights: dict[str, float] = field(default_factory=dict)
    reaction_weights: dict[str, float] = field(default_factory=dict)
    level: float = 0.0

    def arrays(self, net: Network) -> tuple[np.ndarray, np.ndarray]:
        ws = np.zeros(net.n_species)
        wr = np.zeros(net.n_reactions)
        for name, w in self.species_weights.items():
            ws[net.species_index(name)] = w
        for name, w in self.reaction_weights.items():
            wr[net.reaction_index(name)] = w
        return ws, wr

    def holds(self, x, counts, net: Network) -> bool:
        ws, wr = self.arrays(net)
        return float(ws @ np.asarray(x, float) + wr @ np.asarray(counts, float)) >= self.level


def reaction_count_at_least(reaction: str, k: int) -> LinearPredicate:
    return LinearPredicate(reaction_weights={reaction: 1.0}, level=float(k))


def species_at_least(species: str, level: float) -> LinearPredicate:
    return LinearPredicate(species_weights={species: 1.0}, level=float(level))


Predicate = LinearPredicate | Callable[[float, np.ndarray, np.ndarray], bool]


@dataclass(frozen=True)
class StopRule:
    horizon: float = math.inf
    predicate: Predicate | None = None
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        if self.max_events <= 0:
            raise ValueError("max_events must be positive")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    method: str = "direct"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")

    def bit_generator(self) -> np.random.BitGenerator:
        return np.random.PCG64(self.seed & 0xFFFFFFFFFFFFFFFF)


def trajectory_seed(base: int, index: int) -> int:
    return (int(base) ^ int(index)) & 0xFFFFFFFFFFFFFFFF


@dataclass
class Trajectory:
    """One sample path.

    Jumps are kept as (time, channel) pairs; states and reaction counts are
    rebuilt from them on demand, which makes the bookkeeping identity
    ``X = X(0) + S R`` hold by construction. When ``record=False`` only the
    endpoint and any grid observations are kept.
    """

    species: list[str]
    reactions: list[str]
    stoich: np.ndarray
    x0: np.ndarray
    counts0: np.ndarray
    t0: float
    final_time: float
    final_state: np.ndarray
    final_counts: np.ndarray
    n_events: int
    status: int
    jump_times: np.ndarray | None = None
    jump_channels: np.ndarray | None = None
    grid_times: np.ndarray | None = None
    grid_states: np.ndarray | None = None
    grid_counts: np.ndarray | None = None
    hit_time: float | None = None

    @property
    def truncated(self) -> bool:
        return self.status == TRUNCATED

    @property
    def absorbed(self) -> bool:
        return self.status == ABSORBED

    @property
    def status_name(self) -> str:
        return STATUS_NAMES[self.status]

    def _need_jumps(self):
        if self.jump_times is None:
            raise SimulationError("trajectory was run without jump recording")

    @property
    def states(self) -> np.ndarray:
        """State after each jump, with the initial state first; shape (n+1, S)."""
        self._need_jumps()
        out = np.empty((len(self.jump_channels) + 1, len(self.x0)), dtype=np.int64)
        out[0] = self.x0
        if len(self.jump_channels):
            np.cumsum(self.stoich.T[self.jump_channels], axis=0, out=out[1:])
            out[1:] += self.x0
        return out

    @property
    def reaction_counts(self) -> np.ndarray:
        self._need_jumps()
        n, R = len(self.jump_channels), len(self.counts0)
        onehot = np.zeros((n + 1, R), dtype=np.int64)
        onehot[np.arange(1, n + 1), self.jump_channels] = 1
        return np.cumsum(onehot, axis=0) + self.counts0

    @property
    def times(self) -> np.ndarray:
        self._need_jumps()
        return np.concatenate([[self.t0], self.jump_times])


def _run_kernel(net, x0, counts0, t0, stop: StopRule, method: int, bitgen,
                record: bool, grid, backend=None):
    cn = net.compiled
    grid = np.asarray([] if grid is None else grid, dtype=np.float64)
    pred = stop.predicate
    use_pred = pred is not None
    if use_pred and isinstance(pred, LinearPredicate):
        ws, wr = pred.arrays(net)
        level = float(pred.level)
    else:
        ws, wr, level = np.zeros(net.n_species), np.zeros(net.n_reactions), 0.0
    if use_pred and not isinstance(pred, LinearPredicate):
        return _run_callable(cn, x0, counts0, t0, stop, method, bitgen, record, grid)
    mod = _BACKENDS[backend or _backend_name]
    return mod.run(cn, x0, counts0, float(t0), float(stop.horizon), int(stop.max_events), method,
                   bitgen, bool(record), grid, ws, wr, level, bool(use_pred))


def _run_callable(cn, x0, counts0, t0, stop, method, bitgen, record, grid):
    zs, zr = np.zeros(cn.n_species), np.zeros(cn.n_reactions)
    return _ssa_py.run(cn, x0, counts0, float(t0), float(stop.horizon), int(stop.max_events), method,
                       bitgen, bool(record), grid, zs, zr, 0.0, True, pred_fn=stop.predicate)


def ssa_run(net: Network, x0: Sequence[int] | None = None, stop: StopRule | None = None,
            cfg: RunConfig | None = None, *, record: bool = True, grid: Sequence[float] | None = None,
            t0: float = 0.0, counts0: Sequence[int] | None = None,
            rng: np.random.Generator | None = None, backend: str | None = None) -> Trajectory:
    """Simulate one trajectory.

    ``rng`` lets a caller continue a run with the generator it already used
    (the chain is Markov, so the continuation is an exact sample). Grid
    points past a truncation are left unfilled and reported via
    ``grid_states`` being shorter than ``grid_times``.
    """
    stop = stop or StopRule()
    cfg = cfg or RunConfig()
    x0 = net.initial_state() if x0 is None else np.asarray(x0, dtype=np.int64)
    if len(x0) != net.n_species or np.any(x0 < 0):
        raise ValueError("initial state must have one nonnegative count per species")
    counts0 = np.zeros(net.n_reactions, dtype=np.int64) if counts0 is None else np.asarray(counts0, np.int64)
    bitgen = rng.bit_generator if rng is not None else cfg.bit_generator()
    if grid is not None:
        grid = np.asarray(grid, dtype=np.float64)
        if np.any(np.diff(grid) < 0):
            raise ValueError("grid times must be nondecreasing")
        if len(grid) and (grid[0] < t0 or grid[-1] > stop.horizon):
            raise ValueError("grid times must lie within [t0, horizon]")
    out = _run_kernel(net, x0, counts0, t0, stop, METHODS[cfg.method], bitgen, record, grid, backend)
    t, x, cnt, n_events, status, jt, jc, gx, gc, ng, hit = out
    traj = Trajectory(
        species=net.species_names, reactions=net.reaction_names, stoich=net.compiled.stoich,
        x0=np.array(x0, dtype=np.int64), counts0=counts0.copy(), t0=float(t0), final_time=float(t),
        final_state=np.asarray(x), final_counts=np.asarray(cnt), n_events=int(n_events), status=int(status),
        hit_time=float(hit) if status == PREDICATE else None,
    )
    if record:
        traj.jump_times, traj.jump_channels = np.asarray(jt), np.asarray(jc, dtype=np.int64)
    if grid is not None:
        traj.grid_times = grid
        traj.grid_states = np.asarray(gx)[:ng]
        traj.grid_counts = np.asarray(gc)[:ng]
    return traj


@dataclass(frozen=True)
class Hit:
    time: float
    state: np.ndarray
    counts: np.ndarray


def ssa_until(net: Network, x0, predicate: Predicate, cfg: RunConfig | None = None, *,
              horizon: float = math.inf, max_events: int = DEFAULT_MAX_EVENTS, record: bool = True,
              rng: np.random.Generator | None = None, backend: str | None = None):
    if predicate is None:
        raise ValueError("ssa_until needs a predicate")
    traj = ssa_run(net, x0, StopRule(horizon, predicate, max_events), cfg, record=record, rng=rng,
                   backend=backend)
    hit = None
    if traj.status == PREDICATE:
        hit = Hit(traj.hit_time, traj.final_state.copy(), traj.final_counts.copy())
    return traj, hit


def observe_grid(traj: Trajectory, times: Sequence[float]) -> np.ndarray:
    """Right-continuous evaluation: the state after the last jump at or before each time."""
    times = np.asarray(times, dtype=np.float64)
    if len(times) and (times.min() < traj.t0 or times.max() > traj.final_time):
        raise ValueError(f"observation times must lie in [{traj.t0}, {traj.final_time}]")
    idx = np.searchsorted(traj.jump_times, times, side="right")
    return traj.states[idx]


def observe_counts(traj: Trajectory, times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if len(times) and (times.min() < traj.t0 or times.max() > traj.final_time):
        raise ValueError(f"observation times must lie in [{traj.t0}, {traj.final_time}]")
    return traj.reaction_counts[np.searchsorted(traj.jump_times, times, side="right")]


@dataclass
class ScaledPath:
    times: np.ndarray
    values: np.ndarray  # rows are time points, columns species
    species: list[str]


def rescale_trajectory(traj: Trajectory | ScaledPath, scaling) -> ScaledPath:
    """``Z_i = X_i / N0^alpha_i`` against time ``t / N0^gamma``."""
    if isinstance(traj, Trajectory):
        times, values, species = traj.times, traj.states.astype(float), traj.species
    else:
        times, values, species = traj.times, traj.values, traj.species
    missing = [s for s in species if s not in scaling.alpha]
    if missing:
        raise KeyError(f"scaling lacks exponents for {missing}")
    div = np.array([scaling.power(scaling.alpha[s]) for s in species])
    return ScaledPath(np.asarray(times) / scaling.power(scaling.gamma), values / div, list(species))


def unscale_path(path: ScaledPath, scaling) -> ScaledPath:
    mult = np.array([scaling.power(scaling.alpha[s]) for s in path.species])
    return ScaledPath(path.times * scaling.power(scaling.gamma), path.values * mult, list(path.species))


def trajectory_csv(traj: Trajectory, *, counts: bool = False, grid: Sequence[float] | None = None) -> str:
    """CSV text with header ``time,<species>`` (or ``time,<reactions>`` for counts)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = traj.reactions if counts else traj.species
    w.writerow(["time", *names])
    if grid is not None:
        times = np.asarray(grid, dtype=float)
        rows = observe_counts(traj, times) if counts else observe_grid(traj, times)
    elif traj.jump_times is not None:
        times = traj.times
        rows = traj.reaction_counts if counts else traj.states
    elif traj.grid_times is not None:
        times = traj.grid_times[: len(traj.grid_states)]
        rows = traj.grid_counts if counts else traj.grid_states
    else:
        times = np.array([traj.final_time])
        rows = (traj.final_counts if counts else traj.final_state)[None, :]
    for t, row in zip(times, rows):
        w.writerow([repr(float(t)), *(int(v) for v in row)])
    return buf.getvalue()


def read_trajectory_csv(text: str) -> tuple[list[str], np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "time":
        raise ValueError("trajectory CSV must start with a time column")
    times = np.array([float(r[0]) for r in body])
    values = np.array([[int(v) for v in r[1:]] for r in body], dtype=np.int64).reshape(len(body), len(header) - 1)
    return header[1:], times, values
