"""Brute-force master-equation solutions on small reachable state spaces."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .network import Network, propensities


class StateSpaceTooLarge(RuntimeError):
    pass


@dataclass
class CMESolution:
    states: list[tuple[int, ...]]
    probabilities: np.ndarray

    def index(self) -> dict[tuple[int, ...], int]:
        return {s: i for i, s in enumerate(self.states)}

    def marginal(self, species: int) -> np.ndarray:
        top = max(s[species] for s in self.states)
        out = np.zeros(top + 1)
        for s, p in zip(self.states, self.probabilities):
            out[s[species]] += p
        return out


def reachable_states(net: Network, x0, cap: int = 500) -> list[tuple[int, ...]]:
    stoich = net.compiled.stoich
    start = tuple(int(v) for v in x0)
    seen = {start: 0}
    order = [start]
    queue = deque([start])
    while queue:
        x = queue.popleft()
        a = propensities(net, x)
        for k in np.flatnonzero(a > 0):
            y = tuple(int(v) for v in np.asarray(x) + stoich[:, k])
            if y not in seen:
                if len(order) >= cap:
                    raise StateSpaceTooLarge(f"more than {cap} reachable states")
                seen[y] = len(order)
                order.append(y)
                queue.append(y)
    return order


def generator_matrix(net: Network, states) -> np.ndarray:
    """Rate matrix ``Q`` with ``Q[i, j]`` the rate from state i to j; rows sum to 0."""
    idx = {s: i for i, s in enumerate(states)}
    stoich = net.compiled.stoich
    Q = np.zeros((len(states), len(states)))
    for i, x in enumerate(states):
        a = propensities(net, x)
        for k in np.flatnonzero(a > 0):
            j = idx[tuple(int(v) for v in np.asarray(x) + stoich[:, k])]
            Q[i, j] += a[k]
        Q[i, i] -= a.sum()
    return Q


def solve_cme(net: Network, x0, t: float, cap: int = 500) -> CMESolution:
    states = reachable_states(net, x0, cap)
    Q = generator_matrix(net, states)
    p0 = np.zeros(len(states))
    p0[0] = 1.0
    p = p0 @ expm(Q * t)
    p = np.clip(p, 0.0, None)
    return CMESolution(states, p / p.sum())
