"""Population observables and exact one-meeting drift oracles.

For a single song the meeting update of agent i is
``x_i <- (1 - eta) x_i + eta * B_j`` with ``B_j ~ Bernoulli(x_j)``, so the
conditional expectation of any function of the configuration given that
i and j meet is a four-term sum over the joint outcomes of (B_i, B_j).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import DomainError
from .graphs import WeightedGraph, dirichlet_form

QUANTITIES = ("M", "M_squared", "Q", "M_one_minus_M")
WIDE_SONGS = 8


def _column(state, k):
    if not 0 <= k < state.n_songs:
        raise DomainError(f"song index {k} out of range [0, {state.n_songs})")
    return state.prefs[:, k]


def average_preference(state, k: int) -> float:
    return float(_column(state, k).mean())


def q_statistic(state, k: int) -> float:
    x = _column(state, k)
    return float(np.mean(x * (1.0 - x)))


def _pair_drifts(x, i, j, eta, quantity):
    """E(change of quantity | i meets j) for arrays of pairs (i, j)."""
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}")
    n = x.size
    m = x.mean()
    xi = x[i]
    xj = x[j]
    out = np.zeros(np.shape(xi))
    for bi in (0, 1):
        p_i = xi if bi else 1.0 - xi
        for bj in (0, 1):
            p_j = xj if bj else 1.0 - xj
            new_i = (1.0 - eta) * xi + eta * bj
            new_j = (1.0 - eta) * xj + eta * bi
            dm = ((new_i - xi) + (new_j - xj)) / n
            if quantity == "M":
                change = dm
            elif quantity == "M_squared":
                change = 2.0 * m * dm + dm * dm
            elif quantity == "M_one_minus_M":
                change = dm - (2.0 * m * dm + dm * dm)
            else:
                change = (
                    new_i * (1.0 - new_i) - xi * (1.0 - xi) + new_j * (1.0 - new_j) - xj * (1.0 - xj)
                ) / n
            out = out + p_i * p_j * change
    return out


def meeting_drift_oracle(state, pair, k: int, quantity: str, eta: float) -> float:
    """Exact E(change | i and j meet) of ``quantity`` for song ``k``."""
    i, j = pair
    if i == j:
        raise DomainError("an agent cannot meet itself")
    x = _column(state, k)
    return float(_pair_drifts(x, np.array([i]), np.array([j]), eta, quantity)[0])


def generator_drift(state, g: WeightedGraph, k: int, quantity: str, eta: float) -> float:
    """sum over ordered pairs (i, j) of nu_ij * E(change | i and j meet).

    Each unordered pair enters twice, matching the drift identities in the
    form ``(2 eta^2 / N) Q`` and ``4 eta (1 - eta) eps - 2 eta^2 Q``; the
    drift per unit time of the single-clock-per-pair dynamics is half this.
    """
    x = _column(state, k)
    i, j = g.pair_i, g.pair_j
    forward = _pair_drifts(x, i, j, eta, quantity)
    backward = _pair_drifts(x, j, i, eta, quantity)
    return float(np.sum(g.pair_weight * (forward + backward)))


def interval_safety_check(x0: float, eps: float) -> bool:
    """Whether x(1-x) stays >= x0(1-x0)/2 on [x0 - eps, x0 + eps] by the eps <= x0(1-x0)/2 rule."""
    if not 0.0 < x0 < 1.0:
        raise DomainError(f"x0 must lie in (0, 1), got {x0}")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    return eps <= x0 * (1.0 - x0) / 2.0


@dataclass(frozen=True)
class ObservableSnapshot:
    time: float
    m: np.ndarray
    songs: tuple
    q: tuple
    heterozygosity: tuple
    dirichlet: tuple

    def to_json(self) -> dict:
        return {
            "time": self.time,
            "m": [float(v) for v in self.m],
            "songs": list(self.songs),
            "q": list(self.q),
            "het": list(self.heterozygosity),
            "dirichlet": list(self.dirichlet),
        }


def snapshot(state, g: WeightedGraph) -> ObservableSnapshot:
    """Observables of the live state; per-song traces for up to 8 songs, else the leading song only."""
    m = state.averages()
    if state.n_songs <= WIDE_SONGS:
        songs = tuple(range(state.n_songs))
    else:
        songs = (int(np.argmax(m)),)
    q = tuple(q_statistic(state, k) for k in songs)
    het = tuple(float(m[k] * (1.0 - m[k])) for k in songs)
    dirichlet = tuple(dirichlet_form(g, state.prefs[:, k]) for k in songs)
    return ObservableSnapshot(state.time, m, songs, q, het, dirichlet)


@dataclass
class ObservableSeries:
    """Append-only trace recorded every ``stride`` events (default: N)."""

    stride: int = 0
    snapshots: List[ObservableSnapshot] = field(default_factory=list)
    _seen: int = 0

    def offer(self, state, g: WeightedGraph, force: bool = False):
        stride = self.stride or g.n_agents
        if not force:
            self._seen += 1
            if self._seen % stride:
                return self
        if self.snapshots and state.time <= self.snapshots[-1].time:
            return self
        self.snapshots.append(snapshot(state, g))
        return self

    def __len__(self):
        return len(self.snapshots)


def record(recorder: ObservableSeries, state, g: WeightedGraph) -> ObservableSeries:
    return recorder.offer(state, g)
