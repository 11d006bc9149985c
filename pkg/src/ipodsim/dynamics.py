"""Event-driven simulation of the preference-exchange process.

Every unordered pair {i, j} carries a Poisson clock of rate ``nu[i, j]``.
At a meeting both agents draw a song from their pre-meeting preferences,
play it to the other, and each moves its own preferences towards the song
it heard: ``x <- (1 - eta) x + eta * e_heard``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import DimensionError, DomainError
from .graphs import WeightedGraph

MAX_EVENTS = 10**9


@dataclass(frozen=True)
class ModelParams:
    n_agents: int
    n_songs: int
    eta: float

    def __post_init__(self):
        if self.n_agents < 2:
            raise DomainError(f"need at least 2 agents, got {self.n_agents}")
        if self.n_songs < 1:
            raise DomainError(f"need at least 1 song, got {self.n_songs}")
        if not 0.0 < self.eta < 1.0:
            raise DomainError(f"eta must lie in (0, 1), got {self.eta}")


@dataclass
class PreferenceState:
    """Row ``i`` of ``prefs`` is agent i's distribution over songs."""

    prefs: np.ndarray
    time: float = 0.0
    meeting_count: int = 0
    censored: bool = False

    @property
    def n_agents(self) -> int:
        return self.prefs.shape[0]

    @property
    def n_songs(self) -> int:
        return self.prefs.shape[1]

    def averages(self) -> np.ndarray:
        """Per-song average preference M^k."""
        return self.prefs.mean(axis=0)

    def copy(self) -> "PreferenceState":
        return PreferenceState(self.prefs.copy(), self.time, self.meeting_count, self.censored)

    def is_absorbed(self) -> bool:
        """True when every agent holds the same point mass, so no other song can ever play."""
        first = self.prefs[0]
        winner = int(np.argmax(first))
        return bool(np.all(self.prefs[:, winner] == 1.0) and np.count_nonzero(self.prefs) == self.n_agents)


@dataclass(frozen=True)
class MeetingEvent:
    time: float
    agents: tuple
    songs_played: tuple
    delta_m: np.ndarray = field(repr=False)


def init_uniform(params: ModelParams) -> PreferenceState:
    prefs = np.full((params.n_agents, params.n_songs), 1.0 / params.n_songs)
    return PreferenceState(prefs)


def init_point_mass(params: ModelParams, assignment) -> PreferenceState:
    """Agent ``i`` starts with all its preference on song ``assignment[i]`` (0-based)."""
    assignment = np.asarray(assignment)
    if assignment.shape != (params.n_agents,):
        raise DimensionError(f"assignment must have length {params.n_agents}")
    if assignment.size and (assignment.min() < 0 or assignment.max() >= params.n_songs):
        raise DomainError(f"song indices must lie in [0, {params.n_songs})")
    prefs = np.zeros((params.n_agents, params.n_songs))
    prefs[np.arange(params.n_agents), assignment.astype(np.int64)] = 1.0
    return PreferenceState(prefs)


def balanced_assignment(n_agents: int, n_songs: int) -> np.ndarray:
    """Songs dealt round-robin, so every M^k_0 is within 1/N of 1/sigma."""
    return np.arange(n_agents) % n_songs


def sample_meeting(g: WeightedGraph, rng: np.random.Generator):
    """Next meeting of the superposed pair clocks: ``(wait, (i, j))``."""
    wait = _kernels.draw_wait(rng.random(), g.total_rate)
    e = _kernels.draw_pair(g.alias_prob, g.alias_index, rng.random(), rng.random())
    return wait, (int(g.pair_i[e]), int(g.pair_j[e]))


def sample_song(dist, rng: np.random.Generator) -> int:
    return int(_kernels.scan_song(np.asarray(dist, dtype=np.float64), rng.random()))


def apply_meeting(state: PreferenceState, pair, params: ModelParams, rng) -> MeetingEvent:
    """Apply one meeting at the current ``state.time`` and return the event record."""
    i, j = pair
    if i == j:
        raise DomainError("an agent cannot meet itself")
    prefs = state.prefs
    si = int(_kernels.scan_song(prefs[i], rng.random()))
    sj = int(_kernels.scan_song(prefs[j], rng.random()))
    delta = np.empty(prefs.shape[1])
    _kernels.apply_update(prefs, i, j, si, sj, params.eta, delta)
    delta /= prefs.shape[0]
    assert np.all(np.abs(delta) <= 2 * params.eta / prefs.shape[0] + 1e-12)
    state.meeting_count += 1
    return MeetingEvent(state.time, (i, j), (si, sj), delta)


def run_until(
    state: PreferenceState,
    g: WeightedGraph,
    params: ModelParams,
    stop: Callable[[PreferenceState], bool],
    recorder=None,
    rng: Optional[np.random.Generator] = None,
    max_events: int = MAX_EVENTS,
) -> PreferenceState:
    """Run meetings until ``stop(state)`` holds.

    The state is modified in place and returned. Exceeding ``max_events``
    sets ``state.censored`` instead of raising.
    """
    if state.prefs.shape != (params.n_agents, params.n_songs) or g.n_agents != params.n_agents:
        raise DimensionError("state, graph and params disagree on dimensions")
    if rng is None:
        rng = np.random.default_rng()
    events = 0
    while not stop(state):
        if events >= max_events:
            state.censored = True
            break
        wait, pair = sample_meeting(g, rng)
        state.time += wait
        apply_meeting(state, pair, params, rng)
        events += 1
        if recorder is not None:
            recorder.offer(state, g)
    return state
