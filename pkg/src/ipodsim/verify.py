"""Randomized checks of the exact drift identities, shared by the CLI and tests."""

from __future__ import annotations

import numpy as np

from .dynamics import PreferenceState
from .graphs import build_complete, build_cycle, dirichlet_form, from_matrix
from .observables import generator_drift, q_statistic

FAMILIES = ("complete", "cycle", "custom")


def random_custom_graph(n, rng):
    w = rng.exponential(size=(n, n))
    w = np.triu(w, 1)
    return from_matrix(w + w.T, normalize=True)


def random_state(n, sigma, rng):
    return PreferenceState(rng.dirichlet(np.full(sigma, 0.5), size=n))


def closed_forms(state, g, k, eta):
    n = state.n_agents
    q = q_statistic(state, k)
    eps = dirichlet_form(g, state.prefs[:, k])
    return {
        "M": 0.0,
        "M_squared": 2 * eta**2 / n * q,
        "Q": 4 * eta * (1 - eta) * eps - 2 * eta**2 * q,
        "M_one_minus_M": -2 * eta**2 / n * q,
    }


def drift_identity_errors(n_states: int, seed: int) -> dict:
    """Largest |generator drift - closed form| per quantity over random states and graphs."""
    rng = np.random.default_rng(seed)
    worst = {name: 0.0 for name in ("M", "M_squared", "Q", "M_one_minus_M")}
    for s in range(n_states):
        family = FAMILIES[s % len(FAMILIES)]
        n = int(rng.integers(4, 65))
        sigma = int(rng.integers(1, 9))
        eta = float(rng.uniform(0.0, 1.0))
        while eta == 0.0:
            eta = float(rng.uniform(0.0, 1.0))
        if family == "complete":
            g = build_complete(n)
        elif family == "cycle":
            g = build_cycle(n)
        else:
            g = random_custom_graph(n, rng)
        state = random_state(n, sigma, rng)
        for k in range(sigma):
            expected = closed_forms(state, g, k, eta)
            for name, value in expected.items():
                err = abs(generator_drift(state, g, k, name, eta) - value)
                worst[name] = max(worst[name], err)
    return worst
