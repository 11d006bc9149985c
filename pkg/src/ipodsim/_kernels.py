"""JIT-compiled inner loops.

The per-event helpers are shared by the Python reference path in
:mod:`ipodsim.dynamics` and by :func:`run_fixation`, so both consume the
random stream in the same order (wait, pair column, pair coin, song of i,
song of j) and produce bit-identical trajectories.
"""

import numpy as np
from numba import njit

RENORM_TOL = 1e-12
COLSUM_REFRESH = 1 << 16


@njit(cache=True)
def draw_wait(u, total_rate):
    return -np.log1p(-u) / total_rate


@njit(cache=True)
def draw_pair(alias_prob, alias_index, u_col, u_coin):
    k = alias_prob.shape[0]
    c = int(u_col * k)
    if c >= k:
        c = k - 1
    if u_coin < alias_prob[c]:
        return c
    return alias_index[c]


@njit(cache=True)
def scan_song(dist, u):
    """Inverse-CDF linear scan; falls back to the last positive entry."""
    acc = 0.0
    last = 0
    for k in range(dist.shape[0]):
        if dist[k] > 0.0:
            last = k
        acc += dist[k]
        if u < acc:
            return k
    return last


@njit(cache=True)
def apply_update(prefs, i, j, si, sj, eta, colsum_delta):
    """Update rows i and j in place from their pre-meeting values.

    Agent i hears song ``sj`` and agent j hears song ``si``. Writes the
    per-song change of the column sums into ``colsum_delta`` and returns the
    largest row-sum drift seen before renormalization.
    """
    n_songs = prefs.shape[1]
    keep = 1.0 - eta
    sum_i = 0.0
    sum_j = 0.0
    for k in range(n_songs):
        old_i = prefs[i, k]
        old_j = prefs[j, k]
        new_i = keep * old_i
        new_j = keep * old_j
        if k == sj:
            new_i += eta
        if k == si:
            new_j += eta
        prefs[i, k] = new_i
        prefs[j, k] = new_j
        colsum_delta[k] = (new_i - old_i) + (new_j - old_j)
        sum_i += new_i
        sum_j += new_j
    drift = max(abs(sum_i - 1.0), abs(sum_j - 1.0))
    if abs(sum_i - 1.0) > RENORM_TOL:
        for k in range(n_songs):
            v = prefs[i, k] / sum_i
            colsum_delta[k] += v - prefs[i, k]
            prefs[i, k] = v
    if abs(sum_j - 1.0) > RENORM_TOL:
        for k in range(n_songs):
            v = prefs[j, k] / sum_j
            colsum_delta[k] += v - prefs[j, k]
            prefs[j, k] = v
    return drift


@njit(cache=True, nogil=True)
def run_fixation(
    prefs,
    alias_prob,
    alias_index,
    pair_i,
    pair_j,
    total_rate,
    eta,
    rng,
    t0,
    patience,
    max_time,
    max_events,
    s_per_song,
    last_play,
):
    """Simulate until the fixation protocol stops or a cap fires.

    ``s_per_song`` (init -1) receives the first exit time of each M^k from
    (eta/2N, 1 - eta/2N); ``last_play`` (init -1) the last time each song was
    played. Returns ``(time, events, tau, tau_song, dissent_after_tau,
    max_step, max_row_drift, censored)``; ``tau`` is -1 if never reached.
    """
    n = prefs.shape[0]
    n_songs = prefs.shape[1]
    lo = eta / (2.0 * n)
    hi = 1.0 - lo
    colsum = np.zeros(n_songs)
    for a in range(n):
        for k in range(n_songs):
            colsum[k] += prefs[a, k]
    delta = np.zeros(n_songs)

    t = t0
    events = 0
    tau = -1.0
    tau_song = -1
    dissent = False
    max_step = 0.0
    max_drift = 0.0
    censored = False

    for k in range(n_songs):
        m = colsum[k] / n
        if s_per_song[k] < 0.0 and (m <= lo or m >= hi):
            s_per_song[k] = t
        if tau < 0.0 and m >= hi:
            tau = t
            tau_song = k

    while True:
        if tau >= 0.0:
            w = 0
            for k in range(1, n_songs):
                if colsum[k] > colsum[w]:
                    w = k
            if colsum[w] / n >= hi:
                last_dissent = 0.0
                for k in range(n_songs):
                    if k != w and last_play[k] > last_dissent:
                        last_dissent = last_play[k]
                if t - last_dissent >= patience:
                    break
        if events >= max_events:
            censored = True
            break
        t_next = t + draw_wait(rng.random(), total_rate)
        if t_next > max_time:
            censored = True
            break
        t = t_next
        e = draw_pair(alias_prob, alias_index, rng.random(), rng.random())
        i = pair_i[e]
        j = pair_j[e]
        si = scan_song(prefs[i], rng.random())
        sj = scan_song(prefs[j], rng.random())
        drift = apply_update(prefs, i, j, si, sj, eta, delta)
        events += 1
        if drift > max_drift:
            max_drift = drift
        for k in range(n_songs):
            colsum[k] += delta[k]
            step = abs(delta[k]) / n
            if step > max_step:
                max_step = step
        if events % COLSUM_REFRESH == 0:
            for k in range(n_songs):
                colsum[k] = 0.0
            for a in range(n):
                for k in range(n_songs):
                    colsum[k] += prefs[a, k]
        last_play[si] = t
        last_play[sj] = t
        if tau >= 0.0 and (si != tau_song or sj != tau_song):
            dissent = True
        for k in range(n_songs):
            if s_per_song[k] < 0.0:
                m = colsum[k] / n
                if m <= lo or m >= hi:
                    s_per_song[k] = t
        if tau < 0.0:
            for k in range(n_songs):
                if colsum[k] / n >= hi:
                    tau = t
                    tau_song = k
                    break

    return t, events, tau, tau_song, dissent, max_step, max_drift, censored


@njit(cache=True)
def wf_absorption_path(w0, dt, delta_abs, rng, max_steps):
    """Euler-Maruyama path of dW = sqrt(W(1-W)) dB, clamped to [0, 1]."""
    w = w0
    sq = np.sqrt(dt)
    for n in range(max_steps):
        if w <= delta_abs or w >= 1.0 - delta_abs:
            return n * dt
        var = w * (1.0 - w)
        if var < 0.0:
            var = 0.0
        w = w + np.sqrt(var) * sq * rng.standard_normal()
        if w < 0.0:
            w = 0.0
        elif w > 1.0:
            w = 1.0
    return -1.0


@njit(cache=True)
def wf_escape_path(w0, eps, dt, rng, max_steps):
    """Euler-Maruyama exit time of the open ball (w0 - eps, w0 + eps)."""
    w = w0
    sq = np.sqrt(dt)
    for n in range(max_steps):
        if abs(w - w0) >= eps:
            return n * dt
        var = w * (1.0 - w)
        if var < 0.0:
            var = 0.0
        w = w + np.sqrt(var) * sq * rng.standard_normal()
        if w < 0.0:
            w = 0.0
        elif w > 1.0:
            w = 1.0
    return -1.0


@njit(cache=True, nogil=True)
def wf_many(kind, w0, eps, dt, delta_abs, rng, n_paths, max_steps):
    out = np.empty(n_paths)
    for p in range(n_paths):
        if kind == 0:
            out[p] = wf_absorption_path(w0, dt, delta_abs, rng, max_steps)
        else:
            out[p] = wf_escape_path(w0, eps, dt, rng, max_steps)
    return out
