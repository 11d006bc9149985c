"""Trials, stopping times, fixation-time estimates, bound formulas and sweeps."""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .dynamics import (
    MAX_EVENTS,
    ModelParams,
    PreferenceState,
    balanced_assignment,
    init_point_mass,
    init_uniform,
)
from .errors import DomainError
from .graphs import WeightedGraph, build_complete, build_cycle, build_torus
from .streams import derive_stream

DEFAULT_BETA = 20.0
MAX_CENSORED_FRACTION = 0.2
Z95 = 1.959963984540054

SWEEP_COLUMNS = [
    "family", "n", "sigma", "eta", "lambda", "trials", "censored",
    "mean_tfix", "ci_lo", "ci_hi", "mean_smax", "mean_tau", "slope_group",
    "max_n_inv_lambda",
]
TRIAL_COLUMNS = [
    "trial", "winner", "t_fix_estimate", "last_dissent_time", "censored", "tau",
    "s_max", "meetings", "final_time", "dissent_after_tau",
]


# ---------------------------------------------------------------- bounds

def _effective_gap(lam, clamp_gap):
    if lam <= 0:
        raise DomainError(f"spectral gap must be positive, got {lam}")
    return min(lam, 1.0) if clamp_gap else lam


def upper_bound_value(params: ModelParams, lam: float, c: float, clamp_gap: bool = False) -> float:
    """c ln(sigma) N / lambda."""
    lam = _effective_gap(lam, clamp_gap)
    if params.n_songs == 1:
        warnings.warn("one song: fixation is immediate, bound is 0", stacklevel=2)
        return 0.0
    return c * math.log(params.n_songs) * params.n_agents / lam


def eta_upper_bound_value(params: ModelParams, lam: float, c: float, clamp_gap: bool = False) -> float:
    """c ln(sigma) N / (lambda eta^3 (1 - eta))."""
    lam = _effective_gap(lam, clamp_gap)
    eta = params.eta
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    return c * math.log(params.n_songs) * params.n_agents / (lam * eta**3 * (1.0 - eta))


def complete_graph_lower_bound(n: int, eta: float, sigma: int) -> float:
    """(N / (4 eta^2 sigma)) ((1/(8 sigma) - 2 eta/N)^2 - 1/(N-1)), or 0 when vacuous."""
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    margin = 1.0 / (8 * sigma) - 2 * eta / n
    if margin <= 0:
        return 0.0
    inner = margin * margin - 1.0 / (n - 1)
    if inner <= 0:
        return 0.0
    return n / (4 * eta * eta * sigma) * inner


# ---------------------------------------------------------------- stopping times

@dataclass
class StoppingTimes:
    """First-exit times; NaN means not yet observed."""

    s_per_song: np.ndarray
    s_max: float
    tau: float
    winner_candidate: int


def detect_stopping_times(stream, eta: float, n_agents: int) -> StoppingTimes:
    """Scan ``(time, m)`` pairs (or snapshots with ``.time``/``.m``) in time order.

    Boundaries are closed: song k has exited once M^k <= eta/2N or
    M^k >= 1 - eta/2N.
    """
    lo = eta / (2.0 * n_agents)
    hi = 1.0 - lo
    s = None
    tau = math.nan
    winner = -1
    for item in stream:
        t, m = (item.time, item.m) if hasattr(item, "m") else item
        m = np.asarray(m)
        if s is None:
            s = np.full(m.size, math.nan)
        fresh = np.isnan(s) & ((m <= lo) | (m >= hi))
        s[fresh] = t
        if math.isnan(tau):
            top = np.flatnonzero(m >= hi)
            if top.size:
                tau = t
                winner = int(top[0])
    if s is None:
        s = np.array([])
    s_max = float(s.max()) if s.size and not np.any(np.isnan(s)) else math.nan
    return StoppingTimes(s, s_max, tau, winner)


# ---------------------------------------------------------------- trials

@dataclass
class TrialConfig:
    family: str = "complete"
    n: int = 16
    sigma: int = 2
    eta: float = 0.5
    init: str = "balanced"
    beta: float = DEFAULT_BETA
    max_events: int = MAX_EVENTS
    max_time: Optional[float] = None
    clamp_gap: bool = False

    def params(self) -> ModelParams:
        return ModelParams(self.n, self.sigma, self.eta)


def build_graph(family: str, n: int) -> WeightedGraph:
    if family == "complete":
        return build_complete(n)
    if family == "cycle":
        return build_cycle(n)
    if family == "torus":
        side = math.isqrt(n)
        if side * side != n:
            raise DomainError(f"torus family needs a square agent count, got {n}")
        return build_torus(side, side)
    raise DomainError(f"unknown graph family {family!r}")


def initial_state(config: TrialConfig) -> PreferenceState:
    params = config.params()
    if config.init == "balanced":
        return init_point_mass(params, balanced_assignment(config.n, config.sigma))
    if config.init == "uniform":
        return init_uniform(params)
    if config.init == "unanimous":
        return init_point_mass(params, np.zeros(config.n, dtype=np.int64))
    raise DomainError(f"unknown init {config.init!r}")


@dataclass
class TrialRecord:
    seed: int
    trial: int
    winner: int
    t_fix_estimate: float
    last_dissent_time: float
    censored: bool
    tau: float
    s_max: float
    meetings: int
    final_time: float
    dissent_after_tau: bool
    max_step: float
    max_row_drift: float
    s_per_song: np.ndarray = field(repr=False)
    wall_seconds: float = 0.0

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in TRIAL_COLUMNS}


def caps_for(config: TrialConfig, lam: float):
    """Default caps: 50 * max(upper bound with c = 10, N) time units, 10^9 events."""
    if config.max_time is not None:
        return config.max_time, config.max_events
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ub = upper_bound_value(config.params(), lam, 10.0, config.clamp_gap)
    return 50.0 * max(ub, float(config.n)), config.max_events


def estimate_fixation(config: TrialConfig, rng: np.random.Generator, graph: WeightedGraph | None = None,
                      state: PreferenceState | None = None, seed: int = -1, trial: int = -1) -> TrialRecord:
    """One fixation trial.

    After tau (some M^k >= 1 - eta/2N) the run continues until the leading
    song is above that threshold and nobody has played any other song for
    a patience window beta N / lambda. The estimate is the last time any
    song other than the final winner was played (0 if never).
    """
    started = time.perf_counter()
    g = graph if graph is not None else build_graph(config.family, config.n)
    if g.n_agents != config.n:
        raise DomainError("graph size does not match config.n")
    lam = _effective_gap(g.gap, config.clamp_gap)
    state = initial_state(config) if state is None else state
    sigma = state.n_songs
    if state.is_absorbed():
        winner = int(np.argmax(state.prefs[0]))
        return TrialRecord(seed, trial, winner, 0.0, 0.0, False, state.time, state.time, 0,
                           state.time, False, 0.0, 0.0, np.full(sigma, state.time),
                           time.perf_counter() - started)
    max_time, max_events = caps_for(config, lam)
    patience = config.beta * config.n / lam
    s_per_song = np.full(sigma, -1.0)
    last_play = np.full(sigma, -1.0)
    t, events, tau, _, dissent, max_step, max_drift, censored = _kernels.run_fixation(
        state.prefs, g.alias_prob, g.alias_index, g.pair_i, g.pair_j, g.total_rate,
        config.eta, rng, state.time, patience, max_time, int(max_events), s_per_song, last_play,
    )
    state.time = t
    state.meeting_count += int(events)
    state.censored = bool(censored)
    winner = int(np.argmax(state.prefs.sum(axis=0)))
    others = np.delete(last_play, winner)
    last_dissent = float(max(others.max(initial=0.0), 0.0))
    s = np.where(s_per_song < 0, math.nan, s_per_song)
    s_max = float(s.max()) if not np.any(np.isnan(s)) else math.nan
    return TrialRecord(
        seed=seed,
        trial=trial,
        winner=winner,
        t_fix_estimate=last_dissent,
        last_dissent_time=last_dissent,
        censored=bool(censored),
        tau=float(tau) if tau >= 0 else math.nan,
        s_max=s_max,
        meetings=int(events),
        final_time=float(t),
        dissent_after_tau=bool(dissent),
        max_step=float(max_step),
        max_row_drift=float(max_drift),
        s_per_song=s,
        wall_seconds=time.perf_counter() - started,
    )


def worker_count() -> int:
    env = os.environ.get("IPOD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_trials(config: TrialConfig, trials: int, master_seed: int, cell_index: int = 0,
               graph: WeightedGraph | None = None, workers: int | None = None) -> list:
    """Independent trials, each on stream (master_seed, cell_index, trial); returned in trial order."""
    g = graph if graph is not None else build_graph(config.family, config.n)
    g.spectrum  # computed once, before the threads share the graph

    def one(k):
        rng = derive_stream(master_seed, k, cell_index)
        return estimate_fixation(config, rng, graph=g, seed=master_seed, trial=k)

    workers = workers or worker_count()
    if workers <= 1 or trials <= 1:
        return [one(k) for k in range(trials)]
    first = one(0)  # compile before fanning out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rest = list(pool.map(one, range(1, trials)))
    return [first] + rest


# ---------------------------------------------------------------- aggregation

@dataclass
class Summary:
    trials: int
    censored: int
    mean: float
    ci: tuple
    valid: bool


def summarize(values: Sequence[float], censored_flags: Sequence[bool]) -> Summary:
    """Mean and normal-approximation 95% CI over uncensored trials."""
    values = np.asarray(values, dtype=float)
    flags = np.asarray(censored_flags, dtype=bool)
    kept = values[~flags]
    n_cens = int(flags.sum())
    valid = values.size > 0 and n_cens <= MAX_CENSORED_FRACTION * values.size and kept.size > 0
    if not valid:
        return Summary(values.size, n_cens, math.nan, (math.nan, math.nan), False)
    mean = float(kept.mean())
    half = Z95 * float(kept.std(ddof=1)) / math.sqrt(kept.size) if kept.size > 1 else math.nan
    return Summary(values.size, n_cens, mean, (mean - half, mean + half), True)


def summarize_fixation(records) -> Summary:
    return summarize([r.t_fix_estimate for r in records], [r.censored for r in records])


def loglog_slope(xs, ys) -> float:
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


def empirical_smax(config: TrialConfig, trials: int, master_seed: int, graph=None, records=None) -> dict:
    """Mean and CI of S_max and tau, and the ratio mean(tau) / mean(S_max)."""
    if config.sigma < 2:
        raise DomainError("S_max needs at least two songs")
    if records is None:
        records = run_trials(config, trials, master_seed, graph=graph)
    flags = [r.censored or math.isnan(r.s_max) for r in records]
    smax = summarize([r.s_max for r in records], flags)
    tau = summarize([r.tau for r in records], flags)
    ratio = tau.mean / smax.mean if smax.valid and smax.mean > 0 else math.nan
    return {"mean": smax.mean, "ci": smax.ci, "mean_tau": tau.mean, "tau_ratio": ratio, "summary": smax}


def post_tau_quiet_fraction(records) -> tuple:
    """Fraction of trials that reached tau with no other song played afterwards, and its binomial SE."""
    reached = [r for r in records if not r.censored and not math.isnan(r.tau)]
    if not reached:
        return math.nan, math.nan, 0
    p = sum(not r.dissent_after_tau for r in reached) / len(reached)
    return p, math.sqrt(p * (1 - p) / len(reached)), len(reached)


@dataclass
class BoundReport:
    upper_value: float
    eta_upper_value: float
    lower_value: float
    empirical_mean: float
    empirical_ci: tuple


def bound_report(config: TrialConfig, lam: float, c: float = 1.0, records=None) -> BoundReport:
    params = config.params()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        upper = upper_bound_value(params, lam, c, config.clamp_gap)
    eta_upper = eta_upper_bound_value(params, lam, c, config.clamp_gap)
    lower = complete_graph_lower_bound(config.n, config.eta, config.sigma) if config.family == "complete" else math.nan
    if records:
        s = summarize_fixation(records)
        mean, ci = s.mean, s.ci
    else:
        mean, ci = math.nan, (math.nan, math.nan)
    return BoundReport(upper, eta_upper, lower, mean, ci)


# ---------------------------------------------------------------- sweeps

CELL_KEYS = {"family", "n", "sigma", "eta", "trials", "init", "beta", "max_events", "max_time", "clamp_gap"}


def cell_config(cell: dict) -> TrialConfig:
    unknown = set(cell) - CELL_KEYS
    if unknown:
        raise DomainError(f"unknown sweep cell keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in cell.items() if k != "trials"}
    return TrialConfig(**kwargs)


def sweep(plan: dict, master_seed: int, workers: int | None = None, records_out: list | None = None) -> list:
    """Run every cell of ``plan["cells"]`` and return CSV-ready rows.

    Cell ``c`` draws its trials from streams (master_seed, c, trial). If
    ``records_out`` is given, each cell's trial records are appended to it.
    ``slope_group`` is the log-log slope of mean T_fix against N over valid
    cells sharing (family, sigma, eta, init, beta).
    """
    rows = []
    groups = {}
    for index, cell in enumerate(plan["cells"]):
        config = cell_config(cell)
        trials = int(cell.get("trials", 100))
        g = build_graph(config.family, config.n)
        records = run_trials(config, trials, master_seed, cell_index=index, graph=g, workers=workers)
        if records_out is not None:
            records_out.append(records)
        fix = summarize_fixation(records)
        flags = [r.censored for r in records]
        lam = g.gap
        row = {
            "family": config.family,
            "n": config.n,
            "sigma": config.sigma,
            "eta": config.eta,
            "lambda": lam,
            "trials": trials,
            "censored": fix.censored,
            "mean_tfix": fix.mean,
            "ci_lo": fix.ci[0],
            "ci_hi": fix.ci[1],
            "mean_smax": summarize([r.s_max for r in records], flags).mean,
            "mean_tau": summarize([r.tau for r in records], flags).mean,
            "slope_group": math.nan,
            "max_n_inv_lambda": max(float(config.n), 1.0 / lam),
        }
        rows.append(row)
        if fix.valid:
            key = (config.family, config.sigma, config.eta, config.init, config.beta)
            groups.setdefault(key, []).append(row)
    for members in groups.values():
        ns = {r["n"] for r in members}
        if len(ns) >= 2:
            slope = loglog_slope([r["n"] for r in members], [r["mean_tfix"] for r in members])
            for r in members:
                r["slope_group"] = slope
    return rows
