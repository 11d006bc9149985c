import math
from fractions import Fraction
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from ipodsim import _kernels
from ipodsim.dynamics import ModelParams, balanced_assignment, init_point_mass, run_until
from ipodsim.errors import DomainError
from ipodsim.experiments import (
    SWEEP_COLUMNS,
    TrialConfig,
    bound_report,
    build_graph,
    caps_for,
    cell_config,
    complete_graph_lower_bound,
    detect_stopping_times,
    empirical_smax,
    estimate_fixation,
    eta_upper_bound_value,
    initial_state,
    loglog_slope,
    post_tau_quiet_fraction,
    run_trials,
    summarize,
    summarize_fixation,
    sweep,
    upper_bound_value,
)
from ipodsim.graphs import build_complete, build_cycle
from ipodsim.streams import derive_stream


# -- bound formulas

def test_upper_bound_examples():
    p = ModelParams(64, 2, 0.5)
    assert upper_bound_value(p, 1.0, 1.0) == pytest.approx(64 * math.log(2))
    assert upper_bound_value(p, 1.0, 1.0) == pytest.approx(44.36, abs=0.01)
    assert upper_bound_value(ModelParams(128, 2, 0.5), 1.0, 1.0) == pytest.approx(2 * upper_bound_value(p, 1.0, 1.0))
    with pytest.warns(UserWarning):
        assert upper_bound_value(ModelParams(64, 1, 0.5), 1.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        upper_bound_value(p, 0.0, 1.0)


def test_clamped_gap():
    p = ModelParams(8, 2, 0.5)
    lam = 8 / 7
    assert upper_bound_value(p, lam, 1.0, clamp_gap=True) == pytest.approx(8 * math.log(2))
    assert upper_bound_value(p, lam, 1.0) == pytest.approx(7 * math.log(2))


def test_eta_upper_bound_examples():
    p = ModelParams(64, 2, 0.5)
    assert eta_upper_bound_value(p, 1.0, 1.0) == pytest.approx(64 * math.log(2) / 0.0625)
    assert eta_upper_bound_value(p, 1.0, 1.0) == pytest.approx(709.8, abs=0.05)
    small = eta_upper_bound_value(ModelParams(64, 2, 1e-4), 1.0, 1.0)
    large = eta_upper_bound_value(ModelParams(64, 2, 1 - 1e-6), 1.0, 1.0)
    assert small > 1e12 and large > 1e7


def test_eta_upper_bound_minimizer():
    res = minimize_scalar(
        lambda e: eta_upper_bound_value(ModelParams(64, 2, e), 1.0, 1.0),
        bounds=(0.01, 0.99), method="bounded", options={"xatol": 1e-10},
    )
    assert res.x == pytest.approx(0.75, abs=1e-5)


def test_lower_bound_examples():
    n, eta, sigma = 10**4, Fraction(1, 2), 2
    exact = Fraction(n) / (4 * eta**2 * sigma) * ((Fraction(1, 8 * sigma) - 2 * eta / n) ** 2 - Fraction(1, n - 1))
    assert complete_graph_lower_bound(n, 0.5, sigma) == pytest.approx(float(exact), abs=1e-12)
    assert complete_graph_lower_bound(n, 0.5, sigma) == pytest.approx(18.969, abs=1e-3)
    assert complete_graph_lower_bound(100, 0.5, 2) == 0.0
    assert complete_graph_lower_bound(10, 0.5, 2) == 0.0
    big = [complete_graph_lower_bound(n, 0.5, 2) for n in (10**6, 2 * 10**6)]
    assert big[1] / big[0] == pytest.approx(2.0, rel=1e-3)
    with pytest.raises(DomainError):
        complete_graph_lower_bound(1, 0.5, 2)


# -- stopping times

def test_detect_unanimous_start():
    st = detect_stopping_times([(0.0, [1.0, 0.0, 0.0])], 0.5, 8)
    assert st.tau == 0.0 and st.s_max == 0.0 and np.all(st.s_per_song == 0.0)
    assert st.winner_candidate == 0


def test_detect_closed_boundaries():
    n, eta = 4, 0.5
    lo = eta / (2 * n)
    stream = [(0.0, [0.5, 0.5]), (1.0, [lo, 1 - lo]), (2.0, [0.0, 1.0])]
    st = detect_stopping_times(stream, eta, n)
    assert st.tau == 1.0 and st.winner_candidate == 1
    assert np.all(st.s_per_song == 1.0)


def test_detect_unobserved_is_nan():
    st = detect_stopping_times([(0.0, [0.3, 0.3, 0.4])], 0.5, 10)
    assert math.isnan(st.tau) and math.isnan(st.s_max) and st.winner_candidate == -1
    assert np.all(np.isnan(st.s_per_song))


class Trace:
    def __init__(self):
        self.items = []

    def offer(self, state, g):
        self.items.append((state.time, state.averages()))


def _python_trace(n, sigma, eta, events, seed):
    g = build_cycle(n) if n > 3 else build_complete(n)
    p = ModelParams(n, sigma, eta)
    s = init_point_mass(p, balanced_assignment(n, sigma))
    trace = Trace()
    trace.items.append((0.0, s.averages()))
    run_until(s, g, p, lambda st_: st_.meeting_count >= events, recorder=trace, rng=derive_stream(seed, 0))
    return g, trace.items


def test_two_songs_exit_together():
    _, items = _python_trace(12, 2, 0.5, 20000, seed=4)
    st = detect_stopping_times(items, 0.5, 12)
    assert not math.isnan(st.tau)
    assert st.s_per_song[0] == st.s_per_song[1]


def test_kernel_stopping_times_match_python_scan():
    n, sigma, eta, events = 10, 3, 0.5, 30000
    g, items = _python_trace(n, sigma, eta, events, seed=6)
    ref = detect_stopping_times(items, eta, n)
    assert not math.isnan(ref.s_max)
    cfg = TrialConfig(family="cycle", n=n, sigma=sigma, eta=eta)
    s_per_song = np.full(sigma, -1.0)
    last = np.full(sigma, -1.0)
    out = _kernels.run_fixation(
        initial_state(cfg).prefs, g.alias_prob, g.alias_index, g.pair_i, g.pair_j, g.total_rate,
        eta, derive_stream(6, 0), 0.0, np.inf, np.inf, events, s_per_song, last,
    )
    assert out[2] == ref.tau and out[3] == ref.winner_candidate
    assert np.array_equal(s_per_song, ref.s_per_song)


def test_winner_above_threshold_at_tau():
    _, items = _python_trace(8, 2, 0.3, 20000, seed=7)
    st = detect_stopping_times(items, 0.3, 8)
    m_at_tau = dict((t, m) for t, m in items)[st.tau]
    assert m_at_tau[st.winner_candidate] >= 1 - 0.3 / 16


# -- trials

def test_single_song_fixes_immediately():
    rec = estimate_fixation(TrialConfig(n=12, sigma=1), derive_stream(0, 0))
    assert rec.t_fix_estimate == 0.0 and not rec.censored


def test_unanimous_start():
    rec = estimate_fixation(TrialConfig(n=12, sigma=3, init="unanimous"), derive_stream(0, 0))
    assert rec.t_fix_estimate == 0.0 and rec.tau == 0.0 and rec.s_max == 0.0 and not rec.censored


@pytest.mark.parametrize("family,n,sigma,eta", [
    ("complete", 16, 2, 0.5), ("cycle", 12, 3, 0.3), ("complete", 20, 5, 0.8), ("torus", 16, 2, 0.5),
])
def test_trial_invariants(family, n, sigma, eta):
    cfg = TrialConfig(family=family, n=n, sigma=sigma, eta=eta, init="uniform" if sigma == 5 else "balanced")
    g = build_graph(family, n)
    for k in range(20):
        state = initial_state(cfg)
        rec = estimate_fixation(cfg, derive_stream(1, k), graph=g, state=state)
        assert not rec.censored
        assert rec.t_fix_estimate == rec.last_dissent_time
        assert 0.0 <= rec.t_fix_estimate <= rec.final_time
        assert rec.s_max <= rec.tau
        assert rec.max_step <= 2 * eta / n + 1e-12
        assert rec.max_row_drift <= 1e-6
        assert state.averages()[rec.winner] >= 1 - eta / (2 * n)
        assert np.abs(state.prefs.sum(axis=1) - 1).max() <= 1e-6
        if not rec.dissent_after_tau:
            assert rec.t_fix_estimate <= rec.tau


def test_caps_censor_instead_of_crashing():
    cfg = TrialConfig(n=16, max_events=10)
    rec = estimate_fixation(cfg, derive_stream(0, 0))
    assert rec.censored and rec.meetings == 10
    cfg = TrialConfig(n=16, max_time=0.5)
    assert estimate_fixation(cfg, derive_stream(0, 0)).censored


def test_caps_default():
    cfg = TrialConfig(n=16, sigma=2)
    t, e = caps_for(cfg, 16 / 15)
    assert t == pytest.approx(50 * 10 * math.log(2) * 15)
    assert e == 10**9
    t1, _ = caps_for(TrialConfig(n=16, sigma=1), 16 / 15)
    assert t1 == 50 * 16


def test_run_trials_worker_independent():
    cfg = TrialConfig(family="cycle", n=10, sigma=2)
    a = run_trials(cfg, 12, master_seed=3, workers=1)
    b = run_trials(cfg, 12, master_seed=3, workers=4)
    assert [r.row() for r in a] == [r.row() for r in b]
    assert [r.trial for r in a] == list(range(12))


def test_config_errors():
    with pytest.raises(DomainError):
        build_graph("star", 5)
    with pytest.raises(DomainError):
        build_graph("torus", 10)
    with pytest.raises(DomainError):
        initial_state(TrialConfig(init="random"))
    with pytest.raises(DomainError):
        cell_config({"family": "complete", "colour": 1})
    with pytest.raises(DomainError):
        estimate_fixation(TrialConfig(n=8), derive_stream(0, 0), graph=build_complete(9))


# -- aggregation

def test_summarize():
    s = summarize([1.0, 2.0, 3.0, 100.0], [False, False, False, True])
    assert s.valid is False and s.censored == 1  # 25% censored
    s = summarize([1.0, 2.0, 3.0, 4.0, 100.0], [False] * 4 + [True])
    assert s.valid and s.mean == 2.5
    half = 1.959963984540054 * np.std([1, 2, 3, 4], ddof=1) / 2
    assert s.ci == pytest.approx((2.5 - half, 2.5 + half))
    assert not summarize([1.0], [True]).valid
    assert not summarize([], []).valid


def test_loglog_slope():
    xs = [16, 32, 64, 128]
    assert loglog_slope(xs, [3 * x**1.5 for x in xs]) == pytest.approx(1.5)


def test_empirical_smax_and_quiet_fraction():
    out = empirical_smax(TrialConfig(n=8, sigma=2, init="unanimous"), 5, 0)
    assert out["mean"] == 0.0
    with pytest.raises(DomainError):
        empirical_smax(TrialConfig(n=8, sigma=1), 5, 0)
    records = run_trials(TrialConfig(n=16), 40, master_seed=2)
    res = empirical_smax(TrialConfig(n=16), 40, 2, records=records)
    assert 0 < res["mean"] <= res["mean_tau"]
    assert res["tau_ratio"] >= 1.0
    p, se, reached = post_tau_quiet_fraction(records)
    assert reached == 40 and 0.0 <= p <= 1.0 and se >= 0.0


def test_bound_report():
    cfg = TrialConfig(n=16)
    records = run_trials(cfg, 30, master_seed=5)
    rep = bound_report(cfg, 16 / 15, c=1.0, records=records)
    assert rep.upper_value == pytest.approx(15 * math.log(2))
    assert rep.lower_value == 0.0
    assert rep.empirical_ci[0] <= rep.empirical_mean <= rep.empirical_ci[1]
    assert math.isnan(bound_report(TrialConfig(family="cycle", n=8), 0.3).lower_value)


# -- sweeps

PLAN = {"cells": [
    {"family": "complete", "n": 8, "sigma": 2, "eta": 0.5, "trials": 20},
    {"family": "complete", "n": 16, "sigma": 2, "eta": 0.5, "trials": 20},
    {"family": "cycle", "n": 8, "sigma": 2, "eta": 0.5, "trials": 20},
]}


def test_sweep_schema_and_determinism():
    rows = sweep(PLAN, master_seed=11, workers=1)
    assert len(rows) == 3
    assert list(rows[0]) == SWEEP_COLUMNS
    assert SWEEP_COLUMNS[:13] == ["family", "n", "sigma", "eta", "lambda", "trials", "censored", "mean_tfix",
                                  "ci_lo", "ci_hi", "mean_smax", "mean_tau", "slope_group"]
    assert rows[0]["slope_group"] == rows[1]["slope_group"] and not math.isnan(rows[0]["slope_group"])
    assert math.isnan(rows[2]["slope_group"])
    assert rows[2]["max_n_inv_lambda"] == pytest.approx(max(8, 1 / build_cycle(8).gap))
    again = sweep(PLAN, master_seed=11, workers=3)
    assert rows == again


def test_sweep_censored_cell_is_invalid():
    plan = {"cells": [
        {"family": "complete", "n": 8, "sigma": 2, "trials": 5, "max_events": 2},
        {"family": "complete", "n": 8, "sigma": 2, "trials": 5},
    ]}
    rows = sweep(plan, master_seed=0, workers=1)
    assert rows[0]["censored"] == 5 and math.isnan(rows[0]["mean_tfix"])
    assert rows[1]["censored"] == 0 and rows[1]["mean_tfix"] > 0


def test_summarize_fixation_excludes_censored():
    records = run_trials(TrialConfig(n=8, max_events=3), 4, master_seed=1, workers=1)
    assert not summarize_fixation(records).valid


def test_no_warning_leak_from_bound_report():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        bound_report(TrialConfig(n=8, sigma=1), 8 / 7)


def test_sweep_records_out():
    kept = []
    rows = sweep(PLAN, master_seed=11, workers=1, records_out=kept)
    assert [len(r) for r in kept] == [20, 20, 20]
    assert summarize_fixation(kept[0]).mean == rows[0]["mean_tfix"]
