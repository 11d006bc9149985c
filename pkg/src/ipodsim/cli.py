"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path


from . import __version__
from .errors import IpodError
from .output import emit, render

FAMILIES = ("complete", "cycle", "torus")


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)
    master_seed: int = 0
    output: str | None = None
    format: str = "csv"


def _positive_int(minimum):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {value}")
        return value
    return parse


def _open_unit(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"eta must lie in the open interval (0, 1), got {value}")
    return value


def _seed(text):
    value = _positive_int(0)(text)
    if value >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _add_graph(p, songs=True):
    p.add_argument("--graph", choices=FAMILIES + ("edges",), default="complete")
    p.add_argument("--n", type=_positive_int(2), default=16, help="number of agents")
    p.add_argument("--edges", help="edge-list file (with --graph edges)")
    p.add_argument("--normalize", action="store_true", help="Sinkhorn-balance the edge list")
    if songs:
        p.add_argument("--songs", type=_positive_int(1), default=2)
        p.add_argument("--eta", type=_open_unit, default=0.5)


def _add_output(p):
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipodsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap", help="spectral gap of a graph as 'n,lambda,method,residual'")
    _add_graph(p, songs=False)
    p.add_argument("--method", choices=("dense_eigensolve", "iterative"))

    p = sub.add_parser("simulate", help="fixation trials for one cell, one row per trial")
    _add_graph(p)
    p.add_argument("--trials", type=_positive_int(1), default=10)
    p.add_argument("--init", choices=("balanced", "uniform", "unanimous"), default="balanced")
    p.add_argument("--beta", type=float, default=20.0, help="patience window in units of N/lambda")
    p.add_argument("--max-events", type=_positive_int(1), default=10**9)
    _add_output(p)

    p = sub.add_parser("sweep", help="run a JSON sweep plan")
    p.add_argument("--plan", required=True)
    _add_output(p)

    p = sub.add_parser("wf", help="Wright-Fisher escape and absorption quantities")
    p.add_argument("--w0", type=float, required=True)
    p.add_argument("--eps", type=float, default=None, help="ball radius (default w0(1-w0)/2)")
    p.add_argument("--header", action="store_true")

    p = sub.add_parser("bounds", help="upper/lower bound values, optionally with empirical trials")
    _add_graph(p)
    p.add_argument("--c", type=float, default=1.0, help="constant in the upper-bound shapes")
    p.add_argument("--trials", type=_positive_int(0), default=0)
    p.add_argument("--clamp-gap", action="store_true", help="use min(lambda, 1) in bounds")
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("oracle-check", help="check the exact drift identities on random states")
    p.add_argument("--states", type=_positive_int(1), default=1000)
    p.add_argument("--seed", type=_seed, default=0)
    return parser


def parse_args(argv=None) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    opts = vars(ns).copy()
    if opts.get("graph") == "edges" and not opts.get("edges"):
        parser.error("--graph edges requires --edges FILE")
    if opts.get("graph") == "cycle" and opts["n"] < 3:
        parser.error("cycle needs --n >= 3")
    if opts.get("graph") == "torus" and math.isqrt(opts["n"]) ** 2 != opts["n"]:
        parser.error("torus needs a square --n")
    if ns.command == "wf" and not 0.0 < ns.w0 < 1.0:
        parser.error("--w0 must lie in (0, 1)")
    return RunConfig(
        command=ns.command,
        options=opts,
        master_seed=opts.get("seed", 0),
        output=opts.get("out"),
        format=opts.get("format", "csv"),
    )


def _graph(opts):
    from .experiments import build_graph
    from .graphs import load_edge_list

    if opts["graph"] == "edges":
        return load_edge_list(Path(opts["edges"]).read_text(), normalize=opts["normalize"])
    return build_graph(opts["graph"], opts["n"])


def _write(config, records, columns, echo):
    if config.output:
        emit(records, config.format, config.output, seed=config.master_seed, config=echo, columns=columns)
    else:
        sys.stdout.write(render(records, config.format, seed=config.master_seed, config=echo, columns=columns))


def cmd_gap(config):
    from .graphs import spectral_gap

    g = _graph(config.options)
    rep = spectral_gap(g, config.options["method"])
    print(f"{g.n_agents},{rep.gap!r},{rep.method},{rep.residual!r}")


def cmd_simulate(config):
    from .experiments import TRIAL_COLUMNS, TrialConfig, run_trials

    o = config.options
    g = _graph(o)
    tc = TrialConfig(family=g.family, n=g.n_agents, sigma=o["songs"], eta=o["eta"], init=o["init"],
                     beta=o["beta"], max_events=o["max_events"])
    records = run_trials(tc, o["trials"], config.master_seed, graph=g)
    echo = {"command": "simulate", "graph": o["graph"], "n": g.n_agents, "songs": o["songs"],
            "eta": o["eta"], "trials": o["trials"], "init": o["init"], "beta": o["beta"]}
    _write(config, [r.row() for r in records], TRIAL_COLUMNS, echo)


def cmd_sweep(config):
    from .experiments import SWEEP_COLUMNS, sweep

    plan = json.loads(Path(config.options["plan"]).read_text())
    rows = sweep(plan, config.master_seed)
    _write(config, rows, SWEEP_COLUMNS, {"command": "sweep", "plan": plan})


def cmd_wf(config):
    from .wright_fisher import expected_absorption, expected_escape

    o = config.options
    w0 = o["w0"]
    eps = o["eps"] if o["eps"] is not None else w0 * (1 - w0) / 2
    est = expected_escape(w0, eps)
    if o["header"]:
        print("w0,eps,exact,lower,upper,two_phi")
    print(",".join(repr(float(v)) for v in (w0, eps, est.exact, est.lower, est.upper, expected_absorption(w0))))


def cmd_bounds(config):
    from .experiments import TrialConfig, bound_report, run_trials

    o = config.options
    g = _graph(o)
    tc = TrialConfig(family=g.family, n=g.n_agents, sigma=o["songs"], eta=o["eta"], clamp_gap=o["clamp_gap"])
    records = run_trials(tc, o["trials"], config.master_seed, graph=g) if o["trials"] else None
    rep = bound_report(tc, g.gap, o["c"], records)
    print("n,sigma,eta,lambda,upper,eta_upper,lower,empirical_mean,ci_lo,ci_hi")
    values = (g.gap, rep.upper_value, rep.eta_upper_value, rep.lower_value, rep.empirical_mean, *rep.empirical_ci)
    print(f"{g.n_agents},{o['songs']},{o['eta']!r}," + ",".join(repr(float(v)) for v in values))


def cmd_oracle_check(config):
    from .verify import drift_identity_errors

    worst = drift_identity_errors(config.options["states"], config.master_seed)
    print("quantity,max_abs_error")
    for name, err in worst.items():
        print(f"{name},{err!r}")
    if max(worst.values()) > 1e-12:
        raise IpodError("drift identity error above 1e-12")


COMMANDS = {
    "gap": cmd_gap,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "wf": cmd_wf,
    "bounds": cmd_bounds,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    config = parse_args(argv)
    try:
        COMMANDS[config.command](config)
    except (IpodError, OSError, ValueError, KeyError) as exc:
        print(f"ipodsim: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
