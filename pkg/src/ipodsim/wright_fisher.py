"""Wright-Fisher diffusion dW = sqrt(W (1 - W)) dB: closed forms and an EM sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError

DELTA_ABS = 1e-6
DEFAULT_DT = 1e-4
MAX_PATH_STEPS = 10**9


def _check_unit(x, name="x"):
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {x}")


def _xlogx(x):
    return 0.0 if x == 0.0 else x * math.log(x)


def phi(x: float) -> float:
    """Binary entropy -x ln x - (1-x) ln(1-x), with 0 ln 0 = 0."""
    _check_unit(x)
    return -_xlogx(x) - _xlogx(1.0 - x)


def expected_absorption(x: float) -> float:
    return 2.0 * phi(x)


def _f(x):
    return 2.0 * (_xlogx(x) + _xlogx(1.0 - x))


@dataclass(frozen=True)
class EscapeEstimate:
    exact: float
    lower: float
    upper: float

    @property
    def within_bracket(self) -> bool:
        return self.lower <= self.exact <= self.upper


def expected_escape(w0: float, eps: float) -> EscapeEstimate:
    """Mean exit time from (w0 - eps, w0 + eps).

    ``exact`` solves (x(1-x)/2) u'' = -1 with zero boundary values, giving
    u(w0) = -f(w0) + (f(w0 + eps) + f(w0 - eps)) / 2 for
    f(x) = 2 (x ln x + (1-x) ln(1-x)). ``lower``/``upper`` are the bracket
    w0(1-w0)/3 and 5 w0(1-w0)/3 as stated for eps <= w0(1-w0)/2; the
    bracket is reported, not enforced (see :func:`taylor_escape_bracket`).
    """
    _check_unit(w0, "w0")
    if eps < 0 or eps > w0 * (1.0 - w0) / 2.0 * (1 + 1e-12):
        raise DomainError(f"eps must lie in [0, w0(1-w0)/2], got {eps}")
    h = w0 * (1.0 - w0)
    exact = -_f(w0) + 0.5 * (_f(w0 + eps) + _f(w0 - eps))
    return EscapeEstimate(exact=exact, lower=h / 3.0, upper=5.0 * h / 3.0)


def taylor_escape_bracket(w0: float, eps: float):
    """Bracket eps^2/h (1 -/+ 2/3) with h = w0(1-w0), from the cubic Taylor remainder of f."""
    h = w0 * (1.0 - w0)
    if h == 0.0:
        raise DomainError("w0 must lie strictly inside (0, 1)")
    centre = eps * eps / h
    return centre / 3.0, 5.0 * centre / 3.0


def _sample(kind, w0, eps, dt, n_paths, rng, delta_abs, max_steps):
    if dt <= 0:
        raise DomainError("dt must be positive")
    out = _kernels.wf_many(kind, float(w0), float(eps), float(dt), float(delta_abs), rng, int(n_paths), int(max_steps))
    if np.any(out < 0):
        raise RuntimeError(f"{int(np.sum(out < 0))} path(s) hit the step cap")
    return out


def simulate_em(w0: float, dt: float = DEFAULT_DT, rng=None, n_paths: int = 1,
                delta_abs: float = DELTA_ABS, max_steps: int = MAX_PATH_STEPS) -> np.ndarray:
    """Absorption-time samples from clamped Euler-Maruyama paths."""
    _check_unit(w0, "w0")
    if rng is None:
        rng = np.random.default_rng()
    return _sample(0, w0, 0.0, dt, n_paths, rng, delta_abs, max_steps)


def simulate_escape_em(w0: float, eps: float, dt: float = DEFAULT_DT, rng=None, n_paths: int = 1,
                       max_steps: int = MAX_PATH_STEPS) -> np.ndarray:
    """Exit-time samples of the eps-ball around w0 from clamped Euler-Maruyama paths."""
    _check_unit(w0, "w0")
    if eps <= 0:
        raise DomainError("eps must be positive")
    if rng is None:
        rng = np.random.default_rng()
    return _sample(1, w0, eps, dt, n_paths, rng, DELTA_ABS, max_steps)
