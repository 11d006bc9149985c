"""Meeting-rate graphs, Dirichlet forms and spectral gaps.

A graph here is a symmetric matrix of meeting rates ``nu[i, j]`` with zero
diagonal and unit row sums, so the associated random walk is doubly
stochastic and has the uniform law as its stationary distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import (
    ConnectivityError,
    ConvergenceError,
    DimensionError,
    EdgeListError,
    GapIsZeroError,
    InvalidSizeError,
    NormalizationError,
    SymmetryError,
)

ROW_SUM_TOL = 1e-9
SINKHORN_TOL = 1e-10
SINKHORN_MAX_ITER = 10_000
POLISH_TOL = 1e-15
N_DENSE = 512
POWER_TOL = 1e-8
POWER_MAX_ITER = 500_000


@dataclass(frozen=True)
class SpectrumReport:
    gap: float
    method: str  # "dense_eigensolve" or "iterative"
    residual: float = 0.0


def build_alias_table(weights):
    """Vose alias table for sampling index ``e`` with probability ``w[e] / sum(w)``.

    Returns ``(prob, alias)``; draw a column ``c`` uniformly, keep it with
    probability ``prob[c]`` and otherwise take ``alias[c]``.
    """
    w = np.asarray(weights, dtype=np.float64)
    k = w.size
    if k == 0 or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("alias table needs nonnegative weights with positive sum")
    scaled = w * (k / w.sum())
    prob = np.ones(k)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Immutable normalized meeting-rate graph.

    Use the ``build_*`` constructors, :func:`from_matrix` or
    :func:`load_edge_list` rather than instantiating directly.
    """

    n_agents: int
    rates: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_weight: np.ndarray
    total_rate: float
    alias_prob: np.ndarray = field(repr=False)
    alias_index: np.ndarray = field(repr=False)
    family: str = "custom"

    @cached_property
    def spectrum(self) -> SpectrumReport:
        return spectral_gap(self)

    @property
    def gap(self) -> float:
        return self.spectrum.gap

    @property
    def n_pairs(self) -> int:
        return int(self.pair_i.size)


def _is_connected(rates):
    n_comp, _ = connected_components(sparse.csr_matrix(rates > 0), directed=False)
    return n_comp == 1


def _finalize(rates, family):
    rates = np.array(rates, dtype=np.float64)
    n = rates.shape[0]
    np.fill_diagonal(rates, 0.0)
    if not np.array_equal(rates, rates.T):
        raise SymmetryError("rate matrix is not symmetric")
    if np.any(rates < 0):
        raise NormalizationError("negative meeting rate")
    dev = np.abs(rates.sum(axis=1) - 1.0).max()
    if dev > ROW_SUM_TOL:
        raise NormalizationError(f"row sums deviate from 1 by {dev:.3e}")
    if not _is_connected(rates):
        raise ConnectivityError("meeting graph is disconnected")
    iu, ju = np.nonzero(np.triu(rates, k=1))
    weights = rates[iu, ju]
    total = float(weights.sum())
    if abs(total - n / 2) > ROW_SUM_TOL * max(1.0, n):
        raise NormalizationError(f"total rate {total} differs from N/2")
    prob, alias = build_alias_table(weights)
    arrays = [rates, iu.astype(np.int64), ju.astype(np.int64), weights, prob, alias]
    for a in arrays:
        a.setflags(write=False)
    return WeightedGraph(
        n_agents=n,
        rates=arrays[0],
        pair_i=arrays[1],
        pair_j=arrays[2],
        pair_weight=arrays[3],
        total_rate=total,
        alias_prob=arrays[4],
        alias_index=arrays[5],
        family=family,
    )


def build_complete(n: int) -> WeightedGraph:
    """Complete graph K_n with every rate equal to 1/(n-1)."""
    if n < 2:
        raise InvalidSizeError(f"complete graph needs n >= 2, got {n}")
    rates = np.full((n, n), 1.0 / (n - 1))
    return _finalize(rates, "complete")


def build_cycle(n: int) -> WeightedGraph:
    if n < 3:
        raise InvalidSizeError(f"cycle needs n >= 3, got {n}")
    if n == 3:
        return _finalize(np.full((3, 3), 0.5), "cycle")
    rates = np.zeros((n, n))
    idx = np.arange(n)
    rates[idx, (idx + 1) % n] = 0.5
    rates[idx, (idx - 1) % n] = 0.5
    return _finalize(rates, "cycle")


def build_torus(rows: int, cols: int) -> WeightedGraph:
    """2D torus grid; each agent meets its four lattice neighbours at rate 1/4."""
    if rows < 3 or cols < 3:
        raise InvalidSizeError(f"torus needs both sides >= 3, got {rows}x{cols}")
    n = rows * cols
    rates = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            a = r * cols + c
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                b = ((r + dr) % rows) * cols + (c + dc) % cols
                rates[a, b] += 0.25
    return _finalize(rates, "torus")


def sinkhorn_balance(weights, tol=SINKHORN_TOL, max_iter=SINKHORN_MAX_ITER):
    """Symmetric Sinkhorn-Knopp: find positive ``d`` with ``diag(d) A diag(d)`` doubly stochastic.

    Uses the damped fixed-point ``d <- sqrt(d / (A d))``, which keeps the
    scaling symmetric at every step. Once the deviation is below ``tol`` it
    keeps iterating while that still helps, down to ``POLISH_TOL``.
    """
    a = np.asarray(weights, dtype=np.float64)
    d = 1.0 / np.sqrt(np.maximum(a.sum(axis=1), np.finfo(float).tiny))
    best = np.inf
    dev = np.inf
    for _ in range(max_iter):
        with np.errstate(all="ignore"):
            ad = a @ d
            dev = np.abs(d * ad - 1.0).max()
        if not np.isfinite(dev) or not np.all(np.isfinite(d)) or d.min() <= 0.0:
            dev = np.inf
            break
        if dev < POLISH_TOL or (dev < tol and dev >= best):
            break
        best = min(best, dev)
        with np.errstate(all="ignore"):
            d = np.sqrt(d / ad)
    if dev >= tol:
        raise NormalizationError(
            f"Sinkhorn balancing did not converge in {max_iter} iterations "
            f"(max row-sum deviation {dev:.3e})"
        )
    balanced = d[:, None] * a * d[None, :]
    return 0.5 * (balanced + balanced.T)


def from_matrix(weights, normalize: bool = False, family: str = "custom") -> WeightedGraph:
    """Build a graph from a square weight matrix.

    With ``normalize=True`` the matrix is rescaled by symmetric Sinkhorn
    balancing; otherwise it must already be a valid rate matrix.
    """
    a = np.array(weights, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 2:
        raise InvalidSizeError("graph needs at least two agents")
    np.fill_diagonal(a, 0.0)
    if np.abs(a - a.T).max() > 1e-12 * max(1.0, np.abs(a).max()):
        raise SymmetryError("weight matrix is not symmetric")
    a = 0.5 * (a + a.T)
    if not _is_connected(a):
        raise ConnectivityError("meeting graph is disconnected")
    if normalize:
        a = sinkhorn_balance(a)
    return _finalize(a, family)


def parse_edge_list(text: str):
    """Parse ``i j w`` lines into a dense symmetric weight matrix."""
    edges = {}
    n = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise EdgeListError(f"line {lineno}: expected 'i j w', got {raw!r}")
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise EdgeListError(f"line {lineno}: {exc}") from None
        if i < 0 or j < 0:
            raise EdgeListError(f"line {lineno}: negative agent index")
        if not w > 0 or not math.isfinite(w):
            raise EdgeListError(f"line {lineno}: weight must be positive and finite")
        n = max(n, i + 1, j + 1)
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in edges and edges[key] != w:
            raise SymmetryError(
                f"line {lineno}: pair {key} listed with weights {edges[key]} and {w}"
            )
        edges[key] = w
    a = np.zeros((n, n))
    for (i, j), w in edges.items():
        a[i, j] = a[j, i] = w
    return a


def load_edge_list(text: str, normalize: bool = False) -> WeightedGraph:
    return from_matrix(parse_edge_list(text), normalize=normalize)


def _check_vector(f, n=None):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.size == 0 or (n is not None and f.size != n):
        raise DimensionError(f"expected a vector of length {n}, got shape {f.shape}")
    return f


def dirichlet_form(g: WeightedGraph, f) -> float:
    """sum_{i,j} nu_ij / (2N) * (f_i - f_j)^2 over ordered pairs."""
    f = _check_vector(f, g.n_agents)
    diff = f[:, None] - f[None, :]
    return float((g.rates * diff * diff).sum() / (2 * g.n_agents))


def variance_uniform(f) -> float:
    f = _check_vector(f)
    centred = f - f.mean()
    return float(np.mean(centred * centred))


def _dense_gap(g):
    n = g.n_agents
    # shift the constant mode to 3 so it can never be the minimum (spectrum of I - nu is in [0, 2])
    op = np.eye(n) - g.rates + 3.0 / n
    return float(np.linalg.eigvalsh(op)[0])


def _iterative_gap(g, tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=0):
    n = g.n_agents
    op = sparse.csr_matrix(g.rates) + sparse.identity(n, format="csr")
    v = np.random.default_rng(seed).standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    residual = math.inf
    mu = 0.0
    for _ in range(max_iter):
        w = op @ v
        w -= w.mean()
        mu = float(v @ w)
        residual = float(np.linalg.norm(w - mu * v))
        if residual < tol:
            break
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
    else:
        raise ConvergenceError("power iteration did not converge", residual)
    return 2.0 - mu, residual


def spectral_gap(g: WeightedGraph, method: str | None = None) -> SpectrumReport:
    """Smallest nonzero eigenvalue of ``I - nu``.

    ``method`` is ``"dense_eigensolve"``, ``"iterative"`` or ``None`` to pick
    by size (dense up to ``N_DENSE`` agents).
    """
    if method is None:
        method = "dense_eigensolve" if g.n_agents <= N_DENSE else "iterative"
    if method == "dense_eigensolve":
        gap, residual = _dense_gap(g), 0.0
    elif method == "iterative":
        gap, residual = _iterative_gap(g)
    else:
        raise ValueError(f"unknown method {method!r}")
    if gap <= 1e-12:
        raise GapIsZeroError(f"spectral gap is {gap:.3e}; graph is disconnected")
    return SpectrumReport(gap=gap, method=method, residual=residual)


def gap_eigenvector(g: WeightedGraph) -> np.ndarray:
    """A mean-zero eigenvector attaining the spectral gap."""
    n = g.n_agents
    op = np.eye(n) - g.rates + 3.0 / n
    _, vecs = np.linalg.eigh(op)
    return vecs[:, 0]


def variational_lower_check(g: WeightedGraph, trials: int, rng_seed: int) -> bool:
    """Check eps(f, f) >= gap * Var(f) on random vectors."""
    lam = g.gap
    rng = np.random.default_rng(rng_seed)
    for _ in range(trials):
        f = rng.standard_normal(g.n_agents)
        var = variance_uniform(f)
        if var == 0.0:
            continue
        if dirichlet_form(g, f) < lam * var * (1 - 1e-9):
            return False
    return True
