"""Random walk simulation and exact walk distributions.

Simulation runs in compiled kernels (see :mod:`rwrange._kernels`) and keeps
only per-trial aggregates: the range ``R_h = |{S_0, ..., S_{h-1}}|`` and the
position ``S_h`` at each requested horizon ``h``.  On implicit trees only the
visited vertices are ever materialized.

Exact quantities (mass vectors, return tails, escape and exit
probabilities) are computed by sparse linear algebra on explicit graphs and
refuse to run when the relevant ball reaches a truncation boundary.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .builders import ImplicitTree, LayeredTree
from .errors import BallCoversGraph, BudgetExceeded, NotLayered, ValidationError
from .graph import WeightedGraph, ball

__all__ = [
    "DEFAULT_BUDGET_MB",
    "WalkResult",
    "TrialBatch",
    "DistributionVector",
    "TailTable",
    "RadialChain",
    "simulate",
    "simulate_trials",
    "evolve_distribution",
    "return_tail",
    "escape_before_exit",
    "heat_kernel_diag",
    "expected_exit_time",
    "radial_chain",
    "memory_budget_mb",
]

DEFAULT_BUDGET_MB = 2048


def memory_budget_mb() -> float:
    """Memory cap for simulation buffers, from ``RWRANGE_BUDGET_MB`` if set."""
    raw = os.environ.get("RWRANGE_BUDGET_MB")
    if raw is None:
        return float(DEFAULT_BUDGET_MB)
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(f"RWRANGE_BUDGET_MB must be a number, got {raw!r}") from None
    if value <= 0:
        raise ValidationError("RWRANGE_BUDGET_MB must be positive")
    return value


def _seed64(seed) -> np.uint64:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < 2**64:
        raise ValidationError("seed must lie in [0, 2**64)")
    return np.uint64(int(seed))


def _horizons(n, horizons):
    hs = [n] if horizons is None else list(horizons)
    if not hs:
        raise ValidationError("at least one horizon is required")
    for h in hs:
        if not isinstance(h, (int, np.integer)) or h < 1:
            raise ValidationError(f"walk length must be an integer >= 1, got {h!r}")
    return np.array(sorted(set(int(h) for h in hs)), dtype=np.int64)


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class WalkResult:
    """Summary of one trajectory of length ``n``."""

    n: int
    range: int
    final: object
    final_distance: int
    returned: bool


@dataclass
class TrialBatch:
    """Per-trial aggregates of independent walks.

    Arrays have shape ``(trials, len(horizons))``.  ``final`` holds ``S_h`` as
    a vertex id on explicit graphs and as the depth of ``S_h`` on implicit
    trees; ``final_distance`` is the graph distance from the start.
    ``first_return[t]`` is ``T_x^+`` for trial ``t``, or 0 when the walk has
    not returned by the last horizon.
    """

    start: object
    horizons: np.ndarray
    seed: int
    ranges: np.ndarray
    final: np.ndarray
    final_distance: np.ndarray
    returned: np.ndarray
    first_return: np.ndarray

    @property
    def trials(self) -> int:
        return self.ranges.shape[0]

    def column(self, n: int) -> int:
        hit = np.nonzero(self.horizons == n)[0]
        if not len(hit):
            raise ValidationError(f"horizon {n} was not simulated")
        return int(hit[0])

    def ranges_at(self, n: int) -> np.ndarray:
        return self.ranges[:, self.column(n)]

    def rows(self):
        """Yield ``(trial, n, R_n, final_distance)`` in trial order."""
        for t in range(self.trials):
            for j, h in enumerate(self.horizons):
                yield t, int(h), int(self.ranges[t, j]), int(self.final_distance[t, j])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "n", "R_n", "final_distance"])
            w.writerows(self.rows())


def _chunks(trials, jobs):
    jobs = max(1, min(int(jobs), trials))
    size = -(-trials // jobs)
    return [(a, min(a + size, trials)) for a in range(0, trials, size)]


def _run_chunks(work, trials, jobs):
    spans = _chunks(trials, jobs)
    if len(spans) == 1:
        work(*spans[0])
        return
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        for f in [pool.submit(work, a, b) for a, b in spans]:
            f.result()


class _GraphWalker:
    def __init__(self, g: WeightedGraph):
        self.g = g
        cum = np.empty_like(g.weights)
        for u in range(g.vertex_count):
            a, b = g.indptr[u], g.indptr[u + 1]
            c = np.cumsum(g.weights[a:b]) / g.vertex_weights[u]
            c[-1] = 1.0
            cum[a:b] = c
        self.cumprob = cum


_walker_cache: dict[int, _GraphWalker] = {}


def _graph_walker(g: WeightedGraph) -> _GraphWalker:
    w = _walker_cache.get(id(g))
    if w is None or w.g is not g:
        w = _GraphWalker(g)
        _walker_cache.clear()
        _walker_cache[id(g)] = w
    return w


def _simulate_graph(g, x, hs, trials, seed, jobs, budget_mb, trial0=0):
    x = g.check_vertex(x)
    hmax = int(hs[-1])
    if g.artificial.any():
        g.require_interior(x, hmax, what=f"{hmax}-step walk")
    need = trials * len(hs) * 16 + g.vertex_count * 8 * max(1, jobs)
    if need > budget_mb * 2**20:
        raise BudgetExceeded(f"walk buffers need {need / 2**20:.1f} MB, over the {budget_mb} MB budget")
    walker = _graph_walker(g)
    ranges = np.zeros((trials, len(hs)), dtype=np.int64)
    final = np.zeros((trials, len(hs)), dtype=np.int64)
    first = np.zeros(trials, dtype=np.int64)

    def work(a, b):
        _kernels.graph_walks(
            g.indptr, g.indices, walker.cumprob, x, hs, seed, trial0 + a, b - a,
            ranges[a:b], final[a:b], first[a:b],
        )

    _run_chunks(work, trials, jobs)
    dist = np.full(g.vertex_count, -1, dtype=np.int64)
    for v, d in g.distances_from(x).items():
        dist[v] = d
    return ranges, final, dist[final], final == x, first


def _simulate_tree(tree, x, hs, trials, seed, jobs, budget_mb, trial0=0):
    address = tuple(x)
    chain = np.array(tree.type_chain(address), dtype=np.int32)
    chain_idx = np.array(address if address else (0,), dtype=np.int32)
    child_types, nchild = tree.type_table
    hmax = int(hs[-1])
    max_nodes = hmax + 2
    per_worker = max_nodes * (child_types.shape[1] * 4 + 16)
    workers = len(_chunks(trials, jobs))
    need = per_worker * workers + trials * len(hs) * 25
    if need > budget_mb * 2**20:
        raise BudgetExceeded(f"visited-set buffers need {need / 2**20:.1f} MB, over the {budget_mb} MB budget")
    ranges = np.zeros((trials, len(hs)), dtype=np.int64)
    depth = np.zeros((trials, len(hs)), dtype=np.int64)
    dist = np.zeros((trials, len(hs)), dtype=np.int64)
    home = np.zeros((trials, len(hs)), dtype=np.bool_)
    first = np.zeros(trials, dtype=np.int64)

    def work(a, b):
        status = _kernels.tree_walks(
            child_types, nchild, chain, chain_idx, hs, seed, trial0 + a, b - a, max_nodes,
            ranges[a:b], depth[a:b], dist[a:b], home[a:b], first[a:b],
        )
        if status != 0:  # pragma: no cover - max_nodes always suffices
            raise BudgetExceeded("visited-set capacity exhausted")

    _run_chunks(work, trials, jobs)
    return ranges, depth, dist, home, first


def simulate_trials(
    obj, x, n=None, trials=1, seed=0, *, horizons=None, jobs=1, budget_mb=None, first_trial=0
) -> TrialBatch:
    """Run ``trials`` independent walks from ``x``.

    Trial ``t`` uses the stream keyed by ``(seed, first_trial + t)``, so
    results do not depend on ``jobs``.  Pass ``horizons`` to record several
    lengths along the same trajectories.
    """
    hs = _horizons(n, horizons)
    if not isinstance(trials, (int, np.integer)) or trials < 1:
        raise ValidationError(f"trials must be a positive integer, got {trials!r}")
    s = _seed64(seed)
    budget = memory_budget_mb() if budget_mb is None else float(budget_mb)
    if isinstance(obj, WeightedGraph):
        out = _simulate_graph(obj, x, hs, int(trials), s, jobs, budget, int(first_trial))
    elif isinstance(obj, ImplicitTree):
        out = _simulate_tree(obj, x, hs, int(trials), s, jobs, budget, int(first_trial))
    else:
        raise ValidationError(f"cannot walk on {type(obj).__name__}")
    start = tuple(x) if isinstance(obj, ImplicitTree) else int(x)
    return TrialBatch(start, hs, int(seed), *out)


def simulate(obj, x, n, seed, trial=0) -> WalkResult:
    """One walk of ``n`` steps from ``x``; trial ``trial`` of the seed's stream."""
    if not isinstance(trial, (int, np.integer)) or trial < 0:
        raise ValidationError("trial index must be a non-negative integer")
    hs = _horizons(n, None)
    s = _seed64(seed)
    budget = memory_budget_mb()
    if isinstance(obj, WeightedGraph):
        g = obj
        x = g.check_vertex(x)
        if g.artificial.any():
            g.require_interior(x, int(n), what=f"{n}-step walk")
        walker = _graph_walker(g)
        r = np.zeros((1, 1), dtype=np.int64)
        f = np.zeros((1, 1), dtype=np.int64)
        _kernels.graph_walks(g.indptr, g.indices, walker.cumprob, x, hs, s, int(trial), 1, r, f, np.zeros(1, np.int64))
        d = g.distances_from(x).get(int(f[0, 0]), -1)
        return WalkResult(int(n), int(r[0, 0]), int(f[0, 0]), d, bool(f[0, 0] == x))
    if isinstance(obj, ImplicitTree):
        r, depth, dist, home, _ = _simulate_tree(obj, x, hs, 1, s, 1, budget, int(trial))
        return WalkResult(int(n), int(r[0, 0]), int(depth[0, 0]), int(dist[0, 0]), bool(home[0, 0]))
    raise ValidationError(f"cannot walk on {type(obj).__name__}")


def sample_path(g: WeightedGraph, x, n, seed, trial=0) -> np.ndarray:
    """Full trajectory ``S_0..S_n`` on an explicit graph, for testing the kernel."""
    x = g.check_vertex(x)
    walker = _graph_walker(g)
    return _kernels.graph_steps(g.indptr, g.indices, walker.cumprob, x, int(n), _seed64(seed), int(trial))


# ---------------------------------------------------------------------------
# exact evolution on explicit graphs


@dataclass
class DistributionVector:
    """Mass ``P_x(S_k = y, not killed)`` for every vertex ``y``."""

    start: int
    step: int
    mass: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def killed(self) -> float:
        return 1.0 - self.total

    def __getitem__(self, y) -> float:
        return float(self.mass[y])

    def as_dict(self) -> dict[int, float]:
        return {int(v): float(self.mass[v]) for v in np.nonzero(self.mass)[0]}


def _kill_mask(g, killed_at):
    mask = np.zeros(g.vertex_count, dtype=bool)
    if killed_at is not None:
        for v in killed_at:
            mask[g.check_vertex(v)] = True
    return mask


def _forward(g: WeightedGraph) -> sp.csr_matrix:
    return g.transition.T.tocsr()


def evolve_distribution(g: WeightedGraph, x, k: int, killed_at=None) -> DistributionVector:
    """Exact ``k``-step mass vector from ``x``.

    With ``killed_at``, mass is removed whenever it sits on the set, including
    at time 0, so the result is ``P_x(S_k = y, T_set > k)``.
    """
    x = g.check_vertex(x)
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise ValidationError(f"step count must be a non-negative integer, got {k!r}")
    g.require_interior(x, int(k), what=f"{k}-step evolution")
    mask = _kill_mask(g, killed_at)
    m = np.zeros(g.vertex_count)
    m[x] = 1.0
    m[mask] = 0.0
    PT = _forward(g)
    for _ in range(int(k)):
        m = PT @ m
        m[mask] = 0.0
    return DistributionVector(x, int(k), m)


def heat_kernel_diag(obj, x, k: int) -> float:
    """``p_k(x, x) = P_x(S_k = x) / mu_x``."""
    if isinstance(obj, ImplicitTree):
        if tuple(x) != ():
            raise NotLayered("implicit trees support the root only; truncate for other vertices")
        return radial_chain(obj).heat_kernel_root(k)
    dv = evolve_distribution(obj, x, k)
    return dv[x] / float(obj.vertex_weights[dv.start])


@dataclass
class TailTable:
    """``tails[m] = P_x(T_x^+ > m)`` for ``m = 0..m_max``.

    With an escape interval ``[lo, hi]`` for ``P_x(T_x^+ = inf)``, the finite
    return tail ``P_x(m < T_x^+ < inf)`` is enclosed by :meth:`finite_tail`.
    """

    base: object
    tails: np.ndarray
    escape: tuple | None = None

    @property
    def m_max(self) -> int:
        return len(self.tails) - 1

    def __getitem__(self, m) -> float:
        return float(self.tails[m])

    def with_escape(self, lo: float, hi: float) -> "TailTable":
        return TailTable(self.base, self.tails, (float(lo), float(hi)))

    def finite_tail(self, m: int) -> tuple[float, float]:
        if self.escape is None:
            raise ValidationError("no escape interval attached")
        lo, hi = self.escape
        t = float(self.tails[m])
        return max(0.0, t - hi), max(0.0, t - lo)


def return_tail(obj, x, m_max: int) -> TailTable:
    """``P_x(T_x^+ > m)`` for ``m <= m_max`` by absorbed evolution.

    Works on explicit graphs and at the root of a layered tree (via the
    radial chain).
    """
    if not isinstance(m_max, (int, np.integer)) or m_max < 0:
        raise ValidationError("m_max must be a non-negative integer")
    if isinstance(obj, ImplicitTree):
        if tuple(x) != ():
            raise NotLayered("exact return tails on implicit trees are available at the root only")
        return TailTable((), radial_chain(obj).return_tail(int(m_max)))
    g = obj
    x = g.check_vertex(x)
    g.require_interior(x, int(m_max), what=f"{m_max}-step return tail")
    tails = np.ones(int(m_max) + 1)
    if m_max >= 1:
        PT = _forward(g)
        m = np.asarray(g.transition[x].todense()).ravel()
        m[x] = 0.0
        tails[1] = m.sum()
        for j in range(2, int(m_max) + 1):
            m = PT @ m
            m[x] = 0.0
            tails[j] = m.sum()
    return TailTable(x, tails)


def _interior_ball(g, x, n):
    x = g.check_vertex(x)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"ball radius must be an integer >= 1, got {n!r}")
    b = ball(g, x, int(n))
    if not b.boundary:
        raise BallCoversGraph(f"B({x}, {n}) is the whole graph; its complement is empty")
    g.require_interior(x, int(n))
    return x, b


def escape_before_exit(g: WeightedGraph, x, n: int) -> float:
    """``P_x(T_x^+ > T_{B(x,n)^c})``: leave the ball before coming back."""
    x, b = _interior_ball(g, x, n)
    if n == 1:
        return 1.0
    inner = np.array([v for v in b.sorted_members() if v != x], dtype=np.int64)
    P = g.transition
    out = np.ones(g.vertex_count, dtype=bool)
    out[b.sorted_members()] = False
    Pu = P[inner][:, inner]
    rhs = np.asarray(P[inner][:, np.nonzero(out)[0]].sum(axis=1)).ravel()
    A = sp.identity(len(inner), format="csc") - Pu.tocsc()
    h = np.atleast_1d(spla.spsolve(A, rhs))
    row = np.asarray(P[x].todense()).ravel()
    return float(row[inner] @ h + row[out].sum())


def expected_exit_time(g: WeightedGraph, x, n: int) -> float:
    """``E_x[T_{B(x,n)^c}]`` by solving ``(I - P_B) t = 1`` on the ball."""
    x, b = _interior_ball(g, x, n)
    members = b.sorted_members()
    A = sp.identity(len(members), format="csc") - g.transition[members][:, members].tocsc()
    t = np.atleast_1d(spla.spsolve(A, np.ones(len(members))))
    return float(t[int(np.searchsorted(members, x))])


# ---------------------------------------------------------------------------
# radial chain on layered trees


@dataclass(frozen=True)
class RadialChain:
    """Birth-death chain of the distance ``d(o, S_k)`` on a layered tree."""

    tree: LayeredTree

    def inward(self, r: int) -> float:
        return 0.0 if r == 0 else 1.0 / self.tree.degree(r)

    def outward(self, r: int) -> float:
        return 1.0 - self.inward(r)

    @cached_property
    def _cache(self):
        return {}

    def _probs(self, length):
        key = ("p", length)
        if key not in self._cache:
            deg = self.tree.degrees_array(length + 1).astype(np.float64)
            q = np.zeros(length + 1)
            q[1:] = 1.0 / deg[1:]
            self._cache[key] = (q, 1.0 - q)
        return self._cache[key]

    def _step(self, m, q, p):
        nxt = np.zeros_like(m)
        nxt[1:] += m[:-1] * p[:-1]
        nxt[:-1] += m[1:] * q[1:]
        return nxt

    def distance_law(self, k: int) -> np.ndarray:
        """``law[r] = P_o(d(o, S_k) = r)`` for ``r = 0..k``."""
        if k < 0:
            raise ValidationError("k must be non-negative")
        q, p = self._probs(k + 1)
        m = np.zeros(k + 2)
        m[0] = 1.0
        for _ in range(k):
            m = self._step(m, q, p)
        return m[: k + 1]

    def return_probability(self, k: int) -> float:
        return float(self.distance_law(k)[0])

    def heat_kernel_root(self, k: int) -> float:
        return self.return_probability(k) / self.tree.degree(0)

    def return_tail(self, m_max: int) -> np.ndarray:
        """``P_o(T_o^+ > m)`` for ``m = 0..m_max``."""
        tails = np.ones(m_max + 1)
        if m_max == 0:
            return tails
        q, p = self._probs(m_max + 1)
        m = np.zeros(m_max + 2)
        m[1] = 1.0
        for j in range(2, m_max + 1):
            m = self._step(m, q, p)
            m[0] = 0.0
            tails[j] = m.sum()
        return tails


def radial_chain(tree) -> RadialChain:
    if not isinstance(tree, LayeredTree):
        raise NotLayered(f"{type(tree).__name__} is not spherically symmetric")
    return RadialChain(tree)
