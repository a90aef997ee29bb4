"""Finite weighted graphs, metric balls and volumes.

Vertices are dense integer ids ``0..vertex_count-1``.  Edge weights are
conductances; distances are always hop counts, independent of the weights.
Graphs produced by truncating an infinite family carry an ``artificial`` flag
on the vertices whose neighbourhood was cut off, so exact computations can
refuse to run on balls that touch the truncation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    AsymmetricEdge,
    BallCoversGraph,
    DuplicateEdge,
    NonPositiveWeight,
    SelfLoop,
    UnknownVertex,
    ValidationError,
)

__all__ = [
    "WeightedGraph",
    "Ball",
    "build_explicit",
    "vertex_weight",
    "set_weight",
    "ball",
    "volume",
    "load_edgelist",
    "format_edgelist",
    "write_edgelist",
]


class WeightedGraph:
    """Immutable symmetric weighted graph stored in CSR form.

    Use :func:`build_explicit` rather than calling the constructor directly.
    """

    def __init__(self, indptr, indices, weights, artificial=None, labels=None, name=""):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        n = len(self.indptr) - 1
        self.vertex_count = n
        self.vertex_weights = np.add.reduceat(self.weights, self.indptr[:-1]) if n else np.zeros(0)
        degrees = np.diff(self.indptr)
        self.degrees = degrees
        self.max_degree = int(degrees.max()) if n else 0
        self.w_min = float(self.weights.min()) if len(self.weights) else 0.0
        self.w_max = float(self.weights.max()) if len(self.weights) else 0.0
        art = np.zeros(n, dtype=bool)
        if artificial is not None:
            art[np.asarray(list(artificial), dtype=np.int64)] = True
        self.artificial = art
        self.labels = labels
        self.name = name
        for arr in (self.indptr, self.indices, self.weights, self.vertex_weights, self.artificial):
            arr.flags.writeable = False

    def __repr__(self):
        return (
            f"WeightedGraph(name={self.name!r}, vertices={self.vertex_count}, "
            f"edges={self.edge_count}, max_degree={self.max_degree})"
        )

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def check_vertex(self, x) -> int:
        if not isinstance(x, (int, np.integer)) or not 0 <= x < self.vertex_count:
            raise UnknownVertex(f"vertex {x!r} is not in a graph with {self.vertex_count} vertices")
        return int(x)

    def neighbors(self, x) -> np.ndarray:
        x = self.check_vertex(x)
        return self.indices[self.indptr[x]:self.indptr[x + 1]]

    def neighbor_weights(self, x) -> np.ndarray:
        x = self.check_vertex(x)
        return self.weights[self.indptr[x]:self.indptr[x + 1]]

    def degree(self, x) -> int:
        x = self.check_vertex(x)
        return int(self.degrees[x])

    def weight(self, x, y) -> float:
        """Conductance of the pair ``{x, y}``; 0 when they are not adjacent."""
        nbrs = self.neighbors(x)
        hit = np.nonzero(nbrs == y)[0]
        return float(self.neighbor_weights(x)[hit[0]]) if len(hit) else 0.0

    def edges(self):
        """Yield each undirected edge once as ``(u, v, w)`` with ``u < v``."""
        for u in range(self.vertex_count):
            for k in range(self.indptr[u], self.indptr[u + 1]):
                v = int(self.indices[k])
                if u < v:
                    yield u, v, float(self.weights[k])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric conductance matrix ``W`` with ``W[x, y] = mu_xy``."""
        n = self.vertex_count
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(n, n))

    @cached_property
    def transition(self) -> sp.csr_matrix:
        """Row-stochastic matrix ``P[x, y] = mu_xy / mu_x``."""
        return sp.diags(1.0 / self.vertex_weights) @ self.adjacency

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self.vertex_weights) - self.adjacency).tocsr()

    def is_tree(self) -> bool:
        return self._is_tree

    @cached_property
    def _is_tree(self) -> bool:
        return self.edge_count == self.vertex_count - 1 and self.is_connected()

    def is_connected(self) -> bool:
        if self.vertex_count == 0:
            return False
        return len(self.distances_from(0)) == self.vertex_count

    def distances_from(self, x, limit=None) -> dict[int, int]:
        """Breadth-first hop distances from ``x``; stops expanding at ``limit``."""
        x = self.check_vertex(x)
        dist = {x: 0}
        queue = deque([x])
        indptr, indices = self.indptr, self.indices
        while queue:
            u = queue.popleft()
            du = dist[u]
            if limit is not None and du >= limit:
                continue
            for v in indices[indptr[u]:indptr[u + 1]]:
                v = int(v)
                if v not in dist:
                    dist[v] = du + 1
                    queue.append(v)
        return dist

    def require_interior(self, x, radius, what="ball") -> None:
        """Raise unless every vertex at distance < ``radius`` has its true neighbourhood."""
        if not self.artificial.any():
            return
        dist = self.distances_from(x, limit=max(radius - 1, 0))
        for v, d in dist.items():
            if d < radius and self.artificial[v]:
                raise BallCoversGraph(
                    f"{what} around {x} reaches the truncation boundary at vertex {v} "
                    f"(distance {d} < {radius}); enlarge the truncation"
                )


@dataclass(frozen=True)
class Ball:
    """``B(center, radius) = {y : d(center, y) < radius}`` plus its first exterior shell."""

    center: int
    radius: int
    distance: dict = field(repr=False)
    boundary: frozenset = field(repr=False)

    @property
    def members(self) -> frozenset:
        return frozenset(self.distance)

    def __len__(self):
        return len(self.distance)

    def __contains__(self, y):
        return y in self.distance

    def sorted_members(self) -> np.ndarray:
        return np.fromiter(sorted(self.distance), dtype=np.int64, count=len(self.distance))


def build_explicit(
    edges: Iterable[Sequence],
    *,
    vertex_count: int | None = None,
    artificial: Iterable[int] | None = None,
    labels=None,
    name: str = "",
) -> WeightedGraph:
    """Build a :class:`WeightedGraph` from ``(u, v, w)`` triples.

    Each undirected edge must be listed once.  ``vertex_count`` defaults to
    ``max id + 1``; every id in range must have at least one edge.
    """
    edges = list(edges)
    if not edges:
        raise ValidationError("edge list is empty")
    seen = set()
    us, vs, ws = [], [], []
    for e in edges:
        if len(e) == 2:
            u, v, w = e[0], e[1], 1.0
        else:
            u, v, w = e
        u, v, w = int(u), int(v), float(w)
        if u < 0 or v < 0:
            raise UnknownVertex(f"negative vertex id in edge {e!r}")
        if u == v:
            raise SelfLoop(f"self-loop at vertex {u}")
        if not (w > 0 and np.isfinite(w)):
            raise NonPositiveWeight(f"edge ({u}, {v}) has weight {w}")
        key = (u, v) if u < v else (v, u)
        if key in seen:
            raise DuplicateEdge(f"edge {key} listed more than once")
        seen.add(key)
        us.append(u)
        vs.append(v)
        ws.append(w)
    n = max(max(us), max(vs)) + 1
    if vertex_count is not None:
        if vertex_count < n:
            raise UnknownVertex(f"edge endpoint {n - 1} exceeds vertex_count={vertex_count}")
        n = vertex_count
    rows = np.array(us + vs, dtype=np.int64)
    cols = np.array(vs + us, dtype=np.int64)
    vals = np.array(ws + ws, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    counts = np.bincount(rows, minlength=n)
    if (counts == 0).any():
        iso = int(np.nonzero(counts == 0)[0][0])
        raise ValidationError(f"vertex {iso} has no incident edge")
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return WeightedGraph(indptr, cols, vals, artificial=artificial, labels=labels, name=name)


def vertex_weight(g: WeightedGraph, x) -> float:
    """``mu_x``, the total conductance at ``x``."""
    return float(g.vertex_weights[g.check_vertex(x)])


def set_weight(g: WeightedGraph, vertices: Iterable[int]) -> float:
    """``mu(A) = sum of mu_x over A``."""
    idx = np.fromiter((g.check_vertex(v) for v in vertices), dtype=np.int64)
    return float(g.vertex_weights[idx].sum())


def ball(g: WeightedGraph, x, n: int) -> Ball:
    if n < 1:
        raise ValidationError(f"ball radius must be >= 1, got {n}")
    dist = g.distances_from(x, limit=n)
    inside = {v: d for v, d in dist.items() if d < n}
    shell = frozenset(v for v, d in dist.items() if d == n)
    return Ball(center=int(x), radius=n, distance=inside, boundary=shell)


def volume(g: WeightedGraph, x, n: int) -> float:
    """``V(x, n) = mu(B(x, n))``."""
    b = ball(g, x, n)
    return float(g.vertex_weights[b.sorted_members()].sum())


def load_edgelist(path, name: str | None = None) -> WeightedGraph:
    """Read ``u v w`` lines (``#`` comments, weight optional, default 1).

    A pair may appear in both orientations provided the weights agree.
    """
    weights: dict[tuple[int, int], float] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValidationError(f"{path}:{lineno}: expected 'u v [w]', got {raw!r}")
        u, v = int(parts[0]), int(parts[1])
        w = float(parts[2]) if len(parts) == 3 else 1.0
        key = (u, v) if u < v else (v, u)
        if key in weights:
            if weights[key] != w:
                raise AsymmetricEdge(f"{path}:{lineno}: pair {key} has weights {weights[key]} and {w}")
            continue
        weights[key] = w
    return build_explicit(
        [(u, v, w) for (u, v), w in weights.items()], name=name if name is not None else Path(path).stem
    )


def format_edgelist(g: WeightedGraph) -> str:
    """Edge-list text readable by :func:`load_edgelist`."""
    lines = [f"# {g.name or 'graph'}: {g.vertex_count} vertices, {g.edge_count} edges"]
    if g.artificial.any():
        art = " ".join(str(v) for v in np.nonzero(g.artificial)[0])
        lines.append(f"# artificial: {art}")
    lines.extend(f"{u} {v} {w!r}" for u, v, w in g.edges())
    return "\n".join(lines) + "\n"


def write_edgelist(g: WeightedGraph, path) -> None:
    Path(path).write_text(format_edgelist(g))
