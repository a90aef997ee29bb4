"""Graph families: lattice boxes, fractals and implicit infinite trees.

Infinite trees are represented lazily.  A vertex is named by its
:data:`TreeAddress`, the tuple of child indices on the path from the root.
Child slots of a vertex are numbered ``0 .. children-1``; the parent edge is
not a slot.  Every implicit tree here is a *typed* tree: each vertex carries a
small integer type and the types of its children depend only on its own type.
That table is what the walk kernels consume.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    LowInternalDegree,
    NotATree,
    SizeOverflow,
    SpecInvariantViolated,
    UnknownVertex,
    ValidationError,
)
from .graph import WeightedGraph, build_explicit

__all__ = [
    "DEFAULT_VERTEX_BUDGET",
    "TreeAddress",
    "ImplicitTree",
    "LayeredTree",
    "AlternatingTreeSpec",
    "AttachedTree",
    "lattice_box",
    "regular_tree",
    "pruned_tree",
    "regular_tree_spec",
    "pruned_tree_spec",
    "attach_trees",
    "alternating_tree",
    "sierpinski_gasket",
    "vicsek_tree",
]

DEFAULT_VERTEX_BUDGET = 2_000_000

TreeAddress = tuple


def _check_budget(count, budget, what):
    if budget is not None and count > budget:
        raise SizeOverflow(f"{what} needs {count} vertices, over the budget of {budget}")


class ImplicitTree:
    """Common machinery for lazily generated rooted trees.

    Subclasses set ``child_types`` (list of tuples, indexed by type) and
    ``root_type``.
    """

    child_types: list
    root_type: int
    name: str = ""

    @cached_property
    def type_table(self):
        """``(children, counts)``: padded int32 child-type matrix and child counts."""
        width = max(1, max(len(c) for c in self.child_types))
        table = np.full((len(self.child_types), width), -1, dtype=np.int32)
        counts = np.zeros(len(self.child_types), dtype=np.int32)
        for t, kids in enumerate(self.child_types):
            table[t, : len(kids)] = kids
            counts[t] = len(kids)
        return table, counts

    @property
    def max_degree(self) -> int:
        return max(len(c) + (t != self.root_type) for t, c in enumerate(self.child_types))

    def type_chain(self, address) -> list[int]:
        """Types of the vertices on the path root -> ``address``."""
        chain = [self.root_type]
        t = self.root_type
        for depth, j in enumerate(address):
            kids = self.child_types[t]
            if not isinstance(j, (int, np.integer)) or not 0 <= j < len(kids):
                raise UnknownVertex(f"address {tuple(address)!r} has invalid child index {j!r} at depth {depth}")
            t = kids[j]
            chain.append(t)
        return chain

    def vertex_type(self, address) -> int:
        return self.type_chain(address)[-1]

    def children_count(self, address) -> int:
        return len(self.child_types[self.vertex_type(address)])

    def degree_at(self, address) -> int:
        return self.children_count(address) + (len(address) > 0)

    def neighbors(self, address) -> list:
        """Neighbour addresses: parent first (when not the root), then children."""
        address = tuple(address)
        kids = self.children_count(address)
        out = [address[:-1]] if address else []
        out.extend(address + (j,) for j in range(kids))
        return out

    def shell_sizes(self, radius: int) -> list[int]:
        """Number of vertices at each depth ``0..radius``."""
        counts = {self.root_type: 1}
        sizes = [1]
        for _ in range(radius):
            nxt: dict[int, int] = {}
            for t, c in counts.items():
                for k in self.child_types[t]:
                    nxt[k] = nxt.get(k, 0) + c
            counts = nxt
            sizes.append(sum(counts.values()))
        return sizes

    def truncate(self, radius: int, budget: int | None = DEFAULT_VERTEX_BUDGET):
        """Explicit graph on all vertices at depth <= ``radius``.

        Returns ``(graph, addresses)`` where ``addresses[i]`` is the address of
        vertex ``i`` (vertex 0 is the root).  Depth-``radius`` vertices that
        have children in the infinite tree are flagged artificial.
        """
        if radius < 1:
            raise ValidationError("truncation radius must be >= 1")
        _check_budget(sum(self.shell_sizes(radius)), budget, f"{self.name or 'tree'} truncated at {radius}")
        addresses = [()]
        types = [self.root_type]
        edges = []
        frontier = [0]
        for _ in range(radius):
            nxt = []
            for v in frontier:
                for j, k in enumerate(self.child_types[types[v]]):
                    w = len(addresses)
                    addresses.append(addresses[v] + (j,))
                    types.append(k)
                    edges.append((v, w, 1.0))
                    nxt.append(w)
            frontier = nxt
        artificial = [v for v in frontier if self.child_types[types[v]]]
        g = build_explicit(edges, artificial=artificial, labels=addresses, name=f"{self.name}|r<={radius}")
        return g, addresses


class LayeredTree(ImplicitTree):
    """Spherically symmetric tree: vertex degree depends only on depth.

    ``breaks`` are the depths where a new band starts and ``band_degrees``
    has one more entry than ``breaks``: depth ``r >= 1`` has degree
    ``band_degrees[#breaks <= r]``.  The root has ``root_degree``.
    """

    def __init__(self, root_degree, breaks=(), band_degrees=(3,), name=""):
        breaks = tuple(int(b) for b in breaks)
        band_degrees = tuple(int(d) for d in band_degrees)
        if len(band_degrees) != len(breaks) + 1:
            raise ValidationError("band_degrees must have one more entry than breaks")
        if any(b < 1 for b in breaks) or list(breaks) != sorted(set(breaks)):
            raise ValidationError(f"breaks must be strictly increasing positive depths, got {breaks}")
        if root_degree < 2 or min(band_degrees) < 2:
            raise ValidationError("layered trees need degree >= 2 everywhere")
        self.root_degree = int(root_degree)
        self.breaks = breaks
        self.band_degrees = band_degrees
        self.name = name
        self.cap = max(1, breaks[-1] if breaks else 1)
        kids = [tuple([1] * self.root_degree)]
        for t in range(1, self.cap + 1):
            kids.append(tuple([min(t + 1, self.cap)] * (self.degree(t) - 1)))
        self.child_types = kids
        self.root_type = 0

    def __repr__(self):
        return (
            f"LayeredTree(root_degree={self.root_degree}, breaks={self.breaks}, "
            f"band_degrees={self.band_degrees}, name={self.name!r})"
        )

    def __eq__(self, other):
        return isinstance(other, LayeredTree) and (
            (self.root_degree, self.breaks, self.band_degrees)
            == (other.root_degree, other.breaks, other.band_degrees)
        )

    def __hash__(self):
        return hash((self.root_degree, self.breaks, self.band_degrees))

    def degree(self, r: int) -> int:
        if r < 0:
            raise ValidationError("depth must be >= 0")
        if r == 0:
            return self.root_degree
        return self.band_degrees[bisect.bisect_right(self.breaks, r)]

    degree_by_layer = degree

    def children(self, r: int) -> int:
        return self.degree(r) - (r > 0)

    def degree_range(self) -> tuple[int, int]:
        values = (self.root_degree,) + self.band_degrees
        return min(values), max(values)

    def degrees_array(self, length: int) -> np.ndarray:
        return np.array([self.degree(r) for r in range(length)], dtype=np.int64)

    def depth_of(self, address) -> int:
        self.type_chain(address)
        return len(address)

    def representative(self, depth: int) -> TreeAddress:
        """The leftmost vertex at ``depth`` (all vertices of one layer are equivalent)."""
        return (0,) * depth


def regular_tree_spec(N: int) -> LayeredTree:
    if N < 3:
        raise ValidationError(f"regular trees need N >= 3, got {N}")
    return LayeredTree(N, (), (N,), name=f"T_{N}")


def pruned_tree_spec(N: int) -> LayeredTree:
    if N < 3:
        raise ValidationError(f"pruned trees need N >= 3, got {N}")
    return LayeredTree(N - 1, (), (N,), name=f"T~_{N}")


def regular_tree(N: int, depth: int, budget: int | None = DEFAULT_VERTEX_BUDGET):
    """``T_N`` truncated at ``depth``; returns ``(graph, spec)``."""
    spec = regular_tree_spec(N)
    g, _ = spec.truncate(depth, budget)
    return g, spec


def pruned_tree(N: int, depth: int, budget: int | None = DEFAULT_VERTEX_BUDGET):
    """Root degree ``N-1``, all other degrees ``N``; returns ``(graph, spec)``."""
    spec = pruned_tree_spec(N)
    g, _ = spec.truncate(depth, budget)
    return g, spec


@dataclass(frozen=True)
class AlternatingTreeSpec:
    """Degree ``n1`` on depths ``[k_{2j}, k_{2j+1})`` and ``n2`` on ``[k_{2j+1}, k_{2j+2})``.

    ``k_0 = 0``; the band starting at the last radius extends to infinity.
    """

    n1: int
    n2: int
    radii: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(int(k) for k in self.radii))
        if not 3 <= self.n1 < self.n2 < (self.n1 - 1) ** 2:
            raise SpecInvariantViolated(
                f"need 3 <= n1 < n2 < (n1-1)^2, got n1={self.n1}, n2={self.n2}"
            )
        if self.radii and self.radii[0] < 1:
            raise SpecInvariantViolated("k_1 must be >= 1")
        for a, b in zip(self.radii, self.radii[1:]):
            if not b > 2 * a:
                raise SpecInvariantViolated(f"radii must more than double: {b} <= 2*{a}")

    def extended(self, k: int) -> "AlternatingTreeSpec":
        return AlternatingTreeSpec(self.n1, self.n2, self.radii + (k,))

    def band_degree(self, index: int) -> int:
        return self.n1 if index % 2 == 0 else self.n2

    def tree(self) -> LayeredTree:
        degrees = tuple(self.band_degree(i) for i in range(len(self.radii) + 1))
        return LayeredTree(self.n1, self.radii, degrees, name=f"alt({self.n1},{self.n2};{list(self.radii)})")


def alternating_tree(spec: AlternatingTreeSpec) -> LayeredTree:
    return spec.tree()


class AttachedTree(ImplicitTree):
    """A finite core tree with a fresh pruned tree glued onto every leaf.

    Each core leaf is identified with the root of its pruned tree, so merged
    vertices have degree ``1 + (N-1) = N``.  Addresses are rooted at the core
    vertex ``origin``.
    """

    def __init__(self, core: WeightedGraph, N: int, origin: int = 0):
        if N < 3:
            raise ValidationError(f"N must be >= 3, got {N}")
        if not core.is_tree():
            raise NotATree("core graph is not a tree")
        origin = core.check_vertex(origin)
        deg = core.degrees
        internal = [v for v in range(core.vertex_count) if deg[v] > 1]
        if not internal:
            raise LowInternalDegree("core has no internal vertex")
        low = [v for v in internal if deg[v] < 3]
        if low:
            raise LowInternalDegree(f"internal core vertices {low} have degree < 3")
        self.core = core
        self.N = N
        self.origin = origin
        self.name = f"Y_{N}"
        parent = {origin: None}
        order = [origin]
        for u in order:
            for v in sorted(int(w) for w in core.neighbors(u)):
                if v not in parent:
                    parent[v] = u
                    order.append(v)
        self.core_parent = parent
        tilde = core.vertex_count
        kids = []
        for v in range(core.vertex_count):
            core_kids = tuple(sorted(int(w) for w in core.neighbors(v) if parent.get(int(w)) == v))
            glued = (tilde,) * (N - 1) if deg[v] == 1 else ()
            kids.append(core_kids + glued)
        kids.append((tilde,) * (N - 1))
        self.child_types = kids
        self.root_type = origin
        self.tilde_type = tilde

    def is_core(self, address) -> bool:
        return self.vertex_type(address) != self.tilde_type


def attach_trees(core: WeightedGraph, N: int, origin: int = 0) -> AttachedTree:
    return AttachedTree(core, N, origin)


def lattice_box(d: int, L: int, budget: int | None = DEFAULT_VERTEX_BUDGET) -> WeightedGraph:
    """Unit-weight nearest-neighbour graph on ``{0..L-1}^d``; labels are coordinates."""
    if d not in (1, 2, 3):
        raise ValidationError(f"dimension must be 1, 2 or 3, got {d}")
    if L < 2:
        raise ValidationError(f"side must be >= 2, got {L}")
    _check_budget(L**d, budget, f"{d}-d box of side {L}")
    idx = np.arange(L**d).reshape((L,) * d)
    us, vs = [], []
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, L - 1)
        hi[axis] = slice(1, L)
        us.append(idx[tuple(lo)].ravel())
        vs.append(idx[tuple(hi)].ravel())
    u = np.concatenate(us)
    v = np.concatenate(vs)
    labels = [tuple(int(c) for c in np.unravel_index(i, (L,) * d)) for i in range(L**d)]
    return build_explicit(zip(u.tolist(), v.tolist(), itertools.repeat(1.0)), labels=labels, name=f"box{d}d_L{L}")


def _glue(cells, coords_edges):
    """Union of translated edge sets, identifying vertices by coordinates."""
    index: dict = {}
    edges = set()
    for shift in cells:
        for a, b in coords_edges:
            pa = tuple(x + s for x, s in zip(a, shift))
            pb = tuple(x + s for x, s in zip(b, shift))
            edges.add((pa, pb) if pa < pb else (pb, pa))
    for a, b in sorted(edges):
        for p in (a, b):
            if p not in index:
                index[p] = len(index)
    return index, edges


def sierpinski_gasket(level: int, budget: int | None = DEFAULT_VERTEX_BUDGET) -> WeightedGraph:
    """Two-dimensional graphical Sierpinski gasket of the given level.

    Coordinates ``(a, b)`` are on the triangular lattice; the level-0 cell is
    the triangle ``(0,0), (1,0), (0,1)`` and level ``m+1`` glues three level-``m``
    copies at their shared corners.
    """
    if level < 0:
        raise ValidationError("level must be >= 0")
    _check_budget((3 ** (level + 1) + 3) // 2, budget, f"gasket level {level}")
    edges = {((0, 0), (1, 0)), ((0, 0), (0, 1)), ((0, 1), (1, 0))}
    for m in range(level):
        s = 2**m
        _, edges = _glue([(0, 0), (s, 0), (0, s)], edges)
    index, edges = _glue([(0, 0)], edges)
    labels = sorted(index, key=index.get)
    return build_explicit(
        [(index[a], index[b], 1.0) for a, b in sorted(edges)], labels=labels, name=f"gasket{level}"
    )


def vicsek_tree(level: int, budget: int | None = DEFAULT_VERTEX_BUDGET) -> WeightedGraph:
    """Plus-shaped Vicsek tree: five level-``m`` copies glued at arm tips."""
    if level < 0:
        raise ValidationError("level must be >= 0")
    _check_budget(4 * 5**level + 1, budget, f"Vicsek tree level {level}")
    edges = {((0, 0), p) for p in ((1, 0), (-1, 0), (0, 1), (0, -1))}
    edges = {(a, b) if a < b else (b, a) for a, b in edges}
    for m in range(level):
        s = 2 * 3**m
        _, edges = _glue([(0, 0), (s, 0), (-s, 0), (0, s), (0, -s)], edges)
    index, edges = _glue([(0, 0)], edges)
    labels = sorted(index, key=index.get)
    return build_explicit(
        [(index[a], index[b], 1.0) for a, b in sorted(edges)], labels=labels, name=f"vicsek{level}"
    )
