"""Dirichlet energy, effective resistance and certified resistance limits.

Three routes to ``rho(x, n) = R_eff({x}, B(x, n)^c)`` are kept separate so
they can check one another:

* the variational route (:func:`rho_n`): solve for the harmonic potential and
  return the reciprocal of its Dirichlet energy;
* the branch recursion on trees (:func:`branch_conductance`,
  :class:`LayeredConductance`), which propagates truncated branch
  conductances one depth at a time;
* the killed Green function (:func:`green_killed`).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .builders import ImplicitTree, LayeredTree
from .errors import (
    BallCoversGraph,
    DisconnectedSets,
    HypothesisViolated,
    NotATree,
    NotLayered,
    PartialFunction,
    UnknownVertex,
    ValidationError,
)
from .graph import Ball, WeightedGraph, ball
from .linalg import conjugate_gradient

__all__ = [
    "dirichlet_energy",
    "effective_resistance",
    "rho_n",
    "rho_profile",
    "green_killed",
    "branch_conductance",
    "BranchTable",
    "LayeredConductance",
    "ResistanceEnclosure",
    "ResistanceProfile",
    "EscapeInterval",
    "certify_rho",
    "contraction_bound",
    "escape_probability",
]

CG_RTOL = 1e-12


def _phi(a):
    return a / (1.0 + a)


def dirichlet_energy(g: WeightedGraph, f) -> float:
    """``E(f, f) = 1/2 * sum over ordered adjacent pairs of (f(x)-f(y))^2 mu_xy``."""
    if isinstance(f, dict):
        missing = [v for v in range(g.vertex_count) if v not in f]
        if missing:
            raise PartialFunction(f"potential undefined on {len(missing)} vertices, e.g. {missing[0]}")
        f = np.array([f[v] for v in range(g.vertex_count)], dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (g.vertex_count,):
        raise PartialFunction(f"potential has shape {f.shape}, graph has {g.vertex_count} vertices")
    rows = np.repeat(np.arange(g.vertex_count), g.degrees)
    diff = f[rows] - f[g.indices]
    return float(0.5 * np.sum(g.weights * diff * diff))


def _solve_spd(A, b, method):
    if method == "cg":
        return conjugate_gradient(A, b, rtol=CG_RTOL)
    if method == "direct":
        return np.atleast_1d(spla.spsolve(sp.csc_matrix(A), b))
    raise ValidationError(f"unknown solver method {method!r}")


def _harmonic_energy(g: WeightedGraph, ones, free, method):
    """Energy of the harmonic function that is 1 on ``ones``, solved on ``free``, 0 elsewhere."""
    h = np.zeros(g.vertex_count)
    h[ones] = 1.0
    if len(free):
        L = g.laplacian
        A = L[free][:, free]
        rhs = -(L[free][:, ones] @ np.ones(len(ones)))
        h[free] = _solve_spd(A, rhs, method)
    return dirichlet_energy(g, h)


def _tree_conductance(g: WeightedGraph, a: int, grounded) -> float:
    """Effective conductance from ``a`` to ``grounded`` on a tree by leaf elimination."""
    parent = {a: -1}
    order = [a]
    for u in order:
        if grounded(u):
            continue
        for v in g.neighbors(u):
            v = int(v)
            if v not in parent:
                parent[v] = u
                order.append(v)
    cond = {}
    for u in reversed(order):
        if grounded(u):
            continue
        total = 0.0
        lo, hi = g.indptr[u], g.indptr[u + 1]
        for v, w in zip(g.indices[lo:hi], g.weights[lo:hi]):
            v = int(v)
            if parent.get(v) != u:
                continue
            if grounded(v):
                total += w
            else:
                c = cond[v]
                if c > 0:
                    total += w * c / (w + c)
        cond[u] = total
    return cond[a]


def effective_resistance(g: WeightedGraph, A, B, method: str = "auto") -> float:
    """``R_eff(A, B)``: reciprocal of the minimal energy with ``f = 1`` on A, ``0`` on B.

    ``method`` is ``"cg"`` (conjugate gradients), ``"direct"`` (sparse LU),
    ``"tree"`` (leaf elimination; singleton ``A`` on a tree) or ``"auto"``.
    """
    A = sorted({g.check_vertex(a) for a in A})
    B = sorted({g.check_vertex(b) for b in B})
    if not A or not B:
        raise ValidationError("A and B must be nonempty")
    if set(A) & set(B):
        raise ValidationError("A and B must be disjoint")
    comp = set()
    for a in A:
        if a not in comp:
            comp.update(g.distances_from(a))
    if not comp & set(B):
        raise DisconnectedSets("B is not reachable from A")
    if method == "auto":
        method = "tree" if len(A) == 1 and g.is_tree() else "cg"
    if method == "tree":
        if len(A) != 1 or not g.is_tree():
            raise NotATree("tree elimination needs a tree and a single source vertex")
        Bset = set(B)
        return 1.0 / _tree_conductance(g, A[0], Bset.__contains__)
    fixed = set(A) | set(B)
    free = np.array(sorted(v for v in comp if v not in fixed), dtype=np.int64)
    energy = _harmonic_energy(g, np.array(A), free, method)
    return 1.0 / energy


def _ball_problem(g: WeightedGraph, x, n):
    x = g.check_vertex(x)
    b = ball(g, x, n)
    if not b.boundary:
        raise BallCoversGraph(f"B({x}, {n}) covers the whole graph; enlarge it")
    g.require_interior(x, n)
    return x, b


def rho_n(g: WeightedGraph, x, n: int, method: str = "auto") -> float:
    """``rho(x, n) = R_eff({x}, B(x, n)^c)``; exactly ``1/mu_x`` at ``n = 1``."""
    x, b = _ball_problem(g, x, n)
    if n == 1:
        return 1.0 / float(g.vertex_weights[x])
    if method == "auto":
        method = "tree" if g.is_tree() else "cg"
    if method == "tree":
        if not g.is_tree():
            raise NotATree("tree elimination requested on a graph with cycles")
        dist = b.distance
        return 1.0 / _tree_conductance(g, x, lambda v: v not in dist)
    free = np.array(sorted(v for v in b.distance if v != x), dtype=np.int64)
    return 1.0 / _harmonic_energy(g, np.array([x]), free, method)


def green_killed(g: WeightedGraph, b: Ball, x, y=None) -> float:
    """Green function of the walk killed on leaving ``b``, ``g^B(x, y)``.

    Solves ``(D - W)_B u = e_y`` restricted to the ball; ``g^B(x, y) = u[x]``.
    """
    x = g.check_vertex(x)
    y = x if y is None else g.check_vertex(y)
    if x not in b or y not in b:
        raise UnknownVertex("x and y must lie in the ball")
    if not b.boundary:
        raise BallCoversGraph(f"ball around {b.center} covers the whole graph")
    g.require_interior(b.center, b.radius)
    members = b.sorted_members()
    pos = {int(v): i for i, v in enumerate(members)}
    L = g.laplacian[members][:, members]
    rhs = np.zeros(len(members))
    rhs[pos[y]] = 1.0
    u = np.atleast_1d(spla.spsolve(sp.csc_matrix(L), rhs))
    return float(u[pos[x]])


@dataclass
class BranchTable:
    """Truncated branch conductances ``I_x(v, m)`` computed for one query."""

    base: int
    target: int
    depth: int
    values: dict = field(default_factory=dict)

    @property
    def result(self) -> float:
        return self.values[(self.target, self.depth)]

    def all_values(self) -> np.ndarray:
        return np.array(list(self.values.values()))


def branch_conductance(tree, x, y, n: int, table: bool = False):
    """``I_x(y, n) = rho_{D_x(y)}(y, n)^{-1}``, the conductance of the branch beyond ``y``.

    ``D_x(y)`` is the set of vertices whose path from ``x`` passes through
    ``y``.  Computed with the one-step recursion
    ``I(y, m+1) = sum_i c_i I(y_i, m) / (c_i + I(y_i, m))`` over the
    children ``y_i`` of ``y`` in ``D_x(y)`` (edge conductances ``c_i``; with
    unit weights this is ``I/(1+I)``), starting from ``I(y, 1)`` = total
    conductance from ``y`` into ``D_x(y)``.

    Accepts an explicit tree (:class:`WeightedGraph`) with integer vertices
    or a :class:`LayeredTree` with address tuples.
    """
    if n < 1:
        raise ValidationError("depth n must be >= 1")
    if isinstance(tree, LayeredTree):
        value = LayeredConductance(tree).branch(tuple(x), tuple(y), n)
        return value
    if isinstance(tree, ImplicitTree):
        raise NotLayered("branch recursion on implicit trees needs a LayeredTree or an explicit truncation")
    g = tree
    if not g.is_tree():
        raise NotATree("branch_conductance needs a tree")
    x, y = g.check_vertex(x), g.check_vertex(y)
    dist_x = g.distances_from(x)
    # D_x(y): descendants of y when the tree hangs from x
    depth = {y: 0}
    order = [y]
    for u in order:
        if depth[u] >= n - 1:
            continue
        for v in g.neighbors(u):
            v = int(v)
            if dist_x[v] > dist_x[u]:
                depth[v] = depth[u] + 1
                order.append(v)
    values = {}
    for u in reversed(order):
        m = n - depth[u]
        lo, hi = g.indptr[u], g.indptr[u + 1]
        total = 0.0
        for v, w in zip(g.indices[lo:hi], g.weights[lo:hi]):
            v = int(v)
            if dist_x[v] <= dist_x[u]:
                continue
            if m == 1:
                total += w
            else:
                c = values[(v, m - 1)]
                total += w * c / (w + c)
        values[(u, m)] = total
    tab = BranchTable(base=x, target=y, depth=n, values=values)
    return tab if table else tab.result


class LayeredConductance:
    """Branch conductance tables for a :class:`LayeredTree`.

    ``outward(r, m)`` is the conductance of the subtree hanging below a
    vertex at depth ``r`` (seen from its parent side), truncated at depth
    ``m``.  ``upward(r, m)`` is the conductance of the branch at an ancestor
    at depth ``r`` seen from one of its children: the ancestor's own parent
    side plus its remaining children.  Both depend only on depth by
    spherical symmetry, so ``rho(x, m)`` depends only on the depth of ``x``.
    """

    def __init__(self, tree: LayeredTree):
        if not isinstance(tree, LayeredTree):
            raise NotLayered(f"expected a LayeredTree, got {type(tree).__name__}")
        self.tree = tree
        self._cache: dict = {}

    def tables(self, r: int, n: int):
        """``(first_layer, out, up)`` arrays valid for queries at depth ``r`` up to truncation ``n``.

        ``out[i, m]`` is ``outward(first_layer + i, m)`` and ``up[i, m]`` is
        ``upward(first_layer + i, m)``; column 0 is unused.
        """
        key = (r, n)
        if key in self._cache:
            return self._cache[key]
        t = self.tree
        lo = max(0, r - n)
        hi = r + n
        layers = np.arange(lo, hi + 1)
        kids = np.array([t.children(int(k)) for k in layers], dtype=np.float64)
        width = len(layers)
        out = np.full((width + 1, n + 1), np.nan)
        out[:width, 1] = kids
        for m in range(1, n):
            nxt = out[1 : width + 1, m]
            out[:width, m + 1] = kids * _phi(nxt)
        up = np.full((width, n + 1), np.nan)
        above = (layers > 0).astype(np.float64)
        others = kids - 1.0
        up[:, 1] = others + above
        for m in range(1, n):
            from_kids = others * _phi(out[1 : width + 1, m])
            prev = np.empty(width)
            prev[0] = up[0, m] if lo == 0 else np.nan
            prev[1:] = up[:-1, m]
            from_parent = np.where(above > 0, _phi(prev), 0.0)
            up[:, m + 1] = from_kids + from_parent
        res = (lo, out[:width], up)
        self._cache[key] = res
        return res

    def inverse_profile(self, r: int, n: int) -> np.ndarray:
        """``rho(x, m)^{-1}`` for ``m = 1..n`` at any vertex of depth ``r`` (index ``m-1``)."""
        lo, out, up = self.tables(r, n)
        i = r - lo
        res = np.empty(n)
        res[0] = self.tree.degree(r)
        for m in range(2, n + 1):
            val = self.tree.children(r) * _phi(out[i + 1, m - 1])
            if r > 0:
                val += _phi(up[i - 1, m - 1])
            res[m - 1] = val
        if not np.isfinite(res).all():
            raise ValidationError("internal table window too small")
        return res

    def inverse_rho(self, r: int, n: int) -> float:
        return float(self.inverse_profile(r, n)[-1])

    def evaluated_values(self, r: int, n: int) -> np.ndarray:
        """Every finite branch conductance in the depth-``r`` tables, plus the profile itself."""
        lo, out, up = self.tables(r, n)
        arr = np.concatenate([out[:, 1:].ravel(), up[:, 1:].ravel(), self.inverse_profile(r, n)])
        return arr[np.isfinite(arr)]

    def branch(self, x, y, n: int) -> float:
        t = self.tree
        t.type_chain(x)
        t.type_chain(y)
        if x == y:
            return self.inverse_rho(len(x), n)
        ry = len(y)
        if len(y) < len(x) and x[: len(y)] == y:
            lo, out, up = self.tables(ry, n)
            return float(up[ry - lo, n])
        lo, out, up = self.tables(ry, n)
        return float(out[ry - lo, n])


@dataclass(frozen=True)
class ResistanceEnclosure:
    """Certified interval ``lo <= rho(x) <= hi`` built from ``rho(x, n_used)``."""

    lo: float
    hi: float
    n_used: int

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value, tol=0.0) -> bool:
        return self.lo - tol <= value <= self.hi + tol


@dataclass(frozen=True)
class EscapeInterval:
    """Interval for ``P_x(T_x^+ = infinity)``.  ``certified`` is False for extrapolations."""

    lo: float
    hi: float
    certified: bool
    n_used: int

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass
class ResistanceProfile:
    base: object
    rows: list  # (n, rho, lo, hi); lo/hi None when uncertified

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "rho", "lo", "hi"])
        for n, rho, lo, hi in self.rows:
            w.writerow([n, repr(rho), "" if lo is None else repr(lo), "" if hi is None else repr(hi)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "base": list(self.base) if isinstance(self.base, tuple) else self.base,
            "rows": [{"n": n, "rho": rho, "lo": lo, "hi": hi} for n, rho, lo, hi in self.rows],
        }


def _check_contraction(tree: LayeredTree):
    n1, n2 = tree.degree_range()
    if not (n1 >= 3 and n2 < (n1 - 1) ** 2):
        raise HypothesisViolated(
            f"degrees span [{n1}, {n2}]; the certificate needs 3 <= N1 <= N2 < (N1-1)^2"
        )
    return n1, n2


def contraction_bound(n1: int, n2: int, n: int) -> float:
    """Bound on ``rho(x) - rho(x, n)`` for trees with all degrees in ``[n1, n2]``.

    The inverse resistance tail is at most ``(n2/(n1-1)^2)^(n-1) * n2`` and
    ``rho(x)^{-1} >= n1 - 2``, which converts it into a resistance gap.
    """
    inverse_gap = (n2 / (n1 - 1) ** 2) ** (n - 1) * n2
    return inverse_gap / (n1 - 2) ** 2


def certify_rho(tree: LayeredTree, x=(), n: int = 200, conductance: LayeredConductance | None = None):
    """Enclosure ``[rho(x, n), rho(x, n) + bound_n]`` of ``rho(x)`` on a layered tree."""
    if not isinstance(tree, LayeredTree):
        raise NotLayered("certified enclosures need a LayeredTree")
    n1, n2 = _check_contraction(tree)
    tree.type_chain(x)
    lc = conductance or LayeredConductance(tree)
    rho = 1.0 / lc.inverse_rho(len(x), n)
    return ResistanceEnclosure(lo=rho, hi=rho + contraction_bound(n1, n2, n), n_used=n)


def _certified_n(n1, n2, tol):
    q = n2 / (n1 - 1) ** 2
    base = n2 / (n1 - 2) ** 2
    if base <= tol:
        return 1
    return max(1, int(math.ceil(math.log(tol / base) / math.log(q))) + 1)


def escape_probability(obj, x=(), n: int | None = None, tol: float = 1e-12) -> EscapeInterval:
    """Interval for ``P_x(T_x^+ = infinity) = 1 / (mu_x rho(x))``.

    On a :class:`LayeredTree` the interval comes from :func:`certify_rho`
    (``n`` defaults to the smallest depth whose enclosure is narrower than
    ``tol``).  On an explicit graph only ``rho(x, n) <= rho(x)`` is known, so
    the result is ``[0, 1/(mu_x rho(x, n))]`` with ``certified=False``; ``n``
    defaults to the largest radius the graph supports.
    """
    if isinstance(obj, LayeredTree):
        n1, n2 = _check_contraction(obj)
        if n is None:
            n = max(2, _certified_n(n1, n2, tol))
        enc = certify_rho(obj, x, n)
        mu = obj.degree(len(x))
        return EscapeInterval(lo=1.0 / (mu * enc.hi), hi=1.0 / (mu * enc.lo), certified=True, n_used=n)
    if isinstance(obj, ImplicitTree):
        raise NotLayered("escape intervals on implicit trees need a LayeredTree")
    g = obj
    x = g.check_vertex(x)
    if n is None:
        n = _largest_radius(g, x)
    rho = rho_n(g, x, n)
    mu = float(g.vertex_weights[x])
    return EscapeInterval(lo=0.0, hi=min(1.0, 1.0 / (mu * rho)), certified=False, n_used=n)


def _largest_radius(g: WeightedGraph, x) -> int:
    dist = g.distances_from(x)
    ecc = max(dist.values())
    art = [d for v, d in dist.items() if g.artificial[v]]
    limit = min(art) if art else ecc
    if limit < 1:
        raise BallCoversGraph(f"no ball around {x} fits inside the graph")
    return limit


def rho_profile(obj, x, n_max: int, method: str = "auto") -> ResistanceProfile:
    """``rho(x, n)`` for ``n = 1..n_max`` (with enclosures on layered trees)."""
    rows = []
    if isinstance(obj, LayeredTree):
        x = tuple(x)
        n1, n2 = obj.degree_range()
        certified = n1 >= 3 and n2 < (n1 - 1) ** 2
        inv = LayeredConductance(obj).inverse_profile(len(x), n_max)
        for n in range(1, n_max + 1):
            rho = 1.0 / inv[n - 1]
            hi = rho + contraction_bound(n1, n2, n) if certified else None
            rows.append((n, rho, rho if certified else None, hi))
        return ResistanceProfile(base=x, rows=rows)
    for n in range(1, n_max + 1):
        rows.append((n, rho_n(obj, x, n, method), None, None))
    return ResistanceProfile(base=int(x), rows=rows)
