"""Exact laws of the range on tiny graphs.

The joint law of ``(R_n, S_n)`` is obtained by pushing probability through
the states ``(current vertex, set of earlier vertices)``.  Paths that reach
the same state are merged, which is exactly the sum over all length-``n``
paths but costs ``O(n * V * 2^V * deg)`` instead of ``deg^n``.  Arithmetic is
rational throughout: transition probabilities ``mu_xy / mu_x`` are formed
from the exact binary values of the float weights.

:func:`enumerate_paths` is a plain depth-first enumeration kept as an
independent cross-check of the state-merged computation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .builders import ImplicitTree
from .errors import BudgetExceeded, ValidationError
from .graph import WeightedGraph

__all__ = [
    "ENUMERATION_BUDGET",
    "ExactRangeLaw",
    "enumerate_range_law",
    "enumerate_range_laws",
    "enumerate_paths",
    "trajectory",
]

ENUMERATION_BUDGET = 10**8
MAX_VERTICES = 16


def _transition_fractions(g: WeightedGraph):
    rows = []
    for u in range(g.vertex_count):
        ws = [Fraction(float(w)) for w in g.neighbor_weights(u)]
        total = sum(ws)
        rows.append([(int(v), w / total) for v, w in zip(g.neighbors(u), ws)])
    return rows


@dataclass
class ExactRangeLaw:
    """``law[(r, y)] = P_x(R_n = r, S_n = y)`` as exact fractions."""

    start: int
    n: int
    law: dict

    def total(self) -> Fraction:
        return sum(self.law.values(), Fraction(0))

    def range_law(self) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for (r, _), p in self.law.items():
            out[r] = out.get(r, Fraction(0)) + p
        return dict(sorted(out.items()))

    def expected_range(self) -> Fraction:
        return sum((r * p for (r, _), p in self.law.items()), Fraction(0))

    def endpoint_probability(self, y) -> Fraction:
        return sum((p for (_, z), p in self.law.items() if z == y), Fraction(0))

    def conditional_range_law(self, y=None) -> dict[int, Fraction]:
        """Law of ``R_n`` given ``S_n = y`` (default: ``y`` = start)."""
        y = self.start if y is None else y
        mass = self.endpoint_probability(y)
        if mass == 0:
            return {}
        out: dict[int, Fraction] = {}
        for (r, z), p in self.law.items():
            if z == y:
                out[r] = out.get(r, Fraction(0)) + p / mass
        return dict(sorted(out.items()))

    def to_dict(self) -> dict:
        entries = [
            {"range": r, "endpoint": y, "probability": str(p), "value": float(p)}
            for (r, y), p in sorted(self.law.items())
        ]
        return {
            "start": self.start,
            "n": self.n,
            "expected_range": str(self.expected_range()),
            "expected_range_value": float(self.expected_range()),
            "range_law": {str(r): str(p) for r, p in self.range_law().items()},
            "joint": entries,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check(g, x, n_max):
    if not isinstance(g, WeightedGraph):
        raise ValidationError("exact enumeration needs an explicit graph")
    x = g.check_vertex(x)
    if not isinstance(n_max, (int, np.integer)) or n_max < 1:
        raise ValidationError(f"horizon must be an integer >= 1, got {n_max!r}")
    if g.vertex_count > MAX_VERTICES:
        raise BudgetExceeded(f"exact enumeration is limited to {MAX_VERTICES} vertices")
    work = int(n_max) * g.vertex_count * (2 ** g.vertex_count) * max(1, g.max_degree)
    if work > ENUMERATION_BUDGET:
        raise BudgetExceeded(f"enumeration needs ~{work:.2e} state updates, over {ENUMERATION_BUDGET:.0e}")
    return x


def enumerate_range_laws(g: WeightedGraph, x, n_max: int) -> list[ExactRangeLaw]:
    """Exact laws for every horizon ``1..n_max`` in one pass."""
    x = _check(g, x, n_max)
    P = _transition_fractions(g)
    states = {(x, 0): Fraction(1)}
    laws = []
    for n in range(1, int(n_max) + 1):
        nxt: dict = {}
        for (v, mask), p in states.items():
            m2 = mask | (1 << v)
            for y, q in P[v]:
                key = (y, m2)
                nxt[key] = nxt.get(key, Fraction(0)) + p * q
        states = nxt
        law: dict = {}
        for (v, mask), p in states.items():
            key = (mask.bit_count(), v)
            law[key] = law.get(key, Fraction(0)) + p
        laws.append(ExactRangeLaw(x, n, law))
    return laws


def enumerate_range_law(g: WeightedGraph, x, n: int) -> ExactRangeLaw:
    """Exact joint law of ``(R_n, S_n)`` started at ``x``."""
    return enumerate_range_laws(g, x, n)[-1]


def enumerate_paths(g: WeightedGraph, x, n: int) -> ExactRangeLaw:
    """Same law by explicit depth-first enumeration of all ``deg^n`` paths."""
    x = g.check_vertex(x)
    if g.max_degree ** n > ENUMERATION_BUDGET:
        raise BudgetExceeded(f"{g.max_degree}^{n} paths exceed the enumeration budget")
    P = _transition_fractions(g)
    law: dict = {}
    path = [x]

    def dfs(v, p):
        if len(path) == n + 1:
            key = (len(set(path[:-1])), v)
            law[key] = law.get(key, Fraction(0)) + p
            return
        for y, q in P[v]:
            path.append(y)
            dfs(y, p * q)
            path.pop()

    dfs(x, Fraction(1))
    return ExactRangeLaw(x, n, law)


def trajectory(obj, x, n: int, rng: np.random.Generator) -> list:
    """Stored path ``S_0..S_n`` using the graph's own neighbour lists.

    Pure Python and independent of the compiled kernels; implicit trees are
    walked through :meth:`ImplicitTree.neighbors` on addresses.
    """
    if isinstance(obj, ImplicitTree):
        cur = tuple(x)
        obj.type_chain(cur)
        path = [cur]
        for _ in range(n):
            nbrs = obj.neighbors(cur)
            cur = nbrs[int(rng.integers(len(nbrs)))]
            path.append(cur)
        return path
    g = obj
    cur = g.check_vertex(x)
    path = [cur]
    for _ in range(n):
        w = g.neighbor_weights(cur)
        cur = int(g.neighbors(cur)[rng.choice(len(w), p=w / w.sum())])
        path.append(cur)
    return path
