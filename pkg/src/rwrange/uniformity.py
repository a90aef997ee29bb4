"""Diagnostics for uniform convergence of ``rho(x, n)``.

Transient layered trees get certified sweeps: the gap
``rho(x) - rho(x, n)`` is bounded above by ``hi - rho(x, n)`` with ``hi``
from a very deep enclosure, and compared against the analytic contraction
bound.  Finite graphs standing in for recurrent families only get sampled
evidence (growth of ``inf_x rho(x, n)``, heat-kernel partial sums, decay
exponents); their verdicts are labelled as diagnostics.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .builders import LayeredTree
from .errors import BallCoversGraph, InsufficientGrid, ValidationError
from .graph import WeightedGraph
from .resistance import (
    LayeredConductance,
    _certified_n,
    _check_contraction,
    certify_rho,
    contraction_bound,
    rho_n,
)

__all__ = [
    "UniformityReport",
    "uniformity_sweep",
    "RecurrenceDiagnostic",
    "recurrence_diagnostic",
    "DecayFit",
    "fit_decay_exponent",
    "uc_alpha_fit",
]

REFERENCE_TOL = 1e-12


@dataclass
class UniformityReport:
    """Worst case over the sample for each ``n``.

    ``mode`` is ``"certified"`` (values are gap upper bounds, ``bounds`` the
    analytic envelope) or ``"proxy"`` (values are ``inf_x rho(x, n)``).
    """

    label: str
    mode: str
    sample: list
    ns: list
    values: list
    bounds: list
    per_vertex: dict = field(default_factory=dict)
    verdict: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sample"] = [list(s) if isinstance(s, tuple) else s for s in self.sample]
        d["per_vertex"] = {str(k): v for k, v in self.per_vertex.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "gap_or_proxy", "analytic_bound"])
        for n, v, b in zip(self.ns, self.values, self.bounds):
            w.writerow([n, repr(v), "" if b is None else repr(b)])
        return buf.getvalue()


def _sweep_tree(tree: LayeredTree, sample, n_max: int) -> UniformityReport:
    n1, n2 = _check_contraction(tree)
    if sample is None:
        sample = [tree.representative(r) for r in range(n_max + 1)]
    sample = [tuple(a) for a in sample]
    for a in sample:
        tree.type_chain(a)
    n_ref = max(n_max, _certified_n(n1, n2, REFERENCE_TOL))
    lc = LayeredConductance(tree)
    per_vertex = {}
    by_depth = {}
    for a in sample:
        d = len(a)
        if d not in by_depth:
            hi = certify_rho(tree, a, n_ref, conductance=lc).hi
            rho = 1.0 / lc.inverse_profile(d, n_max)
            by_depth[d] = [float(hi - r) for r in rho]
        per_vertex[a] = by_depth[d]
    ns = list(range(1, n_max + 1))
    worst = [max(per_vertex[a][i] for a in sample) for i in range(n_max)]
    bounds = [contraction_bound(n1, n2, n) for n in ns]
    ok = all(v <= b + 1e-9 for v, b in zip(worst, bounds))
    verdict = (
        "certified: every sampled gap lies under the geometric bound"
        if ok
        else "bound violated: measured gap exceeds the geometric bound"
    )
    return UniformityReport(tree.name or repr(tree), "certified", sample, ns, worst, bounds, per_vertex, verdict)


def _sweep_graph(g: WeightedGraph, sample, n_max: int) -> UniformityReport:
    if sample is None:
        raise ValidationError("explicit graphs need an explicit sample")
    sample = [g.check_vertex(x) for x in sample]
    if not sample:
        raise ValidationError("sample is empty")
    per_vertex = {x: [rho_n(g, x, n) for n in range(1, n_max + 1)] for x in sample}
    ns = list(range(1, n_max + 1))
    inf = [min(per_vertex[x][i] for x in sample) for i in range(n_max)]
    grows = all(b >= a - 1e-12 for a, b in zip(inf, inf[1:])) and inf[-1] > inf[0]
    verdict = "diagnostic only: " + (
        "inf rho(x, n) increases with n" if grows else "inf rho(x, n) does not increase"
    )
    return UniformityReport(g.name, "proxy", sample, ns, inf, [None] * n_max, per_vertex, verdict)


def uniformity_sweep(family, sample=None, n_max: int = 50) -> UniformityReport:
    """Tabulate worst-case gaps (trees) or resistance growth (finite graphs).

    For a :class:`LayeredTree` the default sample is one vertex per layer
    ``0..n_max``; all vertices of a layer are equivalent.
    """
    if not isinstance(n_max, (int, np.integer)) or n_max < 1:
        raise ValidationError("n_max must be an integer >= 1")
    if isinstance(family, LayeredTree):
        return _sweep_tree(family, sample, int(n_max))
    if isinstance(family, WeightedGraph):
        return _sweep_graph(family, sample, int(n_max))
    raise ValidationError(f"cannot sweep {type(family).__name__}")


@dataclass
class RecurrenceDiagnostic:
    """``sums[x][m] = sum_{k<=m} p_k(x, x)`` and the resistance comparison.

    ``strictly_increasing`` is checked along even ``m``: on bipartite graphs
    odd return probabilities vanish, so the sums stall at every odd step.
    """

    n: int
    sums: dict
    infimum: list
    rho: dict
    inequality_holds: bool
    nondecreasing: bool
    strictly_increasing: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "infimum": self.infimum,
            "inequality_holds": self.inequality_holds,
            "nondecreasing": self.nondecreasing,
            "strictly_increasing": self.strictly_increasing,
            "sums": {str(k): v for k, v in self.sums.items()},
            "rho": {str(k): {str(m): r for m, r in v.items()} for k, v in self.rho.items()},
        }


def recurrence_diagnostic(g: WeightedGraph, sample, n: int, *, rho_radii=None) -> RecurrenceDiagnostic:
    """Heat-kernel partial sums up to ``n`` and the check ``rho(x, m) >= sum_{k<m} p_k(x, x)``.

    ``rho_radii`` restricts the radii ``m`` where the resistance is computed
    (default: every ``m = 1..n``).
    """
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ValidationError("n must be a non-negative integer")
    sample = [g.check_vertex(x) for x in sample]
    if not sample:
        raise ValidationError("sample is empty")
    radii = list(range(1, n + 1)) if rho_radii is None else sorted(set(int(m) for m in rho_radii))
    if any(m < 1 or m > n for m in radii):
        raise ValidationError("resistance radii must lie in 1..n")
    sums, rho = {}, {}
    holds = True
    for x in sample:
        g.require_interior(x, n + 1)
        mu = float(g.vertex_weights[x])
        PT = g.transition.T.tocsr()
        m = np.zeros(g.vertex_count)
        m[x] = 1.0
        diag = [1.0 / mu]
        for _ in range(n):
            m = PT @ m
            diag.append(m[x] / mu)
        partial = np.cumsum(diag)
        sums[x] = [float(v) for v in partial]
        rho[x] = {}
        for r in radii:
            try:
                value = rho_n(g, x, r)
            except BallCoversGraph:
                continue
            rho[x][r] = value
            holds &= value >= partial[r - 1] - 1e-12
    infimum = [float(min(sums[x][k] for x in sample)) for k in range(n + 1)]
    monotone = all(b >= a for s in sums.values() for a, b in zip(s, s[1:]))
    even = [s[::2] for s in sums.values()]
    strict = all(b > a for s in even for a, b in zip(s, s[1:]))
    return RecurrenceDiagnostic(int(n), sums, infimum, rho, bool(holds), monotone, strict)


@dataclass
class DecayFit:
    """``sup_x p_k(x, x) ~ C k^(-alpha/2)`` fitted on a log-log scale."""

    ks: list
    values: list
    alpha: float
    C: float
    slope: float
    stderr: float
    residuals: list

    def to_dict(self) -> dict:
        return asdict(self)


def fit_decay_exponent(ks, values) -> DecayFit:
    ks = np.asarray(ks, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = (ks > 0) & (v > 0)
    if ok.sum() < 3 or np.ptp(ks[ok]) == 0:
        raise InsufficientGrid(f"need at least 3 positive points, have {int(ok.sum())}")
    lx, ly = np.log(ks[ok]), np.log(v[ok])
    fit = stats.linregress(lx, ly)
    resid = ly - (fit.intercept + fit.slope * lx)
    return DecayFit(
        ks=[float(k) for k in ks[ok]], values=[float(y) for y in v[ok]], alpha=float(-2 * fit.slope),
        C=float(np.exp(fit.intercept)), slope=float(fit.slope),
        stderr=float(fit.stderr) if np.isfinite(fit.stderr) else 0.0, residuals=[float(r) for r in resid],
    )


def uc_alpha_fit(g: WeightedGraph, sample, k_max: int, k_min: int = 2) -> DecayFit:
    """Fit ``alpha`` from ``sup_x p_k(x, x)`` over even ``k`` in ``[k_min, k_max]``."""
    sample = [g.check_vertex(x) for x in sample]
    if not sample:
        raise ValidationError("sample is empty")
    ks = [k for k in range(max(2, k_min), k_max + 1) if k % 2 == 0]
    if len(ks) < 3:
        raise InsufficientGrid("need at least 3 even values of k")
    best = np.zeros(len(ks))
    for x in sample:
        g.require_interior(x, k_max + 1)
        mu = float(g.vertex_weights[x])
        PT = g.transition.T.tocsr()
        m = np.zeros(g.vertex_count)
        m[x] = 1.0
        diag = {}
        for k in range(1, k_max + 1):
            m = PT @ m
            diag[k] = m[x] / mu
        best = np.maximum(best, [diag[k] for k in ks])
    return fit_decay_exponent(ks, best)
