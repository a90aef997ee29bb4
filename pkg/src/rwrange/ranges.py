"""Laws of the range ``R_n``: exact means, Monte Carlo reports and the
fluctuation search on alternating trees.

Confidence intervals for the mean of ``R_n/n`` are Wilson score intervals
at 99%, computed with the effective sample size ``trials * m(1-m) / s^2``
(``m`` the sample mean, ``s^2`` the sample variance).  For 0/1 outcomes
this is the textbook Wilson interval; for the continuous ratio ``R_n/n``
it matches the interval's width to the observed spread while keeping the
interval inside ``[0, 1]``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .builders import AlternatingTreeSpec, LayeredTree
from .errors import (
    BudgetExceeded,
    DegreeTooSmall,
    InsufficientGrid,
    InvalidInterval,
    NoReturnMass,
    NotLayered,
    ValidationError,
)
from .graph import WeightedGraph
from .resistance import EscapeInterval, _check_contraction, escape_probability
from .walk import evolve_distribution, radial_chain, return_tail, simulate_trials

__all__ = [
    "Z99",
    "g_const",
    "wilson_interval",
    "LastExitTable",
    "RangeReport",
    "expected_range_exact",
    "expected_range_mc",
    "weak_law_experiment",
    "bridge_experiment",
    "TailFit",
    "fit_tail_exponent",
    "tail_exponent_fit",
    "FBounds",
    "f_bounds",
    "StageRecord",
    "FluctuationReport",
    "fluctuation_search",
]

Z99 = float(stats.norm.ppf(0.995))
EXACT_BUDGET = 10**9
BRIDGE_STEP_BUDGET = 10**7
BRIDGE_EXACT_BELOW = 13


def g_const(N: int) -> Fraction:
    """Escape probability ``(N-2)/(N-1)`` of the ``N``-regular tree."""
    if not isinstance(N, (int, np.integer)) or N < 3:
        raise DegreeTooSmall(f"N must be an integer >= 3, got {N!r}")
    return Fraction(int(N) - 2, int(N) - 1)


def wilson_interval(p: float, n: float, z: float = Z99) -> tuple[float, float]:
    """Wilson score interval for proportion ``p`` with sample size ``n``."""
    if n <= 0:
        raise ValidationError("sample size must be positive")
    p = min(max(p, 0.0), 1.0)
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return max(0.0, centre - half), min(1.0, centre + half)


def _mean_interval(values: np.ndarray) -> tuple[float, float, float, float]:
    m = float(values.mean())
    var = float(values.var(ddof=1)) if len(values) > 1 else 0.0
    n_eff = len(values) * m * (1 - m) / var if var > 0 else float(len(values))
    lo, hi = wilson_interval(m, max(n_eff, 1.0))
    return m, var, lo, hi


# ---------------------------------------------------------------------------
# exact mean via last exits


@dataclass
class LastExitTable:
    """``E_x[R_n] = 1 + sum_i terms[i]`` with ``terms[i] = sum_y P(S_i=y) P_y(T_y^+ > n-1-i)``."""

    base: int
    n: int
    terms: np.ndarray

    @property
    def expected_range(self) -> float:
        return 1.0 + float(self.terms.sum())

    def to_dict(self) -> dict:
        return {"base": self.base, "n": self.n, "expected_range": self.expected_range,
                "terms": [float(t) for t in self.terms]}


def expected_range_exact(g: WeightedGraph, x, n: int) -> LastExitTable:
    """Exact ``E_x[R_n]`` from mass vectors and per-vertex return tails."""
    if not isinstance(g, WeightedGraph):
        raise ValidationError("exact expected range needs an explicit graph")
    x = g.check_vertex(x)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"n must be an integer >= 1, got {n!r}")
    n = int(n)
    if n == 1:
        return LastExitTable(x, 1, np.zeros(0))
    g.require_interior(x, n - 1, what=f"{n}-step range")
    dist = g.distances_from(x, limit=n - 2)
    support = sorted(dist)
    work = len(support) * n * (len(g.indices) + g.vertex_count)
    if work > EXACT_BUDGET:
        raise BudgetExceeded(f"exact range needs ~{work:.1e} operations, over {EXACT_BUDGET:.0e}")
    # y is first reachable at time d(x, y), so its tail is needed up to n-1-d
    tails = {y: return_tail(g, y, n - 1 - dist[y]).tails for y in support}
    terms = np.zeros(n - 1)
    for i in range(n - 1):
        mass = evolve_distribution(g, x, i).mass
        m = n - 1 - i
        terms[i] = sum(mass[y] * tails[y][m] for y in support if mass[y] > 0 and dist[y] <= i)
    return LastExitTable(x, n, terms)


# ---------------------------------------------------------------------------
# Monte Carlo reports


@dataclass
class RangeReport:
    """Aggregate statistics of ``R_n/n`` over independent trials."""

    n: int
    trials: int
    seed: int
    mean: float
    variance: float
    ci_lo: float
    ci_hi: float
    upper_tails: dict = field(default_factory=dict)
    lower_tails: dict = field(default_factory=dict)
    histogram: dict = field(default_factory=dict)
    accepted: int | None = None
    attempted: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def ci_width(self) -> float:
        return self.ci_hi - self.ci_lo

    def to_dict(self) -> dict:
        d = asdict(self)
        d["upper_tails"] = {repr(float(k)): v for k, v in sorted(self.upper_tails.items())}
        d["lower_tails"] = {repr(float(k)): v for k, v in sorted(self.lower_tails.items())}
        d["histogram"] = {str(k): v for k, v in sorted(self.histogram.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "trials", "mean", "ci_lo", "ci_hi", "kind", "threshold", "frequency"])
        base = [self.n, self.trials, repr(self.mean), repr(self.ci_lo), repr(self.ci_hi)]
        rows = [("upper", k, v) for k, v in sorted(self.upper_tails.items())]
        rows += [("lower", k, v) for k, v in sorted(self.lower_tails.items())]
        if not rows:
            w.writerow(base + ["", "", ""])
        for kind, k, v in rows:
            w.writerow(base + [kind, repr(float(k)), repr(float(v))])
        return buf.getvalue()


def _report(ranges, n, seed, upper=(), lower=(), **kw) -> RangeReport:
    if len(ranges) == 0:
        raise ValidationError("no trials to aggregate")
    if ranges.min() < 1 or ranges.max() > n:
        raise ValidationError("range outside [1, n]; kernel invariant broken")
    ratio = ranges / n
    mean, var, lo, hi = _mean_interval(ratio)
    ups = {float(t): float(np.mean(ranges >= n * t)) for t in upper}
    lows = {float(t): float(np.mean(ranges <= n * t)) for t in lower}
    return RangeReport(n, len(ranges), int(seed), mean, var, lo, hi, ups, lows, **kw)


def expected_range_mc(obj, x, n: int, trials: int, seed: int, *, jobs: int = 1,
                      thresholds=(), budget_mb=None) -> RangeReport:
    """Mean of ``R_n/n`` with a 99% Wilson interval; upper-tail frequencies for ``thresholds``."""
    if not isinstance(trials, (int, np.integer)) or trials < 100:
        raise ValidationError(f"at least 100 trials are required, got {trials!r}")
    batch = simulate_trials(obj, x, n, trials, seed, jobs=jobs, budget_mb=budget_mb)
    return _report(batch.ranges[:, 0], int(n), seed, upper=thresholds)


def _check_band(band):
    try:
        lo, hi = (float(v) for v in band)
    except (TypeError, ValueError):
        raise InvalidInterval(f"density band must be a pair of numbers, got {band!r}") from None
    if not 0.0 <= lo <= hi <= 1.0:
        raise InvalidInterval(f"density band [{lo}, {hi}] is not a subinterval of [0, 1]")
    return lo, hi


def weak_law_experiment(obj, x, n: int, epsilon: float, trials: int, f1f2, seed: int = 0,
                        *, jobs: int = 1) -> RangeReport:
    """Frequencies of ``R_n >= n(hi + eps)`` and ``R_n <= n(lo - eps)``.

    ``f1f2`` is the density band ``[1 - F_2, 1 - F_1]``.
    """
    lo, hi = _check_band(f1f2)
    if not epsilon > 0:
        raise InvalidInterval("epsilon must be positive")
    if not isinstance(trials, (int, np.integer)) or trials < 100:
        raise ValidationError(f"at least 100 trials are required, got {trials!r}")
    r = simulate_trials(obj, x, n, trials, seed, jobs=jobs).ranges[:, 0]
    out = _report(r, int(n), seed, upper=(hi + epsilon,), lower=(lo - epsilon,))
    out.extra = {"band": [lo, hi], "epsilon": float(epsilon)}
    return out


def bridge_experiment(g, x, n: int, epsilon: float, trials: int, seed: int = 0, *,
                      density: float = 0.0, step_budget: int = BRIDGE_STEP_BUDGET,
                      jobs: int = 1) -> RangeReport:
    """Range law conditioned on ``S_n = x`` by rejection sampling.

    Reports the conditional frequency of ``R_n >= n(density + epsilon)``,
    where ``density`` is ``1 - F_1`` (0 for recurrent graphs), and the
    conditional histogram of ``R_n``.  For ``n`` below 13 on explicit graphs
    small enough for enumeration, the exact conditional law is attached
    under ``extra["exact"]``.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError("n must be an integer >= 1")
    n = int(n)
    if isinstance(g, WeightedGraph):
        x = g.check_vertex(x)
        if g.artificial.any():
            g.require_interior(x, n, what=f"{n}-step bridge")
        if evolve_distribution(g, x, n)[x] <= 0:
            raise NoReturnMass(f"P_{x}(S_{n} = {x}) = 0 (parity)")
    elif isinstance(g, LayeredTree):
        x = tuple(x)
        if n % 2:
            raise NoReturnMass("trees are bipartite: no return after an odd number of steps")
    else:
        raise ValidationError(f"bridge experiments are not supported on {type(g).__name__}")
    threshold = float(density) + float(epsilon)
    kept: list[np.ndarray] = []
    accepted = attempted = 0
    batch_size = max(trials, 1000)
    while accepted < trials and attempted * n < step_budget:
        size = int(min(batch_size, max(1, (step_budget - attempted * n) // n)))
        b = simulate_trials(g, x, n, size, seed, jobs=jobs, first_trial=attempted)
        attempted += size
        hit = b.ranges[b.returned[:, 0], 0]
        take = hit[: trials - accepted]
        kept.append(take)
        accepted += len(take)
    if accepted == 0:
        raise NoReturnMass(f"no bridge accepted within {step_budget} steps")
    r = np.concatenate(kept)
    hist = {int(v): int(c) for v, c in zip(*np.unique(r, return_counts=True))}
    rep = _report(r, n, seed, upper=(threshold,), histogram=hist, accepted=accepted, attempted=attempted)
    rep.extra = {"epsilon": float(epsilon), "density": float(density), "budget_hit": accepted < trials}
    if isinstance(g, WeightedGraph) and n < BRIDGE_EXACT_BELOW:
        from .oracle import enumerate_range_law

        try:
            law = enumerate_range_law(g, x, n)
        except BudgetExceeded:
            law = None
        if law is not None:
            cond = law.conditional_range_law(x)
            rep.extra["exact"] = {str(k): float(v) for k, v in cond.items()}
            rep.extra["exact_upper_tail"] = float(sum(p for k, p in cond.items() if k >= n * threshold))
    return rep


# ---------------------------------------------------------------------------
# return-tail exponents


@dataclass
class TailFit:
    """Power-law fit ``tail(M) ~ M^slope``; ``delta = -slope - 1``."""

    grid: list
    tails: list
    slope: float
    intercept: float
    stderr: float
    delta: float
    delta_lo: float
    positive: bool
    residuals: list

    def to_dict(self) -> dict:
        return asdict(self)


def fit_tail_exponent(grid, tails, confidence: float = 0.95) -> TailFit:
    """Least-squares fit of ``log tail`` on ``log M`` over positive entries."""
    M = np.asarray(grid, dtype=float)
    t = np.asarray(tails, dtype=float)
    ok = (t > 0) & (M > 0)
    if ok.sum() < 3:
        raise InsufficientGrid(f"need at least 3 grid points with positive tail, have {int(ok.sum())}")
    lx, ly = np.log(M[ok]), np.log(t[ok])
    if np.ptp(lx) == 0:
        raise InsufficientGrid("grid has a single distinct value")
    fit = stats.linregress(lx, ly)
    slope = float(fit.slope)
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    q = float(stats.t.ppf(0.5 + confidence / 2, max(1, ok.sum() - 2)))
    delta = -slope - 1.0
    resid = ly - (fit.intercept + slope * lx)
    return TailFit(
        grid=[float(v) for v in M[ok]], tails=[float(v) for v in t[ok]], slope=slope,
        intercept=float(fit.intercept), stderr=stderr, delta=delta, delta_lo=delta - q * stderr,
        positive=bool(delta - q * stderr > 0), residuals=[float(v) for v in resid],
    )


def _finite_tails(obj, x, grid, trials, seed):
    """``P_x(M < T_x^+ < inf)`` for ``M`` in ``grid`` (exact where possible)."""
    m_max = int(max(grid))
    if isinstance(obj, WeightedGraph):
        tails = return_tail(obj, x, m_max).tails
        esc = 0.0
        if obj.artificial.any():
            raise ValidationError("finite return tails need an untruncated graph")
        return np.array([tails[m] - esc for m in grid])
    if not isinstance(obj, LayeredTree):
        raise NotLayered("implicit return tails need a LayeredTree")
    esc = escape_probability(obj, x).mid
    if tuple(x) == ():
        tails = radial_chain(obj).return_tail(m_max)
        return np.array([max(tails[m] - esc, 0.0) for m in grid])
    b = simulate_trials(obj, x, m_max, trials, seed)
    first = b.first_return
    return np.array([max(float(np.mean((first == 0) | (first > m))) - esc, 0.0) for m in grid])


def tail_exponent_fit(obj, sample, grid, *, trials: int = 100_000, seed: int = 0) -> TailFit:
    """Fit the decay of ``sup_x P_x(M < T_x^+ < inf)`` over ``x`` in ``sample``.

    Explicit graphs are treated as finite (recurrent) graphs, so the finite
    tail equals ``P_x(T_x^+ > M)``.  On layered trees the root uses the exact
    radial chain; other vertices use Monte Carlo estimates.
    """
    grid = sorted(set(int(m) for m in grid))
    if len(grid) < 3 or grid[0] < 1:
        raise InsufficientGrid("grid needs at least 3 distinct values >= 1")
    sample = list(sample)
    if not sample:
        raise ValidationError("sample is empty")
    sup = np.max([_finite_tails(obj, x, grid, trials, seed) for x in sample], axis=0)
    return fit_tail_exponent(grid, sup)


# ---------------------------------------------------------------------------
# density band from certified escape intervals


@dataclass
class FBounds:
    """Range of certified escape intervals over a sample: ``[1 - F_2, 1 - F_1]`` estimate."""

    lo: float
    hi: float
    intervals: dict
    band: tuple | None
    contained: bool | None

    def to_dict(self) -> dict:
        return {
            "lo": self.lo, "hi": self.hi, "band": self.band, "contained": self.contained,
            "intervals": {str(k): [v.lo, v.hi] for k, v in self.intervals.items()},
        }


def f_bounds(tree: LayeredTree, sample, *, tol: float = 1e-12) -> FBounds:
    """Min and max of certified escape intervals over ``sample``.

    When the tree has two degrees ``N1 < N2`` the result is also checked
    against ``[g_{N1}, g_{N2}]`` (``contained``).
    """
    if not isinstance(tree, LayeredTree):
        raise NotLayered("f_bounds needs a LayeredTree")
    n1, n2 = _check_contraction(tree)
    sample = [tuple(a) for a in sample]
    if not sample:
        raise ValidationError("sample is empty")
    cache: dict[int, EscapeInterval] = {}
    intervals = {}
    for a in sample:
        tree.type_chain(a)
        d = len(a)
        if d not in cache:
            cache[d] = escape_probability(tree, a, tol=tol)
        intervals[a] = cache[d]
    lo = min(v.lo for v in intervals.values())
    hi = max(v.hi for v in intervals.values())
    band = (float(g_const(n1)), float(g_const(n2)))
    contained = band[0] - 1e-6 <= lo and hi <= band[1] + 1e-6
    return FBounds(lo, hi, intervals, band, contained)


# ---------------------------------------------------------------------------
# fluctuation search


@dataclass
class StageRecord:
    stage: int
    k: int
    estimate: float
    ci_lo: float
    ci_hi: float
    target: float
    side: str
    passed: bool
    tried: list = field(default_factory=list)


@dataclass
class FluctuationReport:
    n1: int
    n2: int
    k1: int
    trials: int
    seed: int
    stages: list
    radii: list
    complete: bool
    k_max: int

    def to_dict(self) -> dict:
        return {
            "n1": self.n1, "n2": self.n2, "k1": self.k1, "trials": self.trials, "seed": self.seed,
            "radii": list(self.radii), "complete": self.complete, "k_max": self.k_max,
            "g_n1": float(g_const(self.n1)), "g_n2": float(g_const(self.n2)),
            "stages": [asdict(s) for s in self.stages],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "k", "estimate", "ci_lo", "ci_hi", "target"])
        for s in self.stages:
            w.writerow([s.stage, s.k, repr(s.estimate), repr(s.ci_lo), repr(s.ci_hi), repr(s.target)])
        return buf.getvalue()

    @property
    def spec(self) -> AlternatingTreeSpec:
        return AlternatingTreeSpec(self.n1, self.n2, tuple(self.radii))


def _slacks(slack, stages):
    vals = [float(slack)] * stages if np.isscalar(slack) else [float(s) for s in slack]
    if len(vals) < stages:
        raise ValidationError(f"slack schedule has {len(vals)} entries for {stages} stages")
    vals = vals[:stages]
    if any(v <= 0 for v in vals) or any(b > a for a, b in zip(vals, vals[1:])):
        raise ValidationError("slack schedule must be positive and nonincreasing")
    return vals


def fluctuation_search(n1: int, n2: int, k1: int, stages: int, slack=0.05, trials: int = 2000,
                       seed: int = 0, *, k_max: int = 100_000, jobs: int = 1):
    """Build radii ``k_2, k_3, ...`` making ``E_o[R_k]/k`` alternate between bands.

    Stage ``i`` (``i = 2 .. stages+1``) walks on the tree with the current
    radii, whose outermost band extends to infinity, and tries
    ``k = 2 k_{i-1} + 1, 2k, 4k, ...`` until the 99% interval for
    ``E_o[R_k]/k`` lies above ``g_{N2} - slack`` (even ``i``) or below
    ``g_{N1} + slack`` (odd ``i``).  The accepted ``k`` is appended to the
    radii.  Returns ``(report, spec)``; raises :class:`BudgetExceeded`
    (carrying the partial report) when a candidate would exceed ``k_max``.
    """
    AlternatingTreeSpec(n1, n2, (k1,))
    if not isinstance(stages, (int, np.integer)) or stages < 1:
        raise ValidationError("stages must be a positive integer")
    slacks = _slacks(slack, int(stages))
    if not isinstance(trials, (int, np.integer)) or trials < 100:
        raise ValidationError("at least 100 trials per stage are required")
    lo_g, hi_g = float(g_const(n1)), float(g_const(n2))
    radii = [int(k1)]
    records: list[StageRecord] = []

    def report(complete):
        return FluctuationReport(n1, n2, int(k1), int(trials), int(seed), records, list(radii), complete, k_max)

    for j, s in enumerate(slacks):
        i = j + 2
        upper_side = i % 2 == 0
        side = "lower" if upper_side else "upper"
        target = hi_g - s if upper_side else lo_g + s
        tree = AlternatingTreeSpec(n1, n2, tuple(radii)).tree()
        k = 2 * radii[-1] + 1
        tried = []
        while True:
            if k > k_max:
                last = tried[-1] if tried else (k, math.nan, math.nan, math.nan)
                records.append(StageRecord(i, *last, target, side, False, tried))
                raise BudgetExceeded(f"stage {i} did not clear {target:.4f} with k <= {k_max}", partial=report(False))
            rep = expected_range_mc(tree, (), k, trials, seed + i, jobs=jobs)
            tried.append((k, rep.mean, rep.ci_lo, rep.ci_hi))
            ok = rep.ci_lo >= target if upper_side else rep.ci_hi <= target
            if ok:
                records.append(StageRecord(i, k, rep.mean, rep.ci_lo, rep.ci_hi, target, side, True, tried))
                radii.append(k)
                break
            k *= 2
    rep = report(True)
    return rep, rep.spec
