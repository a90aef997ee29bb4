"""Acceptance suite: one PASS/FAIL line per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the
"acceptance criteria" summary section) or ``python3 tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest

from conftest import connected_atlas, random_tree, record
from rwrange import cli
from rwrange.builders import (
    AlternatingTreeSpec,
    lattice_box,
    regular_tree,
    regular_tree_spec,
    sierpinski_gasket,
    vicsek_tree,
)
from rwrange.graph import ball, build_explicit, volume
from rwrange.oracle import enumerate_range_laws
from rwrange.ranges import (
    bridge_experiment,
    expected_range_exact,
    f_bounds,
    fluctuation_search,
    g_const,
    weak_law_experiment,
)
from rwrange.resistance import (
    LayeredConductance,
    branch_conductance,
    certify_rho,
    escape_probability,
    green_killed,
    rho_n,
)
from rwrange.uniformity import fit_decay_exponent, recurrence_diagnostic, uc_alpha_fit
from rwrange.walk import escape_before_exit, expected_exit_time, simulate_trials


def _interior_radii(g, x, cap):
    """Radii ``n <= cap`` whose ball around ``x`` has a non-empty complement."""
    ecc = max(g.distances_from(x).values())
    return list(range(1, min(cap, ecc) + 1))


def _criterion1_graphs():
    trees = [random_tree(int(n), seed, weighted=seed % 2 == 1)
             for seed, n in enumerate(np.random.default_rng(11).integers(20, 201, size=25))]
    others = [
        lattice_box(2, 7), lattice_box(2, 11), lattice_box(2, 15), lattice_box(3, 5), lattice_box(3, 7),
        lattice_box(1, 31), sierpinski_gasket(2), sierpinski_gasket(3), sierpinski_gasket(4), vicsek_tree(2),
    ]
    return trees, others


def test_criterion_1_resistance_identities():
    t0 = time.time()
    trees, others = _criterion1_graphs()
    worst_branch = worst_green = worst_escape = 0.0
    exact_unit = True
    checked = 0
    rng = np.random.default_rng(5)
    for g in trees + others:
        starts = rng.choice(g.vertex_count, size=3, replace=False)
        for x in map(int, starts):
            exact_unit &= rho_n(g, x, 1) == 1.0 / g.vertex_weights[x]
            for n in _interior_radii(g, x, 6):
                rho = rho_n(g, x, n)
                if g.is_tree():
                    worst_branch = max(worst_branch, abs(rho * branch_conductance(g, x, x, n) - 1))
                worst_green = max(worst_green, abs(green_killed(g, ball(g, x, n), x) - rho))
                worst_escape = max(worst_escape, abs(g.vertex_weights[x] * escape_before_exit(g, x, n) * rho - 1))
                checked += 1
    elapsed = time.time() - t0
    ok = max(worst_branch, worst_green, worst_escape) <= 1e-10 and exact_unit and elapsed < 60
    record(1, ok, f"{checked} (x,n) pairs; branch {worst_branch:.1e}, green {worst_green:.1e}, "
                  f"escape {worst_escape:.1e}, rho(x,1)=1/mu exact={exact_unit}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_certificates():
    t0 = time.time()
    tree = AlternatingTreeSpec(4, 8, (3, 7, 15, 31, 63, 127)).tree()
    lc = LayeredConductance(tree)
    lo_i, hi_i = np.inf, -np.inf
    for r in (0, 2, 3, 6, 7, 30, 64, 130):
        vals = lc.evaluated_values(r, 200)
        lo_i, hi_i = min(lo_i, vals.min()), max(hi_i, vals.max())
    in_range = 2 - 1e-12 <= lo_i and hi_i <= 8 + 1e-12
    ref = {r: certify_rho(tree, tree.representative(r), 260, conductance=lc) for r in (0, 5, 40)}
    widths_ok = True
    gaps_ok = True
    for r, enc_ref in ref.items():
        for n in range(1, 201):
            enc = certify_rho(tree, tree.representative(r), n, conductance=lc)
            bound = (8 / 9) ** (n - 1) * 8 / 4
            # hi - lo is a difference of numbers near rho: allow a few ulps of rounding
            widths_ok &= enc.width <= bound + 4 * np.spacing(enc.hi)
            gaps_ok &= enc_ref.hi - enc.lo <= bound + 1e-12
    final = certify_rho(tree, (), 200, conductance=lc).width
    elapsed = time.time() - t0
    ok = in_range and widths_ok and gaps_ok and final <= 1e-9 and elapsed < 60
    record(2, ok, f"I in [{lo_i:.4f}, {hi_i:.4f}]; widths/gaps under (8/9)^(n-1)*2: {widths_ok and gaps_ok}; "
                  f"width(n=200)={final:.2e}; {elapsed:.1f}s")
    assert ok


def test_criterion_3_regular_tree_constants():
    errs = {}
    for N in range(3, 9):
        esc = escape_probability(regular_tree_spec(N), ())
        g = float(g_const(N))
        errs[N] = max(abs(esc.lo - g), abs(esc.hi - g))
    ok = max(errs.values()) <= 1e-9
    record(3, ok, "max |escape - (N-2)/(N-1)| = " + ", ".join(f"T{N}:{e:.1e}" for N, e in errs.items()))
    assert ok


def test_criterion_4_band_containment():
    spec = AlternatingTreeSpec(4, 8, (8, 68, 548))
    tree = spec.tree()
    rng = np.random.default_rng(4)
    depths = np.concatenate([rng.integers(0, 8, 10), rng.integers(8, 68, 15), rng.integers(68, 548, 15),
                             rng.integers(548, 800, 10)])
    sample = []
    for d in depths:
        addr = []
        for r in range(int(d)):
            addr.append(int(rng.integers(tree.children(r))))
        sample.append(tuple(addr))
    bands = {int(np.searchsorted([8, 68, 548], len(a), side="right")) for a in sample}
    fb = f_bounds(tree, sample)
    lo_b, hi_b = 2 / 3 - 1e-6, 6 / 7 + 1e-6
    inside = all(lo_b <= iv.lo and iv.hi <= hi_b for iv in fb.intervals.values())
    ok = len(sample) == 50 and len(bands) >= 3 and inside and fb.contained
    record(4, ok, f"50 vertices over {len(bands)} bands; escape range [{fb.lo:.6f}, {fb.hi:.6f}] "
                  f"inside [2/3, 6/7] +- 1e-6: {inside}")
    assert ok


def test_criterion_5_weak_laws():
    t0 = time.time()
    rep = weak_law_experiment(regular_tree_spec(3), (), 20_000, 0.05, 2000, (0.5, 0.5), seed=2024)
    up = rep.upper_tails[0.55]
    low = rep.lower_tails[0.45]
    elapsed = time.time() - t0
    ok = up <= 0.01 and low <= 0.01 and elapsed < 120
    record(5, ok, f"T3 n=2e4, 2000 trials: P(R>=0.55n)={up:.4f}, P(R<=0.45n)={low:.4f}, "
                  f"mean R/n={rep.mean:.4f}; {elapsed:.1f}s")
    assert ok


def test_criterion_6_fluctuation():
    t0 = time.time()
    rep, spec = fluctuation_search(4, 8, 8, 4, 0.05, 2000, seed=7, k_max=100_000)
    elapsed = time.time() - t0
    st = rep.stages
    width = [s.ci_hi - s.ci_lo for s in st]
    even = [s for s in st if s.stage % 2 == 0]
    ok = rep.complete and len(st) == 4 and max(s.k for s in st) <= 100_000 and elapsed < 600
    ok &= all(s.estimate >= 0.807 - (s.ci_hi - s.ci_lo) for s in even)
    for a, b in zip(st, st[1:]):
        hi_s, lo_s = (a, b) if a.stage % 2 == 0 else (b, a)
        ok &= lo_s.estimate <= hi_s.estimate - 2 * max(width)
        ok &= abs(a.estimate - b.estimate) >= 0.08
    detail = "; ".join(f"k{s.stage}={s.k}: {s.estimate:.4f}+-{(s.ci_hi - s.ci_lo) / 2:.4f}" for s in st)
    record(6, ok, f"{detail}; {elapsed:.1f}s")
    assert ok


def test_criterion_7_oracle_equivalence():
    worst = 0.0
    pairs = 0
    for g in connected_atlas(5):
        for x in range(g.vertex_count):
            laws = enumerate_range_laws(g, x, 10)
            for n, law in enumerate(laws, 1):
                exact = expected_range_exact(g, x, n).expected_range
                worst = max(worst, abs(exact - float(law.expected_range())))
                pairs += 1
    fixed = {
        "triangle": build_explicit([(0, 1), (1, 2), (0, 2)]),
        "lollipop": build_explicit([(0, 1), (1, 2), (0, 2), (2, 3)]),
        "square": build_explicit([(0, 1), (1, 2), (2, 3), (3, 0)]),
    }
    n = 8
    trials = 1_000_000
    worst_z = 0.0
    for name, g in fixed.items():
        law = enumerate_range_laws(g, 0, n)[-1]
        b = simulate_trials(g, 0, n, trials, seed=17)
        r, y = b.ranges[:, 0], b.final[:, 0]
        for (rv, yv), p in law.law.items():
            p = float(p)
            freq = np.mean((r == rv) & (y == yv))
            worst_z = max(worst_z, abs(freq - p) / np.sqrt(p * (1 - p) / trials))
    worst_bridge = 0.0
    for name, g in fixed.items():
        rep = bridge_experiment(g, 0, n, 0.05, 100_000, seed=23)
        cond = enumerate_range_laws(g, 0, n)[-1].conditional_range_law(0)
        m = rep.accepted
        for rv, p in cond.items():
            p = float(p)
            freq = rep.histogram.get(rv, 0) / m
            if 0 < p < 1:
                worst_bridge = max(worst_bridge, abs(freq - p) / np.sqrt(p * (1 - p) / m))
    ok = worst <= 1e-10 and worst_z <= 4 and worst_bridge <= 4
    record(7, ok, f"{pairs} (graph,x,n) cases, max |exact - oracle| = {worst:.1e}; "
                  f"MC max z = {worst_z:.2f}; bridge max z = {worst_bridge:.2f}")
    assert ok


def test_criterion_8_exit_time_bound():
    graphs = [lattice_box(2, 11), lattice_box(3, 7), lattice_box(1, 21), sierpinski_gasket(3), vicsek_tree(2),
              random_tree(80, 3), random_tree(120, 4, weighted=True), regular_tree(4, 5)[0],
              build_explicit([(i, i + 1) for i in range(4)])]
    worst = -np.inf
    cases = 0
    rng = np.random.default_rng(8)
    for g in graphs:
        starts = [0] if g.artificial.any() else list(map(int, rng.choice(g.vertex_count, 3, replace=False)))
        for x in starts:
            radii = range(1, 5) if g.artificial.any() else _interior_radii(g, x, 8)
            for n in radii:
                e = expected_exit_time(g, x, n)
                bound = rho_n(g, x, n) * volume(g, x, n)
                worst = max(worst, e - bound)
                cases += 1
    ok = worst <= 1e-8
    record(8, ok, f"{cases} (graph,x,n) cases; max E[T_exit] - rho*V = {worst:.3e}")
    assert ok


def test_criterion_9_diagnostics():
    t0 = time.time()
    L = 201
    box = lattice_box(2, L)
    c = (L // 2) * L + L // 2
    d = recurrence_diagnostic(box, [c], 200)
    B3 = lattice_box(3, 41)
    fit = uc_alpha_fit(B3, [20 * 41 * 41 + 20 * 41 + 20], 100, k_min=10)
    ks = np.arange(2, 101, 2)
    synth = fit_decay_exponent(ks, ks ** -2.0)
    elapsed = time.time() - t0
    ok = (d.strictly_increasing and d.nondecreasing and d.inequality_holds and len(d.rho[c]) == 200
          and 2.7 <= fit.alpha <= 3.3 and abs(synth.alpha - 4.0) <= 0.01)
    record(9, ok, f"partial sums increasing (even m) {d.strictly_increasing}, rho >= sums at all 200 radii "
                  f"{d.inequality_holds}; 3-d alpha={fit.alpha:.3f}; synthetic alpha={synth.alpha:.4f}; "
                  f"{elapsed:.1f}s")
    assert ok


CONFIGS = {
    "walk": {"family": "t3", "n": 2000, "trials": 300, "seed": 5},
    "resist": {"family": "alt", "n1": 4, "n2": 8, "radii": "3,7", "n_max": 40},
    "laws": {"family": "t4", "kind": "weak", "n": 1000, "trials": 200, "seed": 9},
    "fluct": {"n1": 4, "n2": 8, "k1": 8, "stages": 2, "trials": 200, "seed": 7},
    "ucheck": {"family": "lattice", "dim": 2, "size": 21, "kind": "recurrence", "n": 20},
    "oracle": {"graph": "triangle", "n": 3},
    "build": {"family": "gasket", "level": 2},
}


def test_criterion_10_determinism(tmp_path, capsys):
    same = {}
    for command, cfg in CONFIGS.items():
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for rep in range(2):
            out = tmp_path / f"{command}-{rep}"
            status = cli.run([command, "--config", str(path), "--out", str(out), "--jobs", str(rep + 1)])
            assert status == 0
            outs.append((out / "report.json").read_bytes())
        same[command] = outs[0] == outs[1]
    capsys.readouterr()
    ok = all(same.values())
    record(10, ok, "byte-identical report.json on rerun: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
