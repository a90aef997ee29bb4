import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwrange.builders import AlternatingTreeSpec, attach_trees, lattice_box, regular_tree, regular_tree_spec
from rwrange.errors import BallCoversGraph, BudgetExceeded, NotLayered, UnknownVertex, ValidationError
from rwrange.graph import build_explicit, vertex_weight, volume
from rwrange.ranges import expected_range_exact
from rwrange.resistance import rho_n
from rwrange.walk import (
    escape_before_exit,
    evolve_distribution,
    expected_exit_time,
    heat_kernel_diag,
    radial_chain,
    return_tail,
    sample_path,
    simulate,
    simulate_trials,
)

from conftest import random_tree


def test_range_one_step(triangle):
    for trial in range(20):
        assert simulate(triangle, 0, 1, seed=3, trial=trial).range == 1
    tree = regular_tree_spec(3)
    assert simulate(tree, (), 1, seed=3).range == 1


def test_single_edge_range(edge):
    batch = simulate_trials(edge, 0, horizons=[1, 2, 3, 50], trials=200, seed=1)
    assert (batch.ranges[:, 0] == 1).all()
    assert (batch.ranges[:, 1:] == 2).all()
    assert (batch.final[:, 1] == 0).all() and (batch.final[:, 2] == 1).all()


def test_next_step_uniform():
    g = lattice_box(2, 5)
    x = 12
    batch = simulate_trials(g, x, 1, trials=100_000, seed=11)
    counts = np.bincount(batch.final[:, 0], minlength=g.vertex_count)
    nbrs = g.neighbors(x)
    assert counts[nbrs].sum() == 100_000
    p = 1 / len(nbrs)
    sd = np.sqrt(100_000 * p * (1 - p))
    assert np.all(np.abs(counts[nbrs] - 100_000 * p) < 3 * sd)


def test_next_step_weighted():
    g = build_explicit([(0, 1, 1.0), (0, 2, 2.0), (0, 3, 5.0)])
    batch = simulate_trials(g, 0, 1, trials=100_000, seed=5)
    counts = np.bincount(batch.final[:, 0], minlength=4)[1:]
    p = np.array([1, 2, 5]) / 8
    sd = np.sqrt(100_000 * p * (1 - p))
    assert np.all(np.abs(counts - 100_000 * p) < 3 * sd)


def test_kernel_matches_stored_path():
    g = lattice_box(2, 7)
    for trial in range(30):
        path = sample_path(g, 24, 40, seed=9, trial=trial)
        assert all(g.weight(int(a), int(b)) > 0 for a, b in zip(path, path[1:]))
        for n in (1, 5, 17, 40):
            r = simulate(g, 24, n, seed=9, trial=trial)
            assert r.range == len(set(path[:n].tolist()))
            assert r.final == path[n]


def test_determinism_and_jobs():
    tree = AlternatingTreeSpec(4, 8, (3,)).tree()
    a = simulate_trials(tree, (), horizons=[10, 100, 1000], trials=64, seed=4, jobs=1)
    b = simulate_trials(tree, (), horizons=[10, 100, 1000], trials=64, seed=4, jobs=3)
    c = simulate_trials(tree, (), horizons=[10, 100, 1000], trials=64, seed=5, jobs=1)
    assert np.array_equal(a.ranges, b.ranges) and np.array_equal(a.final, b.final)
    assert not np.array_equal(a.ranges, c.ranges)


def test_first_trial_offset():
    g = lattice_box(2, 9)
    whole = simulate_trials(g, 40, 30, trials=20, seed=2)
    tail = simulate_trials(g, 40, 30, trials=5, seed=2, first_trial=15)
    assert np.array_equal(whole.ranges[15:], tail.ranges)


def test_tree_walk_distance_and_depth():
    tree = regular_tree_spec(4)
    batch = simulate_trials(tree, (2, 1), horizons=[1, 2, 30], trials=500, seed=8)
    assert (batch.final_distance[:, 0] == 1).all()
    assert set(batch.final[:, 0].tolist()) <= {1, 3}
    assert (batch.final_distance <= np.array([1, 2, 30])).all()
    assert ((batch.final_distance - np.array([1, 2, 30])) % 2 == 0).all()


def test_tree_walk_matches_exact_mean():
    tree = regular_tree_spec(3)
    g, _ = tree.truncate(12)
    exact = expected_range_exact(g, 0, 10).expected_range
    batch = simulate_trials(tree, (), 10, trials=40_000, seed=13)
    r = batch.ranges_at(10)
    assert abs(r.mean() - exact) < 4 * r.std() / np.sqrt(len(r))


def test_attached_tree_walk():
    y = attach_trees(build_explicit([(0, 1), (0, 2), (0, 3)]), 4)
    batch = simulate_trials(y, (), horizons=[5, 500], trials=100, seed=1)
    assert (batch.ranges[:, 1] >= batch.ranges[:, 0]).all()


def test_rejects():
    tree = regular_tree_spec(3)
    with pytest.raises(UnknownVertex):
        simulate(tree, (5,), 10, seed=0)
    with pytest.raises(ValidationError):
        simulate_trials(tree, (), 10, trials=0)
    with pytest.raises(ValidationError):
        simulate_trials(tree, (), 0, trials=1)
    g, _ = regular_tree(3, 4)
    with pytest.raises(BallCoversGraph):
        simulate(g, 0, 10, seed=0)


def test_memory_budget():
    with pytest.raises(BudgetExceeded):
        simulate_trials(regular_tree_spec(3), (), 10**7, trials=1, seed=0, budget_mb=1)


def test_memory_budget_env(monkeypatch):
    monkeypatch.setenv("RWRANGE_BUDGET_MB", "1")
    with pytest.raises(BudgetExceeded):
        simulate_trials(regular_tree_spec(3), (), 10**7, trials=1, seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63), st.lists(st.integers(1, 300), min_size=1, max_size=5, unique=True))
def test_range_bounds_and_monotone(seed, hs):
    tree = AlternatingTreeSpec(4, 8, (2,)).tree()
    hs = sorted(hs)
    batch = simulate_trials(tree, (), horizons=hs, trials=8, seed=seed)
    assert (batch.ranges >= 1).all() and (batch.ranges <= np.array(hs)).all()
    assert (np.diff(batch.ranges, axis=1) >= 0).all()
    again = simulate_trials(tree, (), horizons=hs, trials=8, seed=seed)
    assert np.array_equal(batch.ranges, again.ranges)


def test_trials_csv(tmp_path, triangle):
    batch = simulate_trials(triangle, 0, horizons=[2, 3], trials=3, seed=0)
    batch.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "trial,n,R_n,final_distance" and len(lines) == 7


# exact evolution


def test_evolve_point_mass(triangle):
    d = evolve_distribution(triangle, 1, 0)
    assert d.as_dict() == {1: 1.0}


def test_evolve_single_edge(edge):
    assert evolve_distribution(edge, 0, 2)[0] == 1.0


def test_evolve_path3_exact_and_mc():
    g = build_explicit([(0, 1), (1, 2)])
    assert evolve_distribution(g, 1, 2).as_dict() == {1: 1.0}
    exact = evolve_distribution(g, 0, 2)
    assert exact[0] == pytest.approx(0.5) and exact[2] == pytest.approx(0.5) and exact[1] == 0
    trials = 10**6
    batch = simulate_trials(g, 0, 2, trials=trials, seed=21)
    freq = np.bincount(batch.final[:, 0], minlength=3) / trials
    sd = np.sqrt(0.25 / trials)
    assert abs(freq[0] - 0.5) < 3 * sd and freq[1] == 0


def test_evolve_killed(path5):
    d = evolve_distribution(path5, 2, 3, killed_at={0, 4})
    assert d.total + d.killed == pytest.approx(1)
    assert d[0] == d[4] == 0
    assert d.total == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(0, 10**6), st.integers(0, 12))
def test_mass_conservation(n, seed, k):
    g = random_tree(n, seed, weighted=True)
    d = evolve_distribution(g, 0, k)
    assert d.total == pytest.approx(1)
    dist = g.distances_from(0)
    assert all(dist[y] <= k for y, m in d.as_dict().items() if m > 0)
    leaf = [v for v in range(g.vertex_count) if g.degree(v) == 1 and v != 0]
    dk = evolve_distribution(g, 0, k, killed_at=leaf)
    assert dk.total + dk.killed == pytest.approx(1)


def test_heat_kernel_examples(edge, path5):
    t, _ = regular_tree(4, 6)
    assert heat_kernel_diag(t, 0, 0) == pytest.approx(1 / 4)
    assert heat_kernel_diag(path5, 2, 1) == 0 and heat_kernel_diag(path5, 2, 3) == 0
    assert heat_kernel_diag(edge, 0, 2) == 1.0


def test_heat_kernel_root_matches_truncation():
    tree = AlternatingTreeSpec(4, 8, (3,)).tree()
    g, _ = tree.truncate(7)
    for k in range(0, 8):
        assert heat_kernel_diag(tree, (), k) == pytest.approx(heat_kernel_diag(g, 0, k), abs=1e-14)
    with pytest.raises(NotLayered):
        heat_kernel_diag(tree, (1,), 2)


def test_return_tail_examples(triangle, edge):
    assert return_tail(triangle, 0, 1)[1] == 1
    assert return_tail(edge, 0, 2)[2] == 0
    tail = return_tail(regular_tree_spec(3), (), 400).tails
    assert np.all(np.diff(tail) <= 1e-15)
    assert tail[-1] >= 0.5 and tail[-1] - 0.5 < 1e-6


def test_return_tail_root_matches_truncation():
    tree = regular_tree_spec(4)
    g, _ = tree.truncate(9)
    assert np.allclose(return_tail(tree, (), 8).tails, return_tail(g, 0, 8).tails, atol=1e-14)


def test_finite_tail():
    t = return_tail(regular_tree_spec(3), (), 50).with_escape(0.5, 0.5)
    lo, hi = t.finite_tail(50)
    assert lo == hi and 0 <= lo < 1e-3


def test_escape_before_exit():
    t, _ = regular_tree(4, 3)
    assert escape_before_exit(t, 0, 1) == 1
    assert vertex_weight(t, 0) * escape_before_exit(t, 0, 2) == pytest.approx(3)
    box = lattice_box(2, 9)
    for n in (2, 3, 4):
        lhs = vertex_weight(box, 40) * escape_before_exit(box, 40, n)
        assert lhs == pytest.approx(1 / rho_n(box, 40, n), abs=1e-10)


def test_exit_time(path5):
    t, _ = regular_tree(4, 3)
    assert expected_exit_time(t, 0, 1) == pytest.approx(1)
    assert expected_exit_time(t, 0, 2) == pytest.approx(8 / 3)
    assert expected_exit_time(t, 0, 2) <= rho_n(t, 0, 2) * volume(t, 0, 2)
    assert expected_exit_time(path5, 2, 2) == pytest.approx(4)
    assert expected_exit_time(path5, 2, 2) <= rho_n(path5, 2, 2) * volume(path5, 2, 2)
    with pytest.raises(BallCoversGraph):
        expected_exit_time(build_explicit([(0, 1), (1, 2)]), 1, 2)


def test_radial_chain():
    chain = radial_chain(regular_tree_spec(5))
    assert chain.inward(0) == 0 and chain.outward(0) == 1
    assert all(chain.inward(r) == pytest.approx(1 / 5) for r in range(1, 20))
    alt = radial_chain(AlternatingTreeSpec(4, 8, (3,)).tree())
    assert alt.inward(2) == pytest.approx(1 / 4) and alt.inward(5) == pytest.approx(1 / 8)
    law = alt.distance_law(25)
    assert law.sum() == pytest.approx(1) and law[0::2].sum() == 0
    with pytest.raises(NotLayered):
        radial_chain(attach_trees(build_explicit([(0, 1), (0, 2), (0, 3)]), 4))


def test_radial_parity():
    law = radial_chain(regular_tree_spec(3)).distance_law(11)
    assert np.all(law[0::2] == 0)
