import networkx as nx
import numpy as np
import pytest

from rwrange.graph import build_explicit

ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"ACCEPTANCE {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def random_tree(n, seed, weighted=False):
    """Random labelled tree on ``n`` vertices, optionally with weights in [0.5, 2]."""
    t = nx.random_labeled_tree(n, seed=seed)
    rng = np.random.default_rng(seed)
    edges = [(u, v, float(rng.uniform(0.5, 2.0)) if weighted else 1.0) for u, v in t.edges()]
    return build_explicit(edges, name=f"tree{n}-{seed}")


def connected_atlas(max_vertices=5):
    """All connected simple graphs with 2..max_vertices vertices (up to isomorphism)."""
    out = []
    for G in nx.graph_atlas_g():
        k = G.number_of_nodes()
        if 2 <= k <= max_vertices and nx.is_connected(G):
            out.append(build_explicit([(u, v) for u, v in G.edges()], name=f"atlas{len(out)}"))
    return out


@pytest.fixture
def triangle():
    return build_explicit([(0, 1), (1, 2), (0, 2)], name="triangle")


@pytest.fixture
def edge():
    return build_explicit([(0, 1)], name="edge")


@pytest.fixture
def path5():
    return build_explicit([(i, i + 1) for i in range(4)], name="path5")
