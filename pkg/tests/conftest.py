import numpy as np
import pytest

from pathloc.graph import Graph

# acceptance outcomes, filled by tests/test_acceptance.py: number -> (passed, detail)
ACCEPTANCE = {}


def random_graph(rng, n, p=0.4, connected=False):
    """Erdos-Renyi graph; with ``connected`` a random spanning path is added first."""
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    if connected and n > 1:
        perm = rng.permutation(n)
        edges = np.concatenate([edges, np.stack([perm[:-1], perm[1:]], axis=1)])
    return Graph(n=n, edges=edges)


def hub_community_graph(n_comm=200, size=49, hubs=50, deg=20, hub_deg=100, seed=0):
    """Dense communities that talk to each other only through a few high-degree hubs.

    Hubs are nodes 0..hubs-1 and form a ring among themselves. Each community
    is a ring plus random chords, and each hub links to ``hub_deg`` random
    community nodes.
    """
    rng = np.random.default_rng(seed)
    edges = []
    for c in range(n_comm):
        nodes = hubs + c * size + np.arange(size)
        edges.append(np.stack([nodes, np.roll(nodes, 1)], axis=1))
        k = size * deg // 2
        edges.append(np.stack([rng.choice(nodes, k), rng.choice(nodes, k)], axis=1))
    n = hubs + n_comm * size
    for h in range(hubs):
        tgt = rng.choice(np.arange(hubs, n), size=hub_deg, replace=False)
        edges.append(np.stack([np.full(hub_deg, h), tgt], axis=1))
        edges.append(np.array([[h, (h + 1) % hubs]]))
    return Graph(n=n, edges=np.concatenate(edges))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
