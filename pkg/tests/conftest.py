import itertools

import numpy as np
import pytest

from nbgrowth.config_sampler import MultiGraph
from nbgrowth.degree_model import solve_two_point


def complete_graph(n: int) -> MultiGraph:
    return MultiGraph.from_edges(n, list(itertools.combinations(range(n), 2)))


def cycle_graph(n: int) -> MultiGraph:
    return MultiGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def petersen_graph() -> MultiGraph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return MultiGraph.from_edges(10, outer + spokes + inner)


def complete_bipartite(p: int, q: int) -> MultiGraph:
    return MultiGraph.from_edges(p + q, [(i, p + j) for i in range(p) for j in range(q)])


def from_networkx(G) -> MultiGraph:
    nodes = {v: i for i, v in enumerate(sorted(G.nodes()))}
    return MultiGraph.from_edges(len(nodes), [(nodes[u], nodes[v]) for u, v in G.edges()])


def random_min2_graph(rng: np.random.Generator, n: int) -> MultiGraph:
    """Connected simple graph on n vertices with minimum degree >= 2 (rejection)."""
    import networkx as nx

    while True:
        p = rng.uniform(0.3, 0.8)
        G = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
        if nx.is_connected(G) and min(d for _, d in G.degree()) >= 2:
            return from_networkx(G)


def dense_nb_matrix(g: MultiGraph) -> np.ndarray:
    """Non-backtracking matrix built straight from its entry rule on half-edge pairs.

    Directed edge h runs from vertex_of[h] to vertex_of[partner[h]]; f follows
    h iff f leaves the head of h and f is not the reversal partner[h].
    """
    H = g.n_half_edges
    B = np.zeros((H, H))
    for h in range(H):
        head = g.vertex_of[g.partner[h]]
        for f in range(H):
            if g.vertex_of[f] == head and f != g.partner[h]:
                B[h, f] = 1
    return B


@pytest.fixture
def two_point():
    return solve_two_point(2, 2.0)
