import numpy as np
import pytest

from s3gnn.graphs import (Graph, barbell_graph, caterpillar_graph, cycle_graph,
                          erdos_renyi_graph, from_edge_list, path_graph)
from s3gnn.rng import Rng


def disjoint_union(graphs) -> Graph:
    total = sum(g.n for g in graphs)
    pairs = []
    offset = 0
    for g in graphs:
        pairs.extend((offset + u, offset + v) for u, v in g.edges())
        offset += g.n
    return from_edge_list(total, pairs)


def star_graph(leaves: int) -> Graph:
    return from_edge_list(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def graph_corpus(max_n: int = 12, min_count: int = 200) -> list[Graph]:
    """Small graphs covering paths, cycles, stars, cliques, random graphs,
    graphs with isolated nodes, and multi-component unions."""
    corpus: list[Graph] = []
    for n in range(1, max_n + 1):
        corpus.append(path_graph(n))
        if n >= 3:
            corpus.append(cycle_graph(n))
        if n >= 2:
            corpus.append(star_graph(n - 1))
            corpus.append(from_edge_list(
                n, [(i, j) for i in range(n) for j in range(i + 1, n)]))
        corpus.append(from_edge_list(n, []))  # edgeless
    corpus.append(barbell_graph(3, 1))
    corpus.append(barbell_graph(2, 0))
    corpus.append(barbell_graph(4, 4))
    corpus.append(caterpillar_graph(3, 2))
    corpus.append(caterpillar_graph(4, 1))
    # unions give multi-component graphs, some with isolated nodes
    corpus.append(disjoint_union([path_graph(3), path_graph(2)]))
    corpus.append(disjoint_union([cycle_graph(3), path_graph(1)]))
    corpus.append(disjoint_union([star_graph(3), cycle_graph(4), path_graph(1)]))
    corpus.append(disjoint_union([path_graph(5), from_edge_list(3, [])]))
    rng = Rng(20240501)
    i = 0
    while len(corpus) < min_count:
        n = 2 + rng.randrange(max_n - 1)
        prob = rng.uniform(0.05, 0.6)
        corpus.append(erdos_renyi_graph(n, prob, rng))
        i += 1
    return [g for g in corpus if g.n <= max_n] + [g for g in corpus if g.n > max_n]


def floyd_warshall(g: Graph) -> np.ndarray:
    """Brute-force all-pairs distances; inf marks unreachable pairs."""
    dist = np.full((g.n, g.n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v in g.edges():
        dist[u, v] = dist[v, u] = 1.0
    for k in range(g.n):
        dist = np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :])
    return dist


@pytest.fixture(scope="session")
def corpus():
    return graph_corpus()
