"""Undirected graphs in CSR form, generators, and spectral/graph operators.

The central objects are :class:`Graph` (immutable CSR adjacency),
:class:`ComponentStructure` (connected components and their sizes), and
:class:`GraphOperators` (degrees, normalized adjacency, Laplacian).

The global mixing operator is the per-component scaled mean: with mixing
coefficients ``alpha`` it maps every row of ``h`` inside component ``r`` to
``alpha[r]`` times the component mean of ``h``.  That equals applying the
rank-k matrix built from the component indicator vectors
``v_r = 1/sqrt(n_r)`` on component ``r``, i.e. the projector onto the
0-eigenspace of the unnormalized Laplacian when ``alpha = 1`` -- which is
exactly what :func:`projector_dense_oracle` computes the slow way, by
eigendecomposition, so the two routes can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import JACOBI_CAP, sym_eig
from .rng import Rng

UNREACHABLE = -1

GRAPH_FAMILIES = (
    "barbell",
    "path",
    "cycle",
    "erdos_renyi",
    "barabasi_albert",
    "caterpillar",
)


@dataclass(frozen=True)
class Graph:
    """Immutable unweighted undirected graph, adjacency stored as CSR."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def m(self) -> int:
        """Number of undirected edges (half the stored arcs)."""
        return int(self.indices.size) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr).astype(np.float64)

    def edges(self):
        """Yield each undirected edge once, as (u, v) with u < v."""
        for u in range(self.n):
            for v in self.neighbors(u):
                if u < v:
                    yield int(u), int(v)

    def adjacency_csr(self) -> sp.csr_array:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_array((data, self.indices.copy(), self.indptr.copy()),
                            shape=(self.n, self.n))

    def adjacency_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for u in range(self.n):
            a[u, self.neighbors(u)] = 1.0
        return a


def from_edge_list(n: int, pairs) -> Graph:
    """Build a graph from (u, v) pairs; symmetrizes and deduplicates.

    Raises ``ValueError`` on an out-of-range endpoint or a self-loop,
    naming the offending pair.
    """
    if n < 0:
        raise ValueError(f"node count must be nonnegative, got {n}")
    seen = set()
    for u, v in pairs:
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise ValueError(f"self-loop ({u}, {v}) not allowed")
        seen.add((min(u, v), max(u, v)))

    adj = [[] for _ in range(n)]
    for u, v in seen:
        adj[u].append(v)
        adj[v].append(u)
    indptr = np.zeros(n + 1, dtype=np.int64)
    chunks = []
    for u in range(n):
        nbrs = np.sort(np.asarray(adj[u], dtype=np.int64))
        chunks.append(nbrs)
        indptr[u + 1] = indptr[u] + nbrs.size
    indices = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    return Graph(n=n, indptr=indptr, indices=indices)


@dataclass(frozen=True)
class ComponentStructure:
    """Connected components: per-node labels, sizes, and count."""

    component_of: np.ndarray
    sizes: np.ndarray
    k: int

    def nodes_of(self, r: int) -> np.ndarray:
        return np.nonzero(self.component_of == r)[0]


def connected_components(g: Graph) -> ComponentStructure:
    """Label components by BFS; indices ordered by smallest contained node."""
    comp = np.full(g.n, -1, dtype=np.int64)
    sizes = []
    k = 0
    for start in range(g.n):
        if comp[start] >= 0:
            continue
        comp[start] = k
        queue = [start]
        size = 0
        while queue:
            u = queue.pop()
            size += 1
            for v in g.neighbors(u):
                if comp[v] < 0:
                    comp[v] = k
                    queue.append(int(v))
        sizes.append(size)
        k += 1
    return ComponentStructure(component_of=comp,
                              sizes=np.asarray(sizes, dtype=np.int64), k=k)


@dataclass(frozen=True)
class GraphOperators:
    """Degree vector, normalized adjacency, and a Laplacian (CSR)."""

    degrees: np.ndarray
    norm_adj: sp.csr_array
    laplacian: sp.csr_array
    normalized: bool
    self_loops: bool = False


def operators(g: Graph, normalized: bool = False, self_loops: bool = False) -> GraphOperators:
    """Build degrees, ``A_hat = D^-1/2 A D^-1/2``, and ``L`` or ``L_hat``.

    Isolated nodes yield zero rows in ``A_hat``.  ``self_loops=True`` adds
    the identity to the adjacency before normalizing (used only by the GCN
    baseline); the Laplacian is always built from the loop-free graph.
    """
    adj = g.adjacency_csr()
    deg = g.degrees()
    if self_loops:
        adj_n = adj + sp.eye_array(g.n, format="csr")
        deg_n = deg + 1.0
    else:
        adj_n = adj
        deg_n = deg
    inv_sqrt = np.zeros(g.n)
    nz = deg_n > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg_n[nz])
    d_half = sp.dia_array((inv_sqrt[None, :], [0]), shape=(g.n, g.n)).tocsr()
    norm_adj = (d_half @ adj_n @ d_half).tocsr()
    norm_adj.sort_indices()

    if normalized:
        lap = (sp.eye_array(g.n, format="csr") - norm_adj).tocsr()
    else:
        d_full = sp.dia_array((deg[None, :], [0]), shape=(g.n, g.n)).tocsr()
        lap = (d_full - adj).tocsr()
    lap.sort_indices()
    return GraphOperators(degrees=deg, norm_adj=norm_adj, laplacian=lap,
                          normalized=normalized, self_loops=self_loops)


def global_mix_apply(comps: ComponentStructure, alphas, h: np.ndarray) -> np.ndarray:
    """Scaled per-component mean: rows in component r become alpha[r] * mean_r(h).

    Cost is O(n d); no eigendecomposition involved.
    """
    h = np.asarray(h, dtype=np.float64)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    if h.shape[0] != comps.component_of.size:
        raise ValueError(
            f"feature rows ({h.shape[0]}) != node count ({comps.component_of.size})")
    if alphas.size != comps.k:
        raise ValueError(f"got {alphas.size} mixing coefficients for {comps.k} components")
    if comps.k == 1:
        return np.broadcast_to(alphas[0] * h.mean(axis=0), h.shape).copy()
    means = component_means(comps, h)
    return (alphas[:, None] * means)[comps.component_of]


def component_means(comps: ComponentStructure, h: np.ndarray) -> np.ndarray:
    """Per-component column means of h, shape (k, d)."""
    return component_sums(comps, h) / comps.sizes[:, None]


def component_sums(comps: ComponentStructure, h: np.ndarray) -> np.ndarray:
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if comps.k == 1:
        return h.sum(axis=0, keepdims=True)
    sums = np.zeros((comps.k, h.shape[1]))
    np.add.at(sums, comps.component_of, h)
    return sums


def projector_dense_oracle(g: Graph, alphas) -> np.ndarray:
    """Dense mixing operator via eigendecomposition of the unnormalized Laplacian.

    Eigenvalues below 1e-8 in magnitude are treated as zero; each such
    eigenvector is assigned to the component carrying its largest entry and
    weighted by that component's coefficient.  Slow reference route for
    :func:`global_mix_apply`; capped at the Jacobi solver size.
    """
    if g.n > JACOBI_CAP:
        raise ValueError(f"dense projector oracle capped at n={JACOBI_CAP}, got {g.n}")
    comps = connected_components(g)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    if alphas.size != comps.k:
        raise ValueError(f"got {alphas.size} mixing coefficients for {comps.k} components")
    lap = operators(g, normalized=False).laplacian.toarray()
    w, v = sym_eig(lap)
    p = np.zeros((g.n, g.n))
    for j in range(g.n):
        if abs(w[j]) < 1e-8:
            vec = v[:, j]
            r = comps.component_of[int(np.argmax(np.abs(vec)))]
            p += alphas[r] * np.outer(vec, vec)
    return p


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Hop counts from source; UNREACHABLE (-1) marks other components."""
    if not (0 <= source < g.n):
        raise ValueError(f"source {source} out of range for n={g.n}")
    dist = np.full(g.n, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for v in g.neighbors(u):
                if dist[v] < 0:
                    dist[v] = d
                    nxt.append(int(v))
        frontier = nxt
    return dist


def all_pairs_distances(g: Graph) -> np.ndarray:
    return np.stack([bfs_distances(g, s) for s in range(g.n)])


def eccentricities(g: Graph) -> np.ndarray:
    dist = all_pairs_distances(g)
    if np.any(dist < 0):
        raise ValueError("eccentricity requires a connected graph")
    return dist.max(axis=1)


def diameter(g: Graph) -> int:
    return int(eccentricities(g).max())


def graph_property(g: Graph, which: str, source: int = 0):
    """Dispatch for the regression targets: diameter, eccentricity, sssp."""
    if which == "diameter":
        return diameter(g)
    if which == "eccentricity":
        return eccentricities(g)
    if which == "sssp":
        return bfs_distances(g, source)
    raise ValueError(f"unknown graph property {which!r}")


# ---------------------------------------------------------------------------
# generators


def barbell_graph(m: int, p: int) -> Graph:
    """Two m-cliques joined by a p-node path; N = 2m + p.

    One attachment node per clique connects to the path ends (node m-1 and
    node m+p); with p=0 the attachment nodes are joined directly.
    """
    if m < 2:
        raise ValueError(f"barbell clique size must be >= 2, got {m}")
    if p < 0:
        raise ValueError(f"barbell path length must be >= 0, got {p}")
    n = 2 * m + p
    pairs = []
    for off in (0, m + p):
        for i in range(m):
            for j in range(i + 1, m):
                pairs.append((off + i, off + j))
    for i in range(p - 1):
        pairs.append((m + i, m + i + 1))
    if p > 0:
        pairs.append((m - 1, m))
        pairs.append((m + p - 1, m + p))
    else:
        pairs.append((m - 1, m))
    return from_edge_list(n, pairs)


def path_graph(n: int) -> Graph:
    if n < 1:
        raise ValueError(f"path needs >= 1 node, got {n}")
    return from_edge_list(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError(f"cycle needs >= 3 nodes, got {n}")
    return from_edge_list(n, [(i, (i + 1) % n) for i in range(n)])


def erdos_renyi_graph(n: int, prob: float, rng: Rng) -> Graph:
    if not (0.0 <= prob <= 1.0):
        raise ValueError(f"edge probability must be in [0, 1], got {prob}")
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.uniform() < prob:
                pairs.append((i, j))
    return from_edge_list(n, pairs)


def barabasi_albert_graph(n: int, attach: int, rng: Rng) -> Graph:
    """Preferential attachment: each new node links to `attach` earlier nodes.

    The first `attach` nodes start isolated; node `attach` connects to all
    of them, later nodes sample targets from the degree-weighted multiset
    (without replacement within one step).
    """
    if attach < 1 or attach >= n:
        raise ValueError(f"attach must satisfy 1 <= attach < n, got attach={attach} n={n}")
    pairs = []
    repeated: list[int] = []
    targets = list(range(attach))
    for v in range(attach, n):
        for t in targets:
            pairs.append((v, t))
        repeated.extend(targets)
        repeated.extend([v] * attach)
        picked: set[int] = set()
        while len(picked) < attach:
            picked.add(repeated[rng.randrange(len(repeated))])
        targets = sorted(picked)
    return from_edge_list(n, pairs)


def caterpillar_graph(spine: int, legs: int) -> Graph:
    """Spine path of `spine` nodes, each carrying `legs` leaf nodes."""
    if spine < 1:
        raise ValueError(f"spine must be >= 1, got {spine}")
    if legs < 0:
        raise ValueError(f"legs must be >= 0, got {legs}")
    n = spine * (1 + legs)
    pairs = [(i, i + 1) for i in range(spine - 1)]
    nxt = spine
    for s in range(spine):
        for _ in range(legs):
            pairs.append((s, nxt))
            nxt += 1
    return from_edge_list(n, pairs)


def generate(kind: str, params: dict, seed: int = 0) -> Graph:
    """Family dispatcher; deterministic for equal (kind, params, seed)."""
    rng = Rng(seed)
    if kind == "barbell":
        return barbell_graph(int(params["m"]), int(params["p"]))
    if kind == "path":
        return path_graph(int(params["n"]))
    if kind == "cycle":
        return cycle_graph(int(params["n"]))
    if kind == "erdos_renyi":
        return erdos_renyi_graph(int(params["n"]), float(params["prob"]), rng)
    if kind == "barabasi_albert":
        return barabasi_albert_graph(int(params["n"]), int(params["attach"]), rng)
    if kind == "caterpillar":
        return caterpillar_graph(int(params["spine"]), int(params["legs"]))
    raise ValueError(f"unknown graph family {kind!r}; choose from {GRAPH_FAMILIES}")


# ---------------------------------------------------------------------------
# edge-list text format: first line "N M", then M lines "u v" with u < v


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.n} {g.m}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


def read_edge_list(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected header 'N M'")
        n, m = int(header[0]), int(header[1])
        pairs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            u, v = line.split()
            pairs.append((int(u), int(v)))
    if len(pairs) != m:
        raise ValueError(f"{path}: header claims {m} edges, found {len(pairs)}")
    return from_edge_list(n, pairs)
