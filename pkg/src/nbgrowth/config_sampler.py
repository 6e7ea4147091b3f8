"""Configuration-model sampling on half-edges, the exploration process, and ball diagnostics.

Half-edges are numbered vertex by vertex: the half-edges of vertex ``v`` are
``offsets[v] .. offsets[v+1]-1`` and half-edge ``h`` has slot ``h - offsets[v]``.
A multigraph is a fixed-point-free involution ``partner`` on half-edges.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .degree_model import DegreeSequence, erdos_gallai_check


class SamplingError(RuntimeError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True, eq=False)
class MultiGraph:
    """Multigraph given by vertex degrees and a perfect matching of half-edges.

    Loops are two half-edges of one vertex matched together; a loop adds 2 to
    the degree.  ``attempts`` counts the configuration-model draws that were
    needed to produce the graph (1 unless it came from rejection sampling).
    """

    degrees: np.ndarray
    partner: np.ndarray
    attempts: int = 1

    def __post_init__(self):
        degrees = np.asarray(self.degrees, dtype=np.int64)
        partner = np.asarray(self.partner, dtype=np.int64)
        degrees.setflags(write=False)
        partner.setflags(write=False)
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "partner", partner)
        n_half = int(degrees.sum())
        if partner.shape != (n_half,):
            raise ValueError(f"partner has shape {partner.shape}, expected ({n_half},)")
        if n_half:
            idx = np.arange(n_half)
            if partner.min() < 0 or partner.max() >= n_half:
                raise ValueError("partner index out of range")
            if np.any(partner[partner] != idx) or np.any(partner == idx):
                raise ValueError("partner is not a fixed-point-free involution")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "MultiGraph":
        """Build from an edge list; a pair ``(u, u)`` is a loop."""
        edges = [(int(u), int(v)) for u, v in edges]
        degrees = np.zeros(n, dtype=np.int64)
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for n = {n}")
            degrees[u] += 1
            degrees[v] += 1
        offsets = np.concatenate([[0], np.cumsum(degrees)])
        fill = offsets[:-1].copy()
        partner = np.empty(int(degrees.sum()), dtype=np.int64)
        for u, v in edges:
            hu = fill[u]
            fill[u] += 1
            hv = fill[v]
            fill[v] += 1
            partner[hu] = hv
            partner[hv] = hu
        return cls(degrees, partner)

    @property
    def n(self) -> int:
        return len(self.degrees)

    @property
    def n_half_edges(self) -> int:
        return len(self.partner)

    @property
    def m(self) -> int:
        return self.n_half_edges // 2

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.degrees)])

    @cached_property
    def vertex_of(self) -> np.ndarray:
        """Vertex owning each half-edge."""
        return np.repeat(np.arange(self.n), self.degrees)

    def half_edges(self, v: int) -> range:
        return range(int(self.offsets[v]), int(self.offsets[v + 1]))

    def edge_array(self) -> np.ndarray:
        """``(m, 2)`` array with one row per edge, ``u <= v``, sorted lexicographically."""
        h = np.arange(self.n_half_edges)
        first = h < self.partner
        u = self.vertex_of[h[first]]
        v = self.vertex_of[self.partner[first]]
        pairs = np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    def edges(self) -> list[tuple[int, int]]:
        return [(int(u), int(v)) for u, v in self.edge_array()]

    def neighbors(self, v: int) -> list[int]:
        """Neighbours with multiplicity (a loop lists ``v`` twice)."""
        return [int(self.vertex_of[self.partner[h]]) for h in self.half_edges(v)]

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric adjacency with multiplicities; a loop contributes 2 on the diagonal."""
        rows = self.vertex_of
        cols = self.vertex_of[self.partner]
        data = np.ones(self.n_half_edges, dtype=np.int64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def connected_components(self) -> list[np.ndarray]:
        """Vertex arrays of the components, largest first (ties by smallest vertex)."""
        if self.n == 0:
            return []
        _, labels = sp.csgraph.connected_components(self.adjacency(), directed=False)
        comps = [np.flatnonzero(labels == c) for c in range(labels.max() + 1)]
        comps.sort(key=lambda c: (-len(c), int(c[0])))
        return comps

    def is_connected(self) -> bool:
        return len(self.connected_components()) <= 1

    def subgraph(self, vertices) -> "MultiGraph":
        """Induced sub-multigraph, vertices relabelled ``0..k-1`` in the given order."""
        vertices = [int(v) for v in vertices]
        index = {v: i for i, v in enumerate(vertices)}
        edges = [(index[u], index[v]) for u, v in self.edges() if u in index and v in index]
        return MultiGraph.from_edges(len(vertices), edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiGraph):
            return NotImplemented
        return np.array_equal(self.degrees, other.degrees) and np.array_equal(self.partner, other.partner)

    def __hash__(self) -> int:
        return hash((self.degrees.tobytes(), self.partner.tobytes()))


def _pair_permutation(perm: np.ndarray) -> np.ndarray:
    """Match consecutive entries of a permutation of half-edges (last axis)."""
    partner = np.empty_like(perm)
    a, b = perm[..., 0::2], perm[..., 1::2]
    if perm.ndim == 1:
        partner[a] = b
        partner[b] = a
    else:
        rows = np.arange(perm.shape[0])[:, None]
        partner[rows, a] = b
        partner[rows, b] = a
    return partner


def random_matching(n_half: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform perfect matching of ``n_half`` half-edges, as a partner array."""
    if n_half % 2:
        raise ValueError(f"odd number of half-edges: {n_half}")
    return _pair_permutation(rng.permutation(n_half))


def random_matchings(n_half: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent uniform matchings, one partner array per row."""
    if n_half % 2:
        raise ValueError(f"odd number of half-edges: {n_half}")
    perms = rng.permuted(np.tile(np.arange(n_half), (size, 1)), axis=1)
    return _pair_permutation(perms)


def _as_degrees(seq) -> np.ndarray:
    if isinstance(seq, DegreeSequence):
        return seq.degree_list()
    return np.asarray(seq, dtype=np.int64)


def sample_matching(seq, seed=None) -> MultiGraph:
    """Configuration-model multigraph: a uniform matching of the half-edges.

    Pairing consecutive entries of a uniform random permutation gives every
    one of the (N-1)!! matchings the same probability.
    """
    degrees = _as_degrees(seq)
    n_half = int(degrees.sum())
    if n_half % 2:
        raise ValueError(f"degree sum {n_half} is odd")
    rng = np.random.default_rng(seed)
    return MultiGraph(degrees, random_matching(n_half, rng))


def is_simple(g: MultiGraph) -> bool:
    """No loops and no parallel edges."""
    if g.m == 0:
        return True
    h = np.arange(g.n_half_edges)
    first = h < g.partner
    u = g.vertex_of[h[first]]
    v = g.vertex_of[g.partner[first]]
    if np.any(u == v):
        return False
    key = np.minimum(u, v) * g.n + np.maximum(u, v)
    return len(np.unique(key)) == len(key)


def sample_simple(seq, seed=None, max_attempts: int = 1000) -> MultiGraph:
    """Uniform simple graph with the given degrees, by rejecting non-simple matchings."""
    degrees = _as_degrees(seq)
    if not erdos_gallai_check(degrees):
        raise ValueError("degree sequence is not graphic")
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    rng = np.random.default_rng(seed)
    n_half = int(degrees.sum())
    for attempt in range(1, max_attempts + 1):
        g = MultiGraph(degrees, random_matching(n_half, rng), attempts=attempt)
        if is_simple(g):
            return g
    raise SamplingError(f"no simple graph after {max_attempts} attempts", max_attempts)


@dataclass
class ExplorationState:
    """Half-edge exploration snapshot.

    ``status[h]`` is 0 (unexplored), 1 (active) or 2 (connected).  ``x[t-1]``
    and ``eps[t-1]`` are the number of fresh half-edges and the collision flag
    of step ``t``.
    """

    status: np.ndarray
    step: int = 0
    x: list[int] = field(default_factory=list)
    eps: list[int] = field(default_factory=list)
    distance: dict[int, int] = field(default_factory=dict)

    @property
    def active(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.status == 1).tolist())

    @property
    def connected(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.status == 2).tolist())

    @property
    def unexplored(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.status == 0).tolist())

    @property
    def collisions(self) -> int:
        return sum(self.eps)


def explore_neighborhood(g: MultiGraph, root, radius: int, max_steps: int | None = None,
                         check_invariants: bool = False):
    """Reveal the matching around ``root`` one half-edge at a time.

    ``root`` is a vertex id, or ``("edge", h)`` for the directed edge leaving
    through half-edge ``h``; the edge variant removes that edge first and
    explores from its head.  Active half-edges are processed in the order
    (distance, vertex, slot); only those at distance < ``radius`` are
    processed, so the explored ball is every edge with an endpoint at distance
    below ``radius``.  It is a tree iff no processed half-edge met another
    active one.

    Returns ``(is_tree, S, state)`` where ``S[t]`` counts the length-``t``
    non-backtracking walks from the root (in the edge-deleted graph for the
    edge variant), ``t = 0..radius``.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    status = np.zeros(g.n_half_edges, dtype=np.int8)
    removed: tuple[int, ...] = ()
    if isinstance(root, tuple):
        _, h0 = root
        h0 = int(h0)
        removed = (h0, int(g.partner[h0]))
        start = int(g.vertex_of[g.partner[h0]])
        status[list(removed)] = 2
    else:
        start = int(root)
    state = ExplorationState(status=status, distance={start: 0})
    heap: list[tuple[int, int, int]] = []

    def activate(v: int, dist: int):
        for h in g.half_edges(v):
            if status[h] == 0:
                status[h] = 1
                heapq.heappush(heap, (dist, v, h))

    activate(start, 0)
    root_degree = int(np.count_nonzero(status[list(g.half_edges(start))] == 1))
    k_max = int(g.degrees.max()) if g.n else 0
    while heap:
        dist, u, h = heap[0]
        if dist >= radius or (max_steps is not None and state.step >= max_steps):
            break
        heapq.heappop(heap)
        if status[h] != 1:
            continue  # consumed earlier as the partner of another active half-edge
        p = int(g.partner[h])
        w = int(g.vertex_of[p])
        status[h] = 2
        if status[p] == 1:
            state.eps.append(1)
            state.x.append(0)
            status[p] = 2
        else:
            status[p] = 2
            state.eps.append(0)
            before = len(heap)
            state.distance[w] = dist + 1
            activate(w, dist + 1)
            state.x.append(len(heap) - before)
        state.step += 1
        if check_invariants:
            n_conn = int(np.count_nonzero(status == 2)) - len(removed)
            assert n_conn == 2 * state.step
            assert int(np.count_nonzero(status == 1)) <= k_max * state.step + root_degree

    S = _walk_counts_from(g, start, radius, removed)
    return state.collisions == 0, S, state


def _walk_counts_from(g: MultiGraph, start: int, radius: int, removed: tuple[int, ...]) -> np.ndarray:
    """Non-backtracking walk counts from ``start`` by dynamic programming on directed edges."""
    blocked = set(removed)
    S = np.zeros(radius + 1, dtype=object)
    S[0] = 1
    frontier: dict[int, int] = {}
    for h in g.half_edges(start):
        if h not in blocked:
            frontier[h] = frontier.get(h, 0) + 1
    for t in range(1, radius + 1):
        S[t] = sum(frontier.values())
        if t == radius:
            break
        nxt: dict[int, int] = {}
        for h, c in frontier.items():
            back = int(g.partner[h])
            w = int(g.vertex_of[back])
            for f in g.half_edges(w):
                if f != back and f not in blocked:
                    nxt[f] = nxt.get(f, 0) + c
        frontier = nxt
    return np.array([int(s) for s in S], dtype=np.int64)


def ball_matrix(g: MultiGraph, radius: int) -> sp.csr_matrix:
    """Boolean matrix whose row ``v`` marks the vertices within ``radius`` of ``v``."""
    step = (g.adjacency() + sp.identity(g.n, dtype=np.int64, format="csr")).astype(bool).tocsr()
    reach = sp.identity(g.n, dtype=bool, format="csr")
    for _ in range(radius):
        reach = (reach @ step).astype(bool).tocsr()
    return reach


def ball_cycle_counts(g: MultiGraph, radius: int) -> np.ndarray:
    """Cycle rank |E| - |V| + 1 of the ball (induced sub-multigraph) around every vertex."""
    reach = ball_matrix(g, radius).astype(np.int64).tocsc()
    pairs = g.edge_array()
    n_vertices = np.asarray(reach.sum(axis=1)).ravel()
    if len(pairs) == 0:
        return np.zeros(g.n, dtype=np.int64)
    both = reach[:, pairs[:, 0]].multiply(reach[:, pairs[:, 1]])
    n_edges = np.asarray(both.sum(axis=1)).ravel()
    return n_edges - n_vertices + 1


def tangle_free_check(g: MultiGraph, ell: int) -> bool:
    """True iff every radius-``ell`` ball contains at most one cycle."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if g.n == 0:
        return True
    return bool(ball_cycle_counts(g, ell).max() <= 1)


def write_graph(g: MultiGraph, fh: TextIO) -> None:
    """Header ``n m`` then one ``u v`` line per edge, sorted; loops are ``u u``."""
    fh.write(f"{g.n} {g.m}\n")
    for u, v in g.edge_array():
        fh.write(f"{u} {v}\n")


def format_graph(g: MultiGraph) -> str:
    import io

    buf = io.StringIO()
    write_graph(g, buf)
    return buf.getvalue()


def read_graph(fh: TextIO) -> MultiGraph:
    lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty graph file")
    n, m = (int(x) for x in lines[0])
    edges = [(int(u), int(v)) for u, v in lines[1:]]
    if len(edges) != m:
        raise ValueError(f"header says {m} edges, found {len(edges)}")
    return MultiGraph.from_edges(n, edges)


def parse_graph(text: str) -> MultiGraph:
    import io

    return read_graph(io.StringIO(text))
