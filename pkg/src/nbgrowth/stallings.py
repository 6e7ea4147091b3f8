"""Immersions into the rank-r bouquet and the free-group subgroups they carry.

A graph with degrees at most 2r is padded to a 2r-regular multigraph, split
into r edge-disjoint 2-factors (Euler circuit orientation, then a
decomposition of the resulting r-regular bipartite out/in graph into r
perfect matchings), and factor i is labelled x_i along its directed cycles.  Dropping
the padding keeps the labelling locally injective, so reading labels along
closed paths embeds the fundamental group in F_r.
"""

from __future__ import annotations

import io
import json
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_bipartite_matching

from .config_sampler import MultiGraph
from .nb_spectral import build_nb_operator, growth_rate_estimate, power_iterate


class ImmersionError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledEdge:
    tail: int
    head: int
    label: int  # 1..r


@dataclass(frozen=True)
class LabeledGraph:
    n: int
    r: int
    edges: tuple[LabeledEdge, ...]

    def __post_init__(self):
        for e in self.edges:
            if not (0 <= e.tail < self.n and 0 <= e.head < self.n):
                raise ImmersionError(f"edge {e} has an endpoint out of range")
            if not 1 <= e.label <= self.r:
                raise ImmersionError(f"label {e.label} outside 1..{self.r}")
        verify_immersion(self)

    @property
    def m(self) -> int:
        return len(self.edges)

    def underlying(self) -> MultiGraph:
        return MultiGraph.from_edges(self.n, [(e.tail, e.head) for e in self.edges])

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        return self.underlying().is_connected()


def label_counts(labeled: LabeledGraph) -> tuple[np.ndarray, np.ndarray]:
    """``(out, inc)`` arrays of shape (n, r+1): edges leaving / entering each vertex per label."""
    out = np.zeros((labeled.n, labeled.r + 1), dtype=np.int64)
    inc = np.zeros_like(out)
    for e in labeled.edges:
        out[e.tail, e.label] += 1
        inc[e.head, e.label] += 1
    return out, inc


def verify_immersion(labeled: LabeledGraph, exact: bool = False) -> None:
    """Raise unless each vertex has at most (``exact``: exactly) one out- and one in-edge per label."""
    out, inc = label_counts(labeled)
    if out.max(initial=0) > 1 or inc.max(initial=0) > 1:
        v, lab = np.argwhere((out > 1) | (inc > 1))[0]
        raise ImmersionError(f"vertex {v} has two edges labelled x_{lab} in the same direction")
    if exact and (np.any(out[:, 1:] != 1) or np.any(inc[:, 1:] != 1)):
        raise ImmersionError("not a covering: some vertex misses a label")


def is_immersion(labeled_edges: Sequence[LabeledEdge], n: int, r: int) -> bool:
    try:
        LabeledGraph(n, r, tuple(labeled_edges))
    except ImmersionError:
        return False
    return True


def complete_to_regular(g: MultiGraph, r: int) -> MultiGraph:
    """Pad ``g`` to a 2r-regular multigraph; the original edges come first.

    While two vertices lack degree, join the two lowest-numbered ones; a lone
    deficient vertex (its deficit is then even) receives loops.
    """
    target = 2 * r
    if g.n and int(g.degrees.max()) > target:
        raise ValueError(f"maximum degree {int(g.degrees.max())} exceeds 2r = {target}")
    deficit = [target - int(d) for d in g.degrees]
    added: list[tuple[int, int]] = []
    pending = deque(v for v in range(g.n) if deficit[v] > 0)
    while pending:
        u = pending[0]
        if len(pending) >= 2:
            v = pending[1]
            added.append((u, v))
            deficit[u] -= 1
            deficit[v] -= 1
            if deficit[v] == 0:
                del pending[1]
            if deficit[u] == 0:
                pending.popleft()
        else:
            # total deficit is even, so a lone deficient vertex lacks an even amount
            assert deficit[u] % 2 == 0
            for _ in range(deficit[u] // 2):
                added.append((u, u))
            deficit[u] = 0
            pending.popleft()
    return MultiGraph.from_edges(g.n, _original_edges(g) + added)


def _original_edges(g: MultiGraph) -> list[tuple[int, int]]:
    """Edges in half-edge order (stable under ``MultiGraph.from_edges``)."""
    out = []
    for h in range(g.n_half_edges):
        p = int(g.partner[h])
        if h < p:
            out.append((int(g.vertex_of[h]), int(g.vertex_of[p])))
    return out


def euler_orientation(n: int, edges: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    """Orient every edge along an Euler circuit of its component (all degrees even).

    Hierholzer's algorithm; a loop is two stubs at one vertex and is simply
    traversed once.  Returns ``(tail, head)`` per input edge, same order.
    """
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i, (u, v) in enumerate(edges):
        adj[u].append((v, i))
        if u != v:
            adj[v].append((u, i))
        else:
            adj[u].append((u, i))
    used = [False] * len(edges)
    ptr = [0] * n
    oriented: list[tuple[int, int] | None] = [None] * len(edges)
    for start in range(n):
        if ptr[start] >= len(adj[start]):
            continue
        stack = [(start, -1)]
        while stack:
            v, via = stack[-1]
            while ptr[v] < len(adj[v]) and used[adj[v][ptr[v]][1]]:
                ptr[v] += 1
            if ptr[v] == len(adj[v]):
                stack.pop()
                if via >= 0 and stack:
                    oriented[via] = (stack[-1][0], v)
                continue
            w, i = adj[v][ptr[v]]
            used[i] = True
            stack.append((w, i))
    if any(o is None for o in oriented):
        raise ValueError("graph has a vertex of odd degree")
    return oriented  # type: ignore[return-value]


def _perfect_matching(n: int, arcs: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """Edge ids of a perfect matching in the regular bipartite multigraph of live arcs.

    Left side is the tail, right side the head; Hopcroft-Karp from scipy.
    """
    ids = np.flatnonzero(alive)
    tails, heads = arcs[ids, 0], arcs[ids, 1]
    bi = sp.csr_matrix((np.ones(len(ids)), (tails, heads)), shape=(n, n))
    match = maximum_bipartite_matching(bi, perm_type="column")
    if np.any(match < 0):
        raise RuntimeError("regular bipartite graph without a perfect matching")
    # first live arc realising each matched pair
    order = np.lexsort((ids, heads, tails))
    key_sorted = tails[order] * n + heads[order]
    pos = np.searchsorted(key_sorted, np.arange(n) * n + match)
    return ids[order[pos]]


def two_factorize(g: MultiGraph) -> list[list[tuple[int, int]]]:
    """Split a 2r-regular multigraph into r 2-factors, each a list of directed edges.

    Every factor gives each vertex exactly one outgoing and one incoming edge,
    i.e. it is a union of directed cycles covering all vertices (a loop counts
    as a directed 1-cycle).  Factors are returned in a fixed order.
    """
    if g.n == 0:
        return []
    deg = set(int(d) for d in g.degrees)
    if len(deg) != 1 or next(iter(deg)) % 2:
        raise ValueError("two_factorize needs an even regular multigraph")
    r = next(iter(deg)) // 2
    oriented = euler_orientation(g.n, _original_edges(g))
    arcs = np.asarray(oriented, dtype=np.int64).reshape(-1, 2)
    alive = np.ones(len(arcs), dtype=bool)
    factors = []
    for _ in range(r):
        chosen = _perfect_matching(g.n, arcs, alive)
        alive[chosen] = False
        factors.append([(int(u), int(v)) for u, v in arcs[chosen]])
    return factors


def label_immersion(factors: Sequence[Sequence[tuple[int, int]]], n: int | None = None) -> LabeledGraph:
    """Label factor i with x_{i+1}, keeping each factor's cycle orientation."""
    if n is None:
        n = 1 + max((max(u, v) for f in factors for u, v in f), default=-1)
    edges = tuple(LabeledEdge(u, v, i + 1) for i, f in enumerate(factors) for u, v in f)
    labeled = LabeledGraph(n, len(factors), edges)
    verify_immersion(labeled, exact=True)
    return labeled


def restrict_labels(labeled: LabeledGraph, original: MultiGraph) -> LabeledGraph:
    """Keep only labelled edges that correspond (as a multiset of vertex pairs) to ``original``."""
    wanted: dict[tuple[int, int], int] = defaultdict(int)
    for u, v in original.edges():
        wanted[(u, v)] += 1
    kept = []
    for e in labeled.edges:
        key = (min(e.tail, e.head), max(e.tail, e.head))
        if wanted[key] > 0:
            wanted[key] -= 1
            kept.append(e)
    if any(c > 0 for c in wanted.values()):
        raise ValueError("original graph is not a subgraph of the labelled graph")
    return LabeledGraph(original.n, labeled.r, tuple(kept))


def immerse(g: MultiGraph, r: int) -> LabeledGraph:
    """Complete, factorize, label, and restrict back to ``g``."""
    full = complete_to_regular(g, r)
    return restrict_labels(label_immersion(two_factorize(full), g.n), g)


Word = tuple[int, ...]  # letters ±i for x_i^{±1}


def free_reduce(word: Sequence[int]) -> Word:
    out: list[int] = []
    for x in word:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def invert(word: Sequence[int]) -> Word:
    return tuple(-x for x in reversed(word))


def word_to_string(word: Sequence[int]) -> str:
    """``x_1 -> a``, ``x_1^{-1} -> A``, ``x_2 -> b``, ..."""
    letters = []
    for x in word:
        c = chr(ord("a") + abs(x) - 1)
        letters.append(c if x > 0 else c.upper())
    return "".join(letters)


def string_to_word(text: str) -> Word:
    return tuple((ord(c.lower()) - ord("a") + 1) * (1 if c.islower() else -1) for c in text)


@dataclass(frozen=True)
class SubgroupBasis:
    rank: int
    basepoint: int
    words: tuple[Word, ...]
    r: int

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "basepoint": self.basepoint,
            "r": self.r,
            "words": [word_to_string(w) for w in self.words],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def subgroup_basis(labeled: LabeledGraph, basepoint: int = 0) -> SubgroupBasis:
    """Free basis of the image of pi_1(labeled, basepoint) in F_r.

    BFS spanning tree from the basepoint, exploring incident edges in order
    (label, direction, other endpoint); each non-tree edge u -x-> v gives the
    word path(base, u) x path(v, base).
    """
    if labeled.n == 0:
        raise ValueError("empty graph")
    if not labeled.is_connected():
        raise ValueError("labelled graph is not connected")
    verify_immersion(labeled)
    incident: list[list[tuple[int, int, int, int]]] = [[] for _ in range(labeled.n)]
    for i, e in enumerate(labeled.edges):
        # (label, direction, other endpoint, edge id); direction 0 = outgoing
        incident[e.tail].append((e.label, 0, e.head, i))
        incident[e.head].append((e.label, 1, e.tail, i))
    for lst in incident:
        lst.sort()
    path: dict[int, Word] = {basepoint: ()}
    tree_edges: set[int] = set()
    queue = deque([basepoint])
    while queue:
        v = queue.popleft()
        for label, direction, w, i in incident[v]:
            if w in path:
                continue
            letter = label if direction == 0 else -label
            path[w] = path[v] + (letter,)
            tree_edges.add(i)
            queue.append(w)
    words = []
    for i, e in enumerate(labeled.edges):
        if i in tree_edges:
            continue
        words.append(free_reduce(path[e.tail] + (e.label,) + invert(path[e.head])))
    rank = labeled.m - labeled.n + 1
    assert len(words) == rank
    if any(len(w) == 0 for w in words):
        raise ImmersionError("basis word reduced to the identity; labelling is not an immersion")
    return SubgroupBasis(rank, basepoint, tuple(words), labeled.r)


def fold_words(words: Sequence[Sequence[int]], r: int) -> tuple[LabeledGraph, int]:
    """Stallings graph of the subgroup generated by ``words``.

    Builds a bouquet of based loops spelling the words, then repeatedly
    identifies two edges with the same label and direction at a vertex until
    none remain, and finally prunes degree-one vertices other than the
    basepoint.  Returns the folded graph and its basepoint.
    """
    parent: list[int] = [0]

    def new_vertex() -> int:
        parent.append(len(parent))
        return len(parent) - 1

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    raw: list[tuple[int, int, int]] = []
    for word in words:
        cur = 0
        for j, x in enumerate(word):
            nxt = 0 if j == len(word) - 1 else new_vertex()
            if x > 0:
                raw.append((cur, x, nxt))
            else:
                raw.append((nxt, -x, cur))
            cur = nxt

    changed = True
    edges: set[tuple[int, int, int]] = set()
    while changed:
        changed = False
        edges = {(find(u), lab, find(v)) for u, lab, v in raw}
        raw = list(edges)
        seen: dict[tuple[int, int, int], int] = {}
        for u, lab, v in raw:
            for key, other in (((u, lab, 0), v), ((v, lab, 1), u)):
                if key in seen and find(seen[key]) != find(other):
                    a, b = find(seen[key]), find(other)
                    parent[max(a, b)] = min(a, b)
                    changed = True
                else:
                    seen.setdefault(key, other)
    edges = {(find(u), lab, find(v)) for u, lab, v in raw}
    base = find(0)

    # prune hairs
    while True:
        degree: dict[int, int] = defaultdict(int)
        for u, _, v in edges:
            degree[u] += 1
            degree[v] += 1
        leaves = {v for v, d in degree.items() if d == 1 and v != base}
        if not leaves:
            break
        edges = {e for e in edges if e[0] not in leaves and e[2] not in leaves}

    vertices = sorted({base} | {u for u, _, _ in edges} | {v for _, _, v in edges})
    index = {v: i for i, v in enumerate(vertices)}
    labeled = LabeledGraph(
        len(vertices), r,
        tuple(sorted((LabeledEdge(index[u], index[v], lab) for u, lab, v in edges),
                     key=lambda e: (e.tail, e.label, e.head))),
    )
    return labeled, index[base]


@dataclass(frozen=True)
class GrowthCertificate:
    rate: float
    lambda1: float
    depth: int
    tolerance: float

    @property
    def gap(self) -> float:
        return abs(self.rate - self.lambda1)

    @property
    def passed(self) -> bool:
        return self.gap <= self.tolerance

    def to_dict(self) -> dict:
        return {"rate": self.rate, "lambda1": self.lambda1, "depth": self.depth,
                "tolerance": self.tolerance, "gap": self.gap, "passed": self.passed}


def subgroup_growth_certificate(labeled: LabeledGraph, depth: int = 18, tolerance: float = 0.1,
                                seed=0) -> GrowthCertificate:
    """Compare the ball-count growth of the universal cover with the Perron eigenvalue.

    The cover embeds in the Cayley tree of F_r, so its ball growth is the
    growth of the subgroup.
    """
    g = labeled.underlying()
    if not g.is_connected():
        raise ValueError("labelled graph is not connected")
    op = build_nb_operator(g)
    rate = growth_rate_estimate(op, depth)
    lam = power_iterate(op, seed=seed).lambda1
    return GrowthCertificate(rate, lam, depth, tolerance)


def write_labeled(labeled: LabeledGraph, fh: TextIO) -> None:
    """Header ``n m r`` then one ``u v i`` line per directed edge u -> v labelled x_i."""
    fh.write(f"{labeled.n} {labeled.m} {labeled.r}\n")
    for e in sorted(labeled.edges, key=lambda e: (e.tail, e.head, e.label)):
        fh.write(f"{e.tail} {e.head} {e.label}\n")


def format_labeled(labeled: LabeledGraph) -> str:
    buf = io.StringIO()
    write_labeled(labeled, buf)
    return buf.getvalue()


def read_labeled(fh: TextIO) -> LabeledGraph:
    lines = [ln.split() for ln in fh if ln.strip()]
    n, m, r = (int(x) for x in lines[0])
    edges = tuple(LabeledEdge(int(u), int(v), int(i)) for u, v, i in lines[1:])
    if len(edges) != m:
        raise ValueError(f"header says {m} edges, found {len(edges)}")
    return LabeledGraph(n, r, edges)


def parse_labeled(text: str) -> LabeledGraph:
    return read_labeled(io.StringIO(text))
