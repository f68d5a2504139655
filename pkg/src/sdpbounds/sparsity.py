"""Sparsity patterns, chordal extension, clique covers.

Vertices are 0-based global indices into a conic problem's variable space.
The aggregate pattern of (C, A_1..A_m) has an edge (i, j), i != j, wherever any
of the matrices has a nonzero at (i, j). A clique cover is a list of vertex
sets whose induced complete graphs cover every pattern edge; chordal covers
come from a minimum-degree elimination with deterministic tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
from typing import Iterable, Sequence

import numpy as np

from .core import ConicProblem, SymMatrix


class PatternGraph:
    """Undirected graph on vertices 0..n-1 with a sorted edge list (i < j)."""

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        self.n = int(n)
        seen = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError("self-loops are not pattern edges")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a},{b}) out of range for n={n}")
            seen.add((min(a, b), max(a, b)))
        self.edges = tuple(sorted(seen))
        self._adj: list[set[int]] = [set() for _ in range(self.n)]
        for a, b in self.edges:
            self._adj[a].add(b)
            self._adj[b].add(a)

    def neighbors(self, v: int) -> set[int]:
        return self._adj[v]

    def has_edge(self, a: int, b: int) -> bool:
        return b in self._adj[a]

    @property
    def nedges(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def union(self, other: "PatternGraph") -> "PatternGraph":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return PatternGraph(self.n, self.edges + other.edges)

    def is_subgraph_of(self, other: "PatternGraph") -> bool:
        return self.n == other.n and set(self.edges) <= set(other.edges)

    def __repr__(self) -> str:
        return f"PatternGraph(n={self.n}, edges={self.nedges})"


def aggregate_pattern(C: SymMatrix, As: Sequence[SymMatrix], n: int | None = None) -> PatternGraph:
    """Union of the off-diagonal supports of C and all A_i."""
    mats = [C, *As]
    if n is None:
        n = C.n
    edges = []
    for M in mats:
        if M.n != n:
            raise ValueError("all matrices must share dimension n")
        off = M.rows != M.cols
        edges.extend(zip(M.rows[off].tolist(), M.cols[off].tolist()))
    return PatternGraph(n, edges)


def problem_pattern(p: ConicProblem) -> PatternGraph:
    return aggregate_pattern(p.C, p.As, n=p.n)


@dataclass
class CliqueCover:
    """Clique edge cover of a pattern.

    graph: the covered pattern (original plus any fill added by extension or
        merging, i.e. the union of the cliques' complete graphs).
    cliques: sorted vertex tuples, canonically ordered.
    elimination_order: a perfect elimination ordering when chordal is True.
    chordal: certificate flag, re-checked after every merge or extension.
    """

    graph: PatternGraph
    cliques: list[tuple[int, ...]]
    elimination_order: list[int] | None = None
    chordal: bool = False

    def __post_init__(self):
        self.cliques = sorted(tuple(sorted(c)) for c in self.cliques)

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.cliques]

    def covers(self, pattern: PatternGraph) -> bool:
        """True when every vertex and pattern edge lies inside some clique."""
        if pattern.n != self.graph.n:
            return False
        vs = set()
        member = [set() for _ in range(self.graph.n)]
        for k, c in enumerate(self.cliques):
            vs.update(c)
            for v in c:
                member[v].add(k)
        if vs != set(range(pattern.n)):
            return False
        return all(member[a] & member[b] for a, b in pattern.edges)

    def cliques_containing(self, v: int) -> list[int]:
        return [k for k, c in enumerate(self.cliques) if v in c]


def _eliminate_min_degree(g: PatternGraph) -> tuple[list[int], set[tuple[int, int]]]:
    """Minimum-degree elimination, lowest index breaking ties.

    Returns (elimination order, fill edges). The order is a perfect
    elimination ordering of the filled graph.
    """
    adj = [set(g.neighbors(v)) for v in range(g.n)]
    alive = set(range(g.n))
    order = []
    fill: set[tuple[int, int]] = set()
    for _ in range(g.n):
        v = min(alive, key=lambda u: (len(adj[u]), u))
        nbrs = sorted(adj[v])
        for ai in range(len(nbrs)):
            for bi in range(ai + 1, len(nbrs)):
                a, b = nbrs[ai], nbrs[bi]
                if b not in adj[a]:
                    adj[a].add(b)
                    adj[b].add(a)
                    fill.add((a, b))
        for u in nbrs:
            adj[u].discard(v)
        alive.discard(v)
        order.append(v)
    return order, fill


def _peo_cliques(g: PatternGraph, order: list[int]) -> list[tuple[int, ...]]:
    """Maximal cliques of a chordal graph from a perfect elimination ordering."""
    pos = {v: t for t, v in enumerate(order)}
    cand = []
    for v in order:
        c = {v} | {u for u in g.neighbors(v) if pos[u] > pos[v]}
        cand.append(tuple(sorted(c)))
    # prune non-maximal candidates; quadratic but fine at the scales used here
    cand = sorted(set(cand), key=len, reverse=True)
    kept: list[tuple[int, ...]] = []
    kept_sets: list[set[int]] = []
    for c in cand:
        cs = set(c)
        if not any(cs <= k for k in kept_sets):
            kept.append(c)
            kept_sets.append(cs)
    return sorted(kept)


def _verify_peo(g: PatternGraph, order: list[int]) -> bool:
    pos = {v: t for t, v in enumerate(order)}
    for v in order:
        later = [u for u in g.neighbors(v) if pos[u] > pos[v]]
        if not later:
            continue
        w = min(later, key=lambda u: pos[u])
        rest = set(later) - {w}
        if not rest <= g.neighbors(w):
            return False
    return True


def _mcs_order(g: PatternGraph) -> list[int]:
    """Maximum cardinality search; reversed result is a PEO iff g is chordal."""
    weight = [0] * g.n
    visited = [False] * g.n
    out = []
    for _ in range(g.n):
        v = max((u for u in range(g.n) if not visited[u]), key=lambda u: (weight[u], -u))
        visited[v] = True
        out.append(v)
        for u in g.neighbors(v):
            if not visited[u]:
                weight[u] += 1
    out.reverse()
    return out


def is_chordal(g: PatternGraph) -> bool:
    return _verify_peo(g, _mcs_order(g))


def chordal_extend(g: PatternGraph) -> CliqueCover:
    """Chordal extension by approximate minimum degree.

    Deterministic: ties in the degree heuristic break toward the lowest vertex
    index. The returned cover's cliques are the maximal cliques of the filled
    graph, and its elimination order is a perfect elimination ordering.
    """
    order, fill = _eliminate_min_degree(g)
    filled = PatternGraph(g.n, tuple(g.edges) + tuple(fill))
    cliques = _peo_cliques(filled, order)
    return CliqueCover(filled, cliques, elimination_order=order, chordal=True)


def maximal_cliques(g: PatternGraph) -> list[tuple[int, ...]]:
    """Maximal cliques of a chordal graph. Raises on non-chordal input."""
    order = _mcs_order(g)
    if not _verify_peo(g, order):
        raise ValueError("graph is not chordal; use chordal_extend first")
    return _peo_cliques(g, order)


@dataclass(frozen=True)
class MergePolicy:
    """Greedy pairwise clique merging control.

    A pair may merge when the union size is at most max_union (if set) or the
    overlap ratio |A & B| / min(|A|, |B|) is at least min_overlap (if set).
    """

    max_union: int | None = None
    min_overlap: float | None = None

    def allows(self, a: set[int], b: set[int]) -> bool:
        if self.max_union is not None and len(a | b) <= self.max_union:
            return True
        if self.min_overlap is not None:
            ov = len(a & b) / min(len(a), len(b))
            if ov >= self.min_overlap:
                return True
        return False


def merge_cliques(cover: CliqueCover, policy: MergePolicy) -> CliqueCover:
    """Greedily merge clique pairs allowed by the policy.

    Deterministic: among allowed pairs, the one with the largest overlap is
    merged first, ties broken lexicographically. Off by default in the sense
    that an empty policy merges nothing. The result is still a clique cover of
    the original pattern; chordality of the union graph is re-checked.
    """
    cliques = [set(c) for c in cover.cliques]
    if policy.max_union is None and policy.min_overlap is None:
        return cover
    changed = True
    while changed and len(cliques) > 1:
        changed = False
        best = None
        for i in range(len(cliques)):
            for j in range(i + 1, len(cliques)):
                if policy.allows(cliques[i], cliques[j]):
                    score = (len(cliques[i] & cliques[j]), -i, -j)
                    if best is None or score > best[0]:
                        best = (score, i, j)
        if best is not None:
            _, i, j = best
            cliques[i] |= cliques[j]
            del cliques[j]
            # drop duplicates and cliques absorbed by the merge
            uniq: list[set[int]] = []
            for c in cliques:
                if c not in uniq:
                    uniq.append(c)
            cliques = [c for k, c in enumerate(uniq)
                       if not any(k != l and c < uniq[l] for l in range(len(uniq)))]
            changed = True
    edges = [(a, b) for c in cliques for a in c for b in c if a < b]
    graph = PatternGraph(cover.graph.n, edges)
    order = _mcs_order(graph)
    chordal = _verify_peo(graph, order)
    return CliqueCover(graph, [tuple(sorted(c)) for c in cliques],
                       elimination_order=order if chordal else None, chordal=chordal)


def single_clique_cover(n: int) -> CliqueCover:
    """The trivial cover with one clique spanning everything (no decomposition)."""
    c = tuple(range(n))
    edges = [(a, b) for a in range(n) for b in range(a + 1, n)]
    return CliqueCover(PatternGraph(n, edges), [c],
                       elimination_order=list(range(n)), chordal=True)


def cover_to_json(cover: CliqueCover) -> str:
    """Pattern and cliques as JSON (1-based indices) for external plotting."""
    return json.dumps({
        "n": cover.graph.n,
        "edges": [[a + 1, b + 1] for a, b in cover.graph.edges],
        "cliques": [[v + 1 for v in c] for c in cover.cliques],
        "chordal": cover.chordal,
    }, indent=1)
