"""Pattern graphs, chordal extension, and clique merging."""

import json

import numpy as np
import pytest

from sdpbounds.core import SymMatrix
from sdpbounds.sparsity import (
    CliqueCover,
    MergePolicy,
    PatternGraph,
    aggregate_pattern,
    chordal_extend,
    cover_to_json,
    is_chordal,
    maximal_cliques,
    merge_cliques,
    problem_pattern,
    single_clique_cover,
)

from conftest import trace_problem


def cycle(n):
    return PatternGraph(n, [(i, (i + 1) % n) for i in range(n)])


class TestPatternGraph:
    def test_edges_normalized_and_deduped(self):
        g = PatternGraph(4, [(2, 0), (0, 2), (1, 3)])
        assert g.edges == ((0, 2), (1, 3))
        assert g.has_edge(2, 0) and not g.has_edge(0, 1)

    def test_rejects_self_loops(self):
        with pytest.raises(ValueError):
            PatternGraph(3, [(1, 1)])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            PatternGraph(3, [(0, 3)])

    def test_union_and_subgraph(self):
        a = PatternGraph(3, [(0, 1)])
        b = PatternGraph(3, [(1, 2)])
        u = a.union(b)
        assert u.edges == ((0, 1), (1, 2))
        assert a.is_subgraph_of(u) and not u.is_subgraph_of(a)

    def test_degree(self):
        g = cycle(5)
        assert all(g.degree(v) == 2 for v in range(5))


class TestAggregatePattern:
    def test_offdiagonal_union(self):
        C = SymMatrix.from_entries(3, [(0, 0, 1.0), (0, 1, 2.0)])
        A = SymMatrix.from_entries(3, [(1, 2, -1.0), (2, 2, 4.0)])
        g = aggregate_pattern(C, [A])
        assert g.edges == ((0, 1), (1, 2))

    def test_diagonal_only_gives_no_edges(self):
        C = SymMatrix.from_dense(np.diag([1.0, 2.0]))
        assert aggregate_pattern(C, []).nedges == 0

    def test_problem_pattern_matches(self, rng):
        pat = PatternGraph(6, [(0, 1), (2, 3)])
        p, _ = trace_problem(rng, 6, pattern=pat)
        g = problem_pattern(p)
        assert set(g.edges) <= set(pat.edges)


class TestChordalExtend:
    def test_hexagon_fan_triangulation(self):
        # minimum fill for a 6-cycle is 3 edges, giving 4 triangles
        cov = chordal_extend(cycle(6))
        assert cov.chordal
        assert cov.graph.nedges == 6 + 3
        assert sorted(cov.sizes) == [3, 3, 3, 3]
        assert cov.cliques == [(0, 1, 5), (1, 2, 5), (2, 3, 5), (3, 4, 5)]

    def test_square_splits_into_two_triangles(self):
        cov = chordal_extend(cycle(4))
        assert cov.sizes == [3, 3] and cov.graph.nedges == 5
        assert cov.covers(cycle(4))

    def test_isolated_vertices_get_singleton_cliques(self):
        g = PatternGraph(3, [(0, 1)])
        cov = chordal_extend(g)
        assert (2,) in cov.cliques and cov.covers(g)

    def test_chordal_input_unchanged(self):
        g = PatternGraph(4, [(0, 1), (1, 2), (2, 3), (1, 3)])
        assert is_chordal(g)
        cov = chordal_extend(g)
        assert set(cov.graph.edges) == set(g.edges)

    def test_complete_graph_single_clique(self):
        g = PatternGraph(4, [(a, b) for a in range(4) for b in range(a + 1, 4)])
        cov = chordal_extend(g)
        assert cov.cliques == [(0, 1, 2, 3)]

    @pytest.mark.parametrize("n,p_edge", [(8, 0.2), (12, 0.3), (20, 0.15)])
    def test_random_extension_properties(self, rng, n, p_edge):
        mask = rng.random((n, n)) < p_edge
        g = PatternGraph(n, [(a, b) for a in range(n) for b in range(a + 1, n)
                             if mask[a, b]])
        cov = chordal_extend(g)
        assert cov.chordal and is_chordal(cov.graph)
        assert cov.covers(g)
        assert g.is_subgraph_of(cov.graph)
        for c in cov.cliques:
            for x in range(len(c)):
                for y in range(x + 1, len(c)):
                    assert cov.graph.has_edge(c[x], c[y])
        # maximality: no clique contained in another
        sets = [set(c) for c in cov.cliques]
        for i, a in enumerate(sets):
            assert not any(i != j and a <= sets[j] for j in range(len(sets)))


class TestIsChordal:
    def test_cycles(self):
        assert not is_chordal(cycle(4))
        assert not is_chordal(cycle(6))
        assert is_chordal(cycle(3))

    def test_tree(self):
        g = PatternGraph(5, [(0, 1), (0, 2), (2, 3), (2, 4)])
        assert is_chordal(g)


class TestMaximalCliques:
    def test_bowtie(self):
        g = PatternGraph(5, [(0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4)])
        assert maximal_cliques(g) == [(0, 1, 2), (2, 3, 4)]


class TestMergeCliques:
    def test_empty_policy_is_noop(self):
        cov = chordal_extend(cycle(6))
        merged = merge_cliques(cov, MergePolicy())
        assert merged.cliques == cov.cliques

    def test_max_union_collapses_square(self):
        cov = chordal_extend(cycle(4))
        merged = merge_cliques(cov, MergePolicy(max_union=4))
        assert merged.cliques == [(0, 1, 2, 3)]
        assert merged.covers(cycle(4)) and merged.chordal

    def test_max_union_cap_respected(self):
        cov = chordal_extend(cycle(6))
        merged = merge_cliques(cov, MergePolicy(max_union=4))
        assert max(merged.sizes) <= 4
        assert merged.covers(cycle(6))

    def test_min_overlap(self):
        cov = chordal_extend(cycle(6))
        # every adjacent triangle pair shares 2 of 3 vertices
        merged = merge_cliques(cov, MergePolicy(min_overlap=0.9))
        assert merged.cliques == cov.cliques
        merged = merge_cliques(cov, MergePolicy(min_overlap=0.5))
        assert len(merged.cliques) < len(cov.cliques)
        assert merged.covers(cycle(6))

    def test_deterministic(self, rng):
        mask = rng.random((10, 10)) < 0.3
        g = PatternGraph(10, [(a, b) for a in range(10)
                              for b in range(a + 1, 10) if mask[a, b]])
        cov = chordal_extend(g)
        m1 = merge_cliques(cov, MergePolicy(max_union=6))
        m2 = merge_cliques(cov, MergePolicy(max_union=6))
        assert m1.cliques == m2.cliques


class TestCliqueCover:
    def test_covers_rejects_missing_edge(self):
        g = PatternGraph(3, [(0, 1), (1, 2), (0, 2)])
        cov = CliqueCover(g, [(0, 1), (1, 2)])
        assert not cov.covers(g)

    def test_single_clique_cover(self):
        cov = single_clique_cover(4)
        assert cov.cliques == [(0, 1, 2, 3)] and cov.chordal
        assert cov.covers(cycle(4))

    def test_cliques_containing(self):
        cov = chordal_extend(cycle(4))
        ks = cov.cliques_containing(1)
        assert all(1 in cov.cliques[k] for k in ks) and ks

    def test_json_round_structure(self):
        cov = chordal_extend(cycle(4))
        d = json.loads(cover_to_json(cov))
        assert d["n"] == 4 and d["chordal"]
        assert sorted(tuple(c) for c in d["cliques"]) == [
            tuple(v + 1 for v in c) for c in cov.cliques]
