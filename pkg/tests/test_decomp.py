"""Clique decomposition styles, bound directions, and solution mapping."""

import numpy as np
import pytest

from sdpbounds.core import (
    Block,
    ConicProblem,
    DD,
    NONNEG,
    OPTIMAL,
    PSD,
    SDD,
    SymMatrix,
    factor_width,
)
from sdpbounds.decomp import (
    ConeAssignment,
    assign_cones,
    build_completion,
    build_construction,
    lower_problem,
    recover_entries,
)
from sdpbounds.solver import SolverSettings, solve
from sdpbounds.sparsity import PatternGraph, chordal_extend

from conftest import random_chordal_cover, trace_problem

SET = SolverSettings(eps=1e-7, max_iter=120000)
DUAL_DD = DD.dual_kind()
DUAL_SDD = SDD.dual_kind()


def chordal_instance(rng, n=8):
    cover = random_chordal_cover(rng, n)
    p, Cd = trace_problem(rng, n, pattern=cover.graph)
    return cover, p, Cd


def dual_margin_problem(Cd):
    """max y  s.t.  C - y I in the block cone; optimum lambda_min(C)."""
    n = Cd.shape[0]
    return ConicProblem("dual", SymMatrix.from_dense(Cd),
                        [SymMatrix.identity(n)], np.array([1.0]),
                        [Block(n, PSD)])


class TestAssignCones:
    def test_threshold_zero_uses_base_everywhere(self, rng):
        cover = random_chordal_cover(rng, 8)
        asg = assign_cones(cover, DD, "completion")
        assert all(k.tag == "dd" for k in asg.kinds)

    def test_large_threshold_keeps_psd(self, rng):
        cover = random_chordal_cover(rng, 8)
        asg = assign_cones(cover, DD, "completion", threshold=10**6)
        assert all(k.tag == "psd" for k in asg.kinds)

    def test_mixed_threshold(self, rng):
        cover = random_chordal_cover(rng, 12, p_edge=0.4)
        t = int(np.median(cover.sizes))
        asg = assign_cones(cover, DD, "completion", threshold=t)
        for clq, kind in zip(cover.cliques, asg.kinds):
            assert kind.tag == ("psd" if len(clq) <= t else "dd")

    def test_fw_width_clamped(self, rng):
        cover = random_chordal_cover(rng, 8)
        asg = assign_cones(cover, factor_width(4), "completion")
        for clq, kind in zip(cover.cliques, asg.kinds):
            if kind.tag == "fw":
                assert kind.k <= len(clq)

    def test_with_kind_replaces_single_clique(self, rng):
        cover = random_chordal_cover(rng, 8)
        asg = assign_cones(cover, DD, "completion")
        asg2 = asg.with_kind(0, PSD)
        assert asg2.kinds[0].tag == "psd"
        assert asg2.kinds[1:] == asg.kinds[1:]

    def test_validation(self, rng):
        cover = random_chordal_cover(rng, 6)
        with pytest.raises(ValueError):
            ConeAssignment(cover, (PSD,), "completion")
        with pytest.raises(ValueError):
            ConeAssignment(cover, tuple(NONNEG for _ in cover.cliques),
                           "completion")
        with pytest.raises(ValueError):
            assign_cones(cover, PSD, "sideways")


class TestEntryStyle:
    def test_psd_completion_is_exact(self, rng):
        cover, p, Cd = chordal_instance(rng)
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        assert dec.style == "entry" and not dec.dualized
        sol = dec.solve(SET)
        assert sol.status == OPTIMAL
        target = float(np.linalg.eigvalsh(Cd).min())
        assert abs(sol.objective - target) <= 2e-5 * (1 + abs(target))

    def test_bound_ordering_across_cones(self, rng):
        cover, p, Cd = chordal_instance(rng)
        target = float(np.linalg.eigvalsh(Cd).min())
        vals = {}
        for kind in (DUAL_DD, DUAL_SDD, PSD, SDD, DD):
            dec = build_completion(p, assign_cones(cover, kind, "completion"))
            sol = dec.solve(SET)
            assert sol.status == OPTIMAL, str(kind)
            vals[str(kind)] = sol.objective
        tol = 5e-5 * (1 + abs(target))
        assert vals["dd*"] <= vals["sdd*"] + tol
        assert vals["sdd*"] <= target + tol
        assert target <= vals["sdd"] + tol
        assert vals["sdd"] <= vals["dd"] + tol

    def test_bound_directions_recorded(self, rng):
        cover, p, _ = chordal_instance(rng)
        up = build_completion(p, assign_cones(cover, DD, "completion"))
        lo = build_completion(p, assign_cones(cover, DUAL_DD, "completion"))
        assert up.bound_direction == "upper"
        assert lo.bound_direction == "lower"

    def test_mapped_solution_feasible(self, rng):
        cover, p, _ = chordal_instance(rng)
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        sol = dec.solve(SET)
        X = sol.block_x[0]
        r = [float(np.tensordot(A.to_dense(), X)) - bi
             for A, bi in zip(p.As, p.b)]
        assert np.abs(r).max() <= 1e-4
        assert abs(sol.obj_primal - sol.objective) <= 1e-12
        assert sol.y.shape == (p.m,)

    def test_recover_entries_matches_low_level_solve(self, rng):
        cover, p, _ = chordal_instance(rng, n=6)
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        low = lower_problem(dec.problem)
        sol_dec = low.map_solution(solve(low.problem, SET))
        M = recover_entries(dec, sol_dec)
        mapped = dec.map_solution(sol_dec)
        np.testing.assert_allclose(M.to_dense(), mapped.block_x[0],
                                   atol=1e-10)

    def test_dense_data_outside_cover_raises(self, rng):
        p, _ = trace_problem(rng, 5)  # dense objective
        cover = chordal_extend(PatternGraph(5, [(0, 1)]))
        with pytest.raises(ValueError):
            build_completion(p, assign_cones(cover, PSD, "completion"))

    def test_vector_blocks_pass_through(self, rng):
        # psd block (3) with chain pattern plus a nonneg block (2)
        pat = PatternGraph(5, [(0, 1), (1, 2)])
        cover = chordal_extend(pat)
        ent = [(0, 0, 1.2), (1, 1, 0.8), (2, 2, 1.5), (0, 1, -0.4),
               (1, 2, 0.3), (3, 3, 2.0), (4, 4, 0.5)]
        C = SymMatrix.from_entries(5, ent)
        A1 = SymMatrix.from_entries(5, [(i, i, 1.0) for i in range(3)])
        A2 = SymMatrix.from_entries(5, [(3, 3, 1.0), (4, 4, 1.0)])
        p = ConicProblem("primal", C, [A1, A2], np.array([1.0, 1.0]),
                         [Block(3, PSD), Block(2, NONNEG)])
        base = solve(p, SET).objective
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        sol = dec.solve(SET)
        assert sol.status == OPTIMAL
        assert abs(sol.objective - base) <= 2e-5 * (1 + abs(base))


class TestRestrictStyle:
    def test_upper_bounds_ordered(self, rng):
        n = 8
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        p = dual_margin_problem(Cd)
        exact = float(np.linalg.eigvalsh(Cd).min())
        vals = {}
        for kind in (PSD, DUAL_SDD, DUAL_DD):
            dec = build_completion(p, assign_cones(cover, kind, "completion"))
            assert dec.style == "restrict"
            assert dec.bound_direction == "upper"
            sol = dec.solve(SET)
            assert sol.status == OPTIMAL
            vals[str(kind)] = sol.objective
        tol = 5e-5 * (1 + abs(exact))
        assert exact <= vals["psd"] + tol
        assert vals["psd"] <= vals["sdd*"] + tol
        assert vals["sdd*"] <= vals["dd*"] + tol

    def test_subset_on_dual_form_rejected(self, rng):
        cover = random_chordal_cover(rng, 6)
        _, Cd = trace_problem(rng, 6, pattern=cover.graph)
        p = dual_margin_problem(Cd)
        with pytest.raises(ValueError):
            build_completion(p, assign_cones(cover, DD, "completion"))

    def test_mapped_slack_matches_data(self, rng):
        n = 6
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        p = dual_margin_problem(Cd)
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        sol = dec.solve(SET)
        Z = sol.block_z[0]
        want = Cd - sol.y[0] * np.eye(n)
        np.testing.assert_allclose(Z, want, atol=1e-10)


class TestConstructStyle:
    def test_psd_construction_exact_on_chordal(self, rng):
        n = 8
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        p = dual_margin_problem(Cd)
        dec = build_construction(p, assign_cones(cover, PSD, "construction"))
        assert dec.style == "construct" and not dec.dualized
        sol = dec.solve(SET)
        assert sol.status == OPTIMAL
        exact = float(np.linalg.eigvalsh(Cd).min())
        assert abs(sol.objective - exact) <= 2e-5 * (1 + abs(exact))

    def test_subset_lower_superset_upper(self, rng):
        n = 8
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        p = dual_margin_problem(Cd)
        exact = float(np.linalg.eigvalsh(Cd).min())
        tol = 5e-5 * (1 + abs(exact))
        lows = {}
        for kind in (DD, SDD):
            dec = build_construction(p, assign_cones(cover, kind,
                                                     "construction"))
            assert dec.bound_direction == "lower"
            sol = dec.solve(SET)
            assert sol.status == OPTIMAL
            lows[str(kind)] = sol.objective
        assert lows["dd"] <= lows["sdd"] + tol
        assert lows["sdd"] <= exact + tol
        up = build_construction(p, assign_cones(cover, DUAL_DD,
                                                "construction"))
        assert up.bound_direction == "upper"
        sol = up.solve(SET)
        assert sol.status == OPTIMAL and sol.objective >= exact - tol

    def test_primal_input_dualized_lower_bound(self, rng):
        cover, p, Cd = chordal_instance(rng)
        dec = build_construction(p, assign_cones(cover, DD, "construction"))
        assert dec.dualized
        sol = dec.solve(SET)
        assert sol.status == OPTIMAL
        exact = float(np.linalg.eigvalsh(Cd).min())
        assert sol.objective <= exact + 5e-5 * (1 + abs(exact))

    def test_dualized_superset_rejected(self, rng):
        cover, p, _ = chordal_instance(rng)
        with pytest.raises(ValueError):
            build_construction(p, assign_cones(cover, DUAL_DD,
                                               "construction"))

    def test_mixed_orientation_rejected(self, rng):
        cover = random_chordal_cover(rng, 6)
        if len(cover.cliques) < 2:
            pytest.skip("cover has one clique")
        asg = assign_cones(cover, DD, "construction").with_kind(0, DUAL_DD)
        _, Cd = trace_problem(rng, 6, pattern=cover.graph)
        with pytest.raises(ValueError):
            build_construction(dual_margin_problem(Cd), asg)

    def test_mapped_slack_assembles_from_cliques(self, rng):
        n = 6
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        p = dual_margin_problem(Cd)
        dec = build_construction(p, assign_cones(cover, PSD, "construction"))
        sol = dec.solve(SET)
        want = Cd - sol.y[0] * np.eye(n)
        np.testing.assert_allclose(sol.block_z[0], want, atol=2e-4)


class TestMixedAssignment:
    def test_partial_psd_between_pure_bounds(self, rng):
        cover, p, _ = chordal_instance(rng, n=10)
        if len(cover.cliques) < 2:
            pytest.skip("cover has one clique")
        asg_dd = assign_cones(cover, DD, "completion")
        big = int(np.argmax(cover.sizes))
        asg_mix = asg_dd.with_kind(big, PSD)
        asg_psd = assign_cones(cover, PSD, "completion")
        v = {}
        for name, asg in (("dd", asg_dd), ("mix", asg_mix),
                          ("psd", asg_psd)):
            sol = build_completion(p, asg).solve(SET)
            assert sol.status == OPTIMAL
            v[name] = sol.objective
        tol = 5e-5 * (1 + abs(v["psd"]))
        assert v["psd"] <= v["mix"] + tol
        assert v["mix"] <= v["dd"] + tol


class TestLowerProblem:
    def test_primitive_problem_unchanged_value(self, rng):
        p, Cd = trace_problem(rng, 5)
        low = lower_problem(p)
        sol = low.map_solution(solve(low.problem, SET))
        assert abs(sol.objective - np.linalg.eigvalsh(Cd).min()) <= 1e-5

    def test_structured_block_lowered_to_primitives(self, rng):
        p, _ = trace_problem(rng, 4)
        q = p.with_blocks([Block(4, DD)])
        low = lower_problem(q)
        assert all(b.kind.is_primitive for b in low.problem.blocks)
        sol = low.map_solution(solve(low.problem, SET))
        assert sol.status == OPTIMAL
        # mapped block values live in the original shape
        assert np.asarray(sol.block_x[0]).shape == (4, 4)

    def test_dd_lowering_matches_direct_lp(self, rng):
        # min <C, X>  s.t.  tr X = 1, X dd: compare against the
        # extreme-ray linear program over dd generators
        from scipy.optimize import linprog
        from sdpbounds.cones import reformulate
        from sdpbounds.core import svec_array

        n = 4
        p, Cd = trace_problem(rng, n)
        q = p.with_blocks([Block(n, DD)])
        low = lower_problem(q)
        sol = low.map_solution(solve(low.problem, SET))

        ref = reformulate(n, DD)
        G = ref.matrix.toarray()
        cvec = svec_array(Cd) @ G
        avec = svec_array(np.eye(n)) @ G
        res = linprog(cvec, A_eq=avec[None, :], b_eq=[1.0],
                      bounds=[(0, None)] * G.shape[1], method="highs")
        assert res.success
        assert abs(sol.objective - res.fun) <= 1e-5 * (1 + abs(res.fun))


class TestDeterminism:
    def test_decomposed_solve_bitwise_stable(self, rng):
        cover, p, _ = chordal_instance(rng, n=6)
        dec = build_completion(p, assign_cones(cover, DD, "completion"))
        s1 = dec.solve(SET)
        s2 = dec.solve(SET)
        assert s1.objective == s2.objective
        assert np.array_equal(s1.y, s2.y)
