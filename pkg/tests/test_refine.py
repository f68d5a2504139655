"""Tightness certification and change-of-basis refinement."""

import numpy as np
import pytest

from sdpbounds.core import DD, PSD, SDD, OPTIMAL
from sdpbounds.decomp import assign_cones, build_completion, build_construction
from sdpbounds.refine import BasisSet, certify, cob_run, cob_step
from sdpbounds.solver import SolverSettings

from conftest import random_chordal_cover, trace_problem

SET = SolverSettings(eps=1e-7, max_iter=120000)


@pytest.fixture
def instance(rng):
    cover = random_chordal_cover(rng, 8)
    p, Cd = trace_problem(rng, 8, pattern=cover.graph)
    return cover, p, float(np.linalg.eigvalsh(Cd).min())


class TestCertify:
    def test_exact_decomposition_certified_tight(self, instance):
        cover, p, exact = instance
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        sol = dec.solve(SET)
        rep = certify(dec.dual_view(), sol, cover, "completion", tol=1e-5)
        assert rep.tight
        assert abs(sol.objective - exact) <= 1e-5 * (1 + abs(exact))

    def test_gapped_bound_not_tight(self, instance):
        cover, p, exact = instance
        dec = build_completion(p, assign_cones(cover, DD, "completion"))
        sol = dec.solve(SET)
        assert sol.objective - exact > 1e-2  # genuine gap on this instance
        rep = certify(dec.dual_view(), sol, cover, "completion", tol=1e-5)
        assert not rep.tight
        assert rep.worst < -1e-3

    def test_restrict_keeps_slack_cliques_psd(self, rng):
        # restrict style constrains the slack clique by clique, so every
        # clique eigenvalue clears zero even when the bound is not tight
        n = 8
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        from sdpbounds.core import Block, ConicProblem, SymMatrix
        p = ConicProblem("dual", SymMatrix.from_dense(Cd),
                         [SymMatrix.identity(n)], np.array([1.0]),
                         [Block(n, PSD)])
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        assert dec.style == "restrict"
        sol = dec.solve(SET)
        rep = certify(dec.dual_view(), sol, cover, "completion", tol=1e-5)
        assert all(e >= -1e-5 for _, e in rep.clique_eigs)

    def test_construction_side(self, rng):
        n = 8
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        from sdpbounds.core import Block, ConicProblem, SymMatrix
        p = ConicProblem("dual", SymMatrix.from_dense(Cd),
                         [SymMatrix.identity(n)], np.array([1.0]),
                         [Block(n, PSD)])
        dec = build_construction(p, assign_cones(cover, PSD, "construction"))
        sol = dec.solve(SET)
        rep = certify(dec.dual_view(), sol, cover, "construction", tol=1e-4)
        assert rep.tight

    def test_summary_text(self, instance):
        cover, p, _ = instance
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        sol = dec.solve(SET)
        rep = certify(dec.dual_view(), sol, cover, "completion", tol=1e-5)
        assert "tight" in rep.summary()

    def test_validation(self, instance):
        cover, p, _ = instance
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        sol = dec.solve(SET)
        with pytest.raises(ValueError):
            certify(dec.dual_view(), sol, cover, "sideways")
        small = random_chordal_cover(np.random.default_rng(0), 5)
        with pytest.raises(ValueError):
            certify(dec.dual_view(), sol, small, "completion")


class TestBasisSet:
    def test_identity(self, instance):
        cover, p, _ = instance
        dec = build_completion(p, assign_cones(cover, DD, "completion"))
        basis = BasisSet.identity(dec)
        assert basis.is_identity
        assert len(basis.mats) == len(dec.clique_blocks)

    def test_psd_cliques_keep_identity_basis(self, instance):
        cover, p, _ = instance
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        _, _, nxt = cob_step(dec, BasisSet.identity(dec), SET)
        assert nxt.is_identity


class TestCobStep:
    def test_first_round_matches_plain_solve(self, instance):
        cover, p, _ = instance
        dec = build_completion(p, assign_cones(cover, DD, "completion"))
        plain = dec.solve(SET)
        mapped, sol_dec, _ = cob_step(dec, BasisSet.identity(dec), SET)
        assert sol_dec.status == OPTIMAL
        assert abs(dec.objective_value(sol_dec) - plain.objective) <= 1e-9

    def test_mapped_solution_stays_feasible_after_one_round(self, instance):
        cover, p, _ = instance
        dec = build_completion(p, assign_cones(cover, DD, "completion"))
        _, _, basis = cob_step(dec, BasisSet.identity(dec), SET)
        mapped, sol_dec, _ = cob_step(dec, basis, SET)
        assert sol_dec.status == OPTIMAL
        X = mapped.block_x[0]
        r = [float(np.tensordot(A.to_dense(), X)) - bi
             for A, bi in zip(p.As, p.b)]
        assert np.abs(r).max() <= 1e-4


class TestCobRun:
    def test_upper_bounds_weakly_decrease(self, instance):
        cover, p, exact = instance
        dec = build_completion(p, assign_cones(cover, DD, "completion"))
        res = cob_run(dec, rounds=6, settings=SET)
        opt = [b for b, s in zip(res.bounds, res.statuses) if s == OPTIMAL]
        assert len(opt) >= 2
        tol = 2e-6 * (1 + abs(opt[0]))
        for a, b in zip(opt, opt[1:]):
            assert b <= a + tol
        assert res.best_bound <= opt[0] + tol
        # refinement never crosses the exact optimum from above
        assert res.best_bound >= exact - 1e-4

    def test_lower_bounds_weakly_increase(self, rng):
        n = 8
        cover = random_chordal_cover(rng, n)
        _, Cd = trace_problem(rng, n, pattern=cover.graph)
        from sdpbounds.core import Block, ConicProblem, SymMatrix
        p = ConicProblem("dual", SymMatrix.from_dense(Cd),
                         [SymMatrix.identity(n)], np.array([1.0]),
                         [Block(n, PSD)])
        dec = build_construction(p, assign_cones(cover, SDD, "construction"))
        res = cob_run(dec, rounds=5, settings=SET)
        opt = [b for b, s in zip(res.bounds, res.statuses) if s == OPTIMAL]
        assert len(opt) >= 2
        tol = 2e-6 * (1 + abs(opt[0]))
        for a, b in zip(opt, opt[1:]):
            assert b >= a - tol
        exact = float(np.linalg.eigvalsh(Cd).min())
        assert res.best_bound <= exact + 1e-4

    def test_psd_assignment_stalls_immediately(self, instance):
        cover, p, _ = instance
        dec = build_completion(p, assign_cones(cover, PSD, "completion"))
        res = cob_run(dec, rounds=4, settings=SET)
        spread = max(res.bounds) - min(res.bounds)
        assert spread <= 1e-5 * (1 + abs(res.bounds[0]))
        assert res.stalled

    def test_refinement_actually_improves_dd(self, instance):
        cover, p, exact = instance
        dec = build_completion(p, assign_cones(cover, DD, "completion"))
        res = cob_run(dec, rounds=8, settings=SET)
        assert res.best_bound < res.bounds[0] - 1e-3
