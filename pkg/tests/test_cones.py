"""Structured cone memberships, certificates, splits, and reformulations."""

import numpy as np
import pytest

from sdpbounds.core import (
    DD,
    DIAGONAL,
    PSD,
    SDD,
    block_fw2,
    factor_width,
    smat_array,
    svec_array,
    svec_dim,
    uniform_partition,
)
from sdpbounds.cones import (
    clique_dd_split,
    clique_sdd_split,
    dd_extreme_decomposition,
    dd_membership,
    fw_supports,
    membership,
    reformulate,
    reformulate_dual,
    sdd_membership,
    svec_embedding,
)
from sdpbounds.sparsity import PatternGraph, chordal_extend

from conftest import (
    random_chordal_cover,
    sample_bfw2,
    sample_dd,
    sample_fw,
    sample_psd,
    sample_sdd,
)


def sdd_not_dd():
    # 2x2 psd with a small first diagonal, fails dominance in row 0
    return np.array([[1.0, 1.5], [1.5, 3.0]])


def dual_sdd_not_psd(n=3, c=-0.9):
    # constant off-diagonal c: 2x2 minors are 1 - c^2 > 0, but the
    # eigenvalue 1 + (n-1) c is negative once c < -1/(n-1)
    M = np.full((n, n), c)
    np.fill_diagonal(M, 1.0)
    return M


def patterned_dd(rng, cover, scale=1.0):
    """Diagonally dominant matrix supported on a cover's filled pattern."""
    n = cover.graph.n
    M = np.zeros((n, n))
    for a, b in cover.graph.edges:
        M[a, b] = M[b, a] = scale * rng.normal()
    for i in range(n):
        M[i, i] = np.abs(M[i]).sum() + rng.uniform(0.0, scale)
    return M


def reassemble(blocks, cover, n):
    Z = np.zeros((n, n))
    for B, c in zip(blocks, cover.cliques):
        Z[np.ix_(c, c)] += B
    return Z


class TestDDMembership:
    def test_sampled_members_pass(self, rng):
        for d in (1, 2, 5, 9):
            M = sample_dd(rng, d)
            ok, cert = dd_membership(M)
            assert ok and cert.worst >= 0

    def test_slacks_match_hand_formula(self):
        M = np.array([[3.0, -1.0, 0.5], [-1.0, 2.0, 0.0], [0.5, 0.0, 1.0]])
        ok, cert = dd_membership(M)
        assert ok
        np.testing.assert_allclose(cert.slacks, [1.5, 1.0, 0.5])

    def test_rejects_dominance_failure(self):
        ok, cert = dd_membership(sdd_not_dd())
        assert not ok and cert.worst < 0

    def test_rejects_negative_diagonal(self):
        assert not dd_membership(np.diag([1.0, -0.5]))[0]

    def test_scale_invariant(self, rng):
        M = sample_dd(rng, 6)
        assert dd_membership(1e8 * M)[0]
        assert not dd_membership(-1e8 * sdd_not_dd())[0]


class TestSDDMembership:
    def test_sampled_members_pass_with_certificate(self, rng):
        for d in (2, 4, 8):
            M = sample_sdd(rng, d)
            ok, cert = sdd_membership(M)
            assert ok
            S = M * np.outer(cert.scaling, cert.scaling)
            assert dd_membership(S, tol=1e-9)[0]

    def test_dd_is_sdd(self, rng):
        assert sdd_membership(sample_dd(rng, 5))[0]

    def test_sdd_not_dd_example(self):
        ok, cert = sdd_membership(sdd_not_dd())
        assert ok and not dd_membership(sdd_not_dd())[0]

    def test_rejects_indefinite(self):
        M = np.array([[1.0, 2.0], [2.0, 1.0]])
        assert not sdd_membership(M)[0]

    def test_zero_diagonal_row_must_vanish(self):
        assert not sdd_membership(np.array([[0.0, 1.0], [1.0, 1.0]]))[0]
        assert sdd_membership(np.zeros((3, 3)))[0]

    def test_needs_lp_scaling(self):
        # boundary member D A D whose Jacobi equilibration fails row 0;
        # only the exact scaling d = diag(D)^-1 certifies dominance
        A = np.array([[4.0, 2.0, 2.0],
                      [2.0, 2.0, 0.0],
                      [2.0, 0.0, 2.0]])
        D = np.diag([1.0, 10.0, 0.1])
        M = D @ A @ D
        assert not dd_membership(M)[0]
        ok, cert = sdd_membership(M)
        assert ok
        S = M * np.outer(cert.scaling, cert.scaling)
        assert dd_membership(S, tol=1e-9)[0]


class TestMembershipChain:
    CHAIN = [DIAGONAL, DD, SDD, PSD, factor_width(3, dual=True),
             SDD.dual_kind(), DD.dual_kind(), DIAGONAL.dual_kind()]

    def test_indicators_monotone_along_chain(self, rng):
        n = 5
        for _ in range(6):
            W = rng.normal(size=(n, n))
            W = 0.5 * (W + W.T)
            for t in (-1.0, 0.0, 0.5, 1.5, 4.0):
                M = W + t * np.eye(n)
                flags = [membership(M, k) for k in self.CHAIN]
                # once a superset admits M, every later superset must too
                for a, b in zip(flags, flags[1:]):
                    assert b or not a

    def test_samplers_agree_with_membership(self, rng):
        assert membership(sample_dd(rng, 6), DD)
        assert membership(sample_sdd(rng, 6), SDD)
        assert membership(sample_psd(rng, 6), PSD)
        assert membership(sample_fw(rng, 6, 3), factor_width(3))
        part = uniform_partition(6, 2)
        assert membership(sample_bfw2(rng, 6, 2), block_fw2(part))

    def test_fw_between_sdd_and_psd(self, rng):
        M = sample_sdd(rng, 5)
        assert membership(M, factor_width(3))
        assert not membership(dual_sdd_not_psd(5), factor_width(4))

    def test_bfw2_contains_sdd(self, rng):
        part = uniform_partition(6, 3)
        assert membership(sample_sdd(rng, 6), block_fw2(part))


class TestDualMembership:
    def test_psd_lies_in_every_dual_superset(self, rng):
        M = sample_psd(rng, 6)
        part = uniform_partition(6, 2)
        for kind in (DD, SDD, factor_width(3), block_fw2(part), DIAGONAL):
            assert membership(M, kind.dual_kind())

    def test_dual_sdd_admits_non_psd(self):
        M = dual_sdd_not_psd()
        assert membership(M, SDD.dual_kind())
        assert membership(M, factor_width(2, dual=True))
        assert membership(M, DD.dual_kind())
        assert not membership(M, PSD)

    def test_dual_dd_closed_form(self):
        M = np.array([[1.0, -0.9], [-0.9, 1.0]])
        assert membership(M, DD.dual_kind())
        M[0, 1] = M[1, 0] = -1.1
        assert not membership(M, DD.dual_kind())

    def test_dual_diagonal_only_pins_diagonal(self):
        M = np.array([[0.5, 9.0], [9.0, 0.1]])
        assert membership(M, DIAGONAL.dual_kind())
        assert not membership(np.diag([1.0, -0.1]), DIAGONAL.dual_kind())

    @pytest.mark.parametrize("kind", [DD, SDD, factor_width(3)])
    def test_pairing_nonnegative(self, rng, kind):
        """<M, N> >= 0 whenever M is in the dual cone and N in the cone."""
        n = 5
        dual = kind.dual_kind()
        samplers = {"dd": sample_dd, "sdd": sample_sdd,
                    "fw": lambda r, d: sample_fw(r, d, kind.k or 3)}
        hits = 0
        for _ in range(40):
            M = sample_psd(rng, n) + 0.4 * _sym(rng, n)
            if not membership(M, dual):
                continue
            hits += 1
            N = samplers[kind.tag](rng, n)
            ip = float(np.tensordot(M, N))
            assert ip >= -1e-9 * (1.0 + abs(ip))
        assert hits >= 5


def _sym(rng, n):
    W = rng.normal(size=(n, n))
    return 0.5 * (W + W.T)


class TestDDExtreme:
    def test_reconstruction_exact(self, rng):
        M = sample_dd(rng, 7)
        terms = dd_extreme_decomposition(M)
        R = sum(w * np.outer(v, v) for w, v in terms)
        np.testing.assert_allclose(R, M, atol=1e-12)

    def test_rays_are_extreme(self, rng):
        for w, v in dd_extreme_decomposition(sample_dd(rng, 6)):
            assert w > 0
            nz = v[v != 0]
            assert 1 <= nz.size <= 2 and set(np.abs(nz)) == {1.0}

    def test_rejects_non_member(self):
        with pytest.raises(ValueError):
            dd_extreme_decomposition(sdd_not_dd())


class TestCliqueSplits:
    def test_dd_split_blocks_and_reassembly(self, rng):
        for n in (6, 12, 20):
            cover = random_chordal_cover(rng, n)
            M = patterned_dd(rng, cover)
            blocks = clique_dd_split(M, cover)
            assert len(blocks) == len(cover.cliques)
            for B in blocks:
                assert dd_membership(B, tol=1e-12)[0]
            err = np.abs(reassemble(blocks, cover, n) - M).max()
            assert err <= 1e-10

    def test_sdd_split_blocks_and_reassembly(self, rng):
        for n in (6, 14):
            cover = random_chordal_cover(rng, n)
            D = np.diag(rng.uniform(0.2, 3.0, size=n))
            M = D @ patterned_dd(rng, cover) @ D
            blocks = clique_sdd_split(M, cover)
            for B in blocks:
                assert sdd_membership(B)[0]
            err = np.abs(reassemble(blocks, cover, n) - M).max()
            assert err <= 1e-10 * max(1.0, np.abs(M).max())

    def test_split_rejects_non_member(self, rng):
        cover = random_chordal_cover(rng, 4)
        with pytest.raises(ValueError):
            clique_dd_split(-np.eye(4), cover)

    def test_split_rejects_uncovered_entry(self):
        g = PatternGraph(3, [(0, 1)])
        cover = chordal_extend(g)
        M = np.eye(3)
        M[0, 2] = M[2, 0] = 0.1
        M[0, 0] = M[2, 2] = 2.0
        with pytest.raises(ValueError):
            clique_dd_split(M, cover)


class TestFwSupports:
    def test_all_k_subsets_for_small_n(self):
        S = fw_supports(5, 2)
        assert len(S) == 10 and all(len(s) == 2 for s in S)

    def test_k_at_least_n_single_support(self):
        assert fw_supports(4, 6) == [(0, 1, 2, 3)]

    def test_partition_pairs(self):
        part = uniform_partition(6, 2)
        S = fw_supports(6, 2, partition=part)
        assert len(S) == 3 and all(len(s) == 4 for s in S)

    def test_single_block_partition(self):
        assert fw_supports(3, 2, partition=((0, 1, 2),)) == [(0, 1, 2)]


class TestSvecEmbedding:
    def test_place_then_select_roundtrip(self, rng):
        n, S = 6, [1, 3, 4]
        E = svec_embedding(n, S)
        sub = _sym(rng, len(S))
        placed = smat_array(np.asarray(E @ svec_array(sub)).ravel(), n)
        np.testing.assert_allclose(placed[np.ix_(S, S)], sub, atol=1e-12)
        mask = np.zeros((n, n), dtype=bool)
        mask[np.ix_(S, S)] = True
        assert np.abs(placed[~mask]).max() == 0.0

    def test_transpose_selects_submatrix(self, rng):
        n, S = 5, [0, 2]
        E = svec_embedding(n, S)
        M = _sym(rng, n)
        sel = np.asarray(E.T @ svec_array(M)).ravel()
        np.testing.assert_allclose(sel, svec_array(M[np.ix_(S, S)]), atol=1e-12)


class TestReformulate:
    def rand_in_blocks(self, rng, blocks):
        """A random point of the product of primitive cone blocks."""
        parts = []
        for d, k in blocks:
            if k.tag == "psd":
                parts.append(svec_array(sample_psd(rng, d)))
            elif k.tag == "nonneg":
                parts.append(np.abs(rng.normal(size=d)))
            elif k.tag == "rsoc":
                # triple (p, q, z) describing a psd pair [[p, z/r2],[z/r2, q]]
                G = rng.normal(size=(2, 2))
                P = G @ G.T
                parts.append(np.array([P[0, 0], P[1, 1],
                                       P[0, 1] * np.sqrt(2.0)]))
            else:
                raise AssertionError(f"unexpected primitive {k}")
        return np.concatenate(parts) if parts else np.zeros(0)

    @pytest.mark.parametrize("kind", [
        DIAGONAL, DD, SDD, PSD, factor_width(3),
        block_fw2(uniform_partition(5, 2)),
    ])
    def test_generators_land_in_cone(self, rng, kind):
        n = 5
        ref = reformulate(n, kind)
        assert ref.mode == "generators"
        assert ref.matrix.shape == (svec_dim(n), ref.width)
        for _ in range(3):
            lam = self.rand_in_blocks(rng, ref.blocks)
            M = smat_array(np.asarray(ref.matrix @ lam).ravel(), n)
            assert membership(M, kind, tol=1e-7)

    def test_dd_generators_complete(self, rng):
        """Extreme decomposition supplies exact generator weights."""
        n = 4
        M = sample_dd(rng, n)
        ref = reformulate(n, DD)
        lam = np.zeros(ref.width)
        cols = {}
        c = n
        for i in range(n):
            for j in range(i + 1, n):
                cols[(i, j, 1.0)] = c
                cols[(i, j, -1.0)] = c + 1
                c += 2
        for w, v in dd_extreme_decomposition(M):
            nz = np.flatnonzero(v)
            if nz.size == 1:
                lam[nz[0]] += w
            else:
                i, j = int(nz[0]), int(nz[1])
                lam[cols[(i, j, v[i] * v[j])]] += w
        R = smat_array(np.asarray(ref.matrix @ lam).ravel(), n)
        np.testing.assert_allclose(R, M, atol=1e-12)

    @pytest.mark.parametrize("kind", [
        DIAGONAL, DD, SDD, PSD, factor_width(3),
        block_fw2(uniform_partition(5, 2)),
    ])
    def test_dual_constraints_match_membership(self, rng, kind):
        n = 5
        ref = reformulate_dual(n, kind)
        assert ref.mode == "constraints"
        dual = kind.dual_kind()
        for _ in range(8):
            M = sample_psd(rng, n, rank=3) + 0.5 * _sym(rng, n)
            want = membership(M, dual, tol=1e-9)
            got = self.constraints_hold(ref, M)
            assert want == got

    def constraints_hold(self, ref, M, tol=1e-9):
        y = np.asarray(ref.matrix @ svec_array(M)).ravel()
        at = 0
        scale = 1.0 + np.abs(M).max()
        for d, k in ref.blocks:
            w = svec_dim(d) if k.is_matrix else d
            seg = y[at:at + w]
            at += w
            if k.tag == "nonneg":
                if seg.min(initial=0.0) < -tol * scale:
                    return False
            elif k.tag == "psd":
                if np.linalg.eigvalsh(smat_array(seg, d)).min() < -tol * scale:
                    return False
            elif k.tag == "rsoc":
                p, q, z = seg
                if p < -tol * scale or q < -tol * scale \
                        or p * q < 0.5 * z * z - tol * scale * scale:
                    return False
            else:
                raise AssertionError(f"unexpected primitive {k}")
        return True

    def test_dual_mode_rejected_flags(self):
        with pytest.raises(ValueError):
            reformulate(3, DD.dual_kind())
