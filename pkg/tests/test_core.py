"""Core data structures: cone kinds, symmetric storage, svec, problems."""

import dataclasses

import numpy as np
import pytest

from sdpbounds.core import (
    Block,
    ConeKind,
    ConicProblem,
    DD,
    DIAGONAL,
    FREE,
    FREEMAT,
    NONNEG,
    PSD,
    SDD,
    SOC,
    SymMatrix,
    ZERO,
    ZEROMAT,
    block_fw2,
    dualize,
    factor_width,
    smat,
    smat_array,
    svec,
    svec_array,
    svec_dim,
    svec_index,
    triu_pairs,
    uniform_partition,
)


class TestConeKind:
    def test_singletons(self):
        assert PSD.tag == "psd" and PSD.is_matrix and PSD.is_primitive
        assert DD.tag == "dd" and DD.is_matrix and not DD.is_primitive
        assert not NONNEG.is_matrix and NONNEG.is_primitive

    def test_factor_width(self):
        k = factor_width(3)
        assert k.tag == "fw" and k.k == 3 and not k.dual
        kd = factor_width(3, dual=True)
        assert kd.dual

    def test_fw_requires_width(self):
        with pytest.raises(ValueError):
            ConeKind("fw")

    def test_dual_only_for_structured(self):
        with pytest.raises(ValueError):
            ConeKind("psd", dual=True)
        with pytest.raises(ValueError):
            ConeKind("nonneg", dual=True)

    def test_block_fw2_partition(self):
        k = block_fw2([(0, 1), (2,)])
        assert k.tag == "bfw2"
        assert k.partition == ((0, 1), (2,))
        k.validate_for_dim(3)
        with pytest.raises(ValueError):
            k.validate_for_dim(4)  # vertex 3 uncovered

    def test_bfw2_uniform_marker_needs_resolution(self):
        k = ConeKind("bfw2", k=2)
        assert k.partition is None
        with pytest.raises(ValueError):
            k.validate_for_dim(4)

    def test_uniform_partition(self):
        assert uniform_partition(5, 2) == ((0, 1), (2, 3), (4,))
        assert uniform_partition(4, 2) == ((0, 1), (2, 3))
        assert uniform_partition(3, 7) == ((0, 1, 2),)

    def test_fw_width_bounds(self):
        with pytest.raises(ValueError):
            factor_width(0)
        factor_width(2).validate_for_dim(5)
        with pytest.raises(ValueError):
            factor_width(6).validate_for_dim(5)

    def test_str_marks_dual(self):
        assert str(DD) == "dd"
        assert str(dataclasses.replace(DD, dual=True)) == "dd*"


class TestSymMatrix:
    def test_roundtrip_dense(self, rng):
        A = rng.normal(size=(5, 5))
        A = 0.5 * (A + A.T)
        M = SymMatrix.from_dense(A)
        assert np.allclose(M.to_dense(), A)

    def test_from_entries_rejects_duplicates(self):
        with pytest.raises(ValueError):
            SymMatrix.from_entries(3, [(0, 1, 1.0), (1, 0, 2.0)])

    def test_entries_upper_triangle(self, rng):
        A = rng.normal(size=(4, 4))
        M = SymMatrix.from_dense(0.5 * (A + A.T))
        for i, j, v in M.entries():
            assert i <= j

    def test_inner_product_matches_trace(self, rng):
        A = rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 4))
        A, B = 0.5 * (A + A.T), 0.5 * (B + B.T)
        Ma, Mb = SymMatrix.from_dense(A), SymMatrix.from_dense(B)
        assert Ma.inner(Mb) == pytest.approx(np.trace(A @ B), rel=1e-12)

    def test_lower_entries_normalized(self):
        M = SymMatrix.from_entries(3, [(1, 0, 2.0)])
        assert list(M.entries()) == [(0, 1, 2.0)]
        D = M.to_dense()
        assert D[0, 1] == D[1, 0] == 2.0


class TestSvec:
    def test_dim(self):
        assert svec_dim(4) == 10

    def test_index_order_matches_triu(self):
        n = 5
        rows, cols = triu_pairs(n)
        for t, (i, j) in enumerate(zip(rows, cols)):
            assert svec_index(n, int(i), int(j)) == t

    def test_isometry(self, rng):
        A = rng.normal(size=(6, 6))
        A = 0.5 * (A + A.T)
        B = rng.normal(size=(6, 6))
        B = 0.5 * (B + B.T)
        va, vb = svec_array(A), svec_array(B)
        assert float(va @ vb) == pytest.approx(np.trace(A @ B), rel=1e-12)

    def test_roundtrip(self, rng):
        A = rng.normal(size=(5, 5))
        A = 0.5 * (A + A.T)
        assert np.allclose(smat_array(svec_array(A)), A)

    def test_symmatrix_svec_roundtrip(self, rng):
        A = rng.normal(size=(4, 4))
        M = SymMatrix.from_dense(0.5 * (A + A.T))
        assert np.allclose(smat(svec(M)).to_dense(), M.to_dense())


class TestConicProblem:
    def _problem(self):
        C = SymMatrix.from_dense(np.diag([1.0, 2.0, 3.0]))
        A1 = SymMatrix.from_dense(np.eye(3))
        return ConicProblem("primal", C, [A1], np.array([1.0]),
                            [Block(2, PSD), Block(1, NONNEG)])

    def test_block_offsets(self):
        p = self._problem()
        assert list(p.block_offsets()) == [0, 2, 3]
        assert p.block_of_index(0) == 0
        assert p.block_of_index(2) == 1

    def test_n_m(self):
        p = self._problem()
        assert p.n == 3 and p.m == 1

    def test_dimension_validation(self):
        C = SymMatrix.from_dense(np.eye(3))
        with pytest.raises(ValueError):
            ConicProblem("primal", C, [], np.zeros(0), [Block(2, PSD)])

    def test_b_length_validation(self):
        C = SymMatrix.from_dense(np.eye(2))
        A1 = SymMatrix.from_dense(np.eye(2))
        with pytest.raises(ValueError):
            ConicProblem("primal", C, [A1], np.zeros(2), [Block(2, PSD)])

    def test_is_primitive(self):
        p = self._problem()
        assert p.is_primitive()
        q = p.with_blocks([Block(2, DD), Block(1, NONNEG)])
        assert not q.is_primitive()

    def test_with_blocks_keeps_data(self):
        p = self._problem()
        q = p.with_blocks([Block(2, SDD), Block(1, NONNEG)])
        assert np.allclose(q.C.to_dense(), p.C.to_dense())
        assert len(q.As) == len(p.As)
        assert np.array_equal(q.b, p.b)
        assert q.blocks[0].kind == SDD

    def test_vector_kind_dimension_guard(self):
        C = SymMatrix.from_dense(np.eye(2))
        A1 = SymMatrix.from_dense(np.eye(2))
        with pytest.raises(ValueError):
            ConicProblem("primal", C, [A1], np.ones(1),
                         [Block(2, SOC), Block(0, PSD)])


class TestDualize:
    def test_swaps_form(self):
        C = SymMatrix.from_dense(np.eye(2))
        p = ConicProblem("primal", C, [C], np.ones(1), [Block(2, PSD)])
        d = dualize(p)
        assert d.form == "dual"
        assert dualize(d).form == "primal"

    def test_kind_swaps(self):
        C = SymMatrix.from_dense(np.eye(4))
        p = ConicProblem("primal", C, [C], np.ones(1),
                         [Block(2, ZEROMAT), Block(2, FREEMAT)])
        d = dualize(p)
        assert d.blocks[0].kind == FREEMAT
        assert d.blocks[1].kind == ZEROMAT

    def test_vector_kind_swaps(self):
        C = SymMatrix.from_dense(np.eye(2))
        p = ConicProblem("primal", C, [C], np.ones(1),
                         [Block(1, ZERO), Block(1, FREE)])
        d = dualize(p)
        assert d.blocks[0].kind == FREE
        assert d.blocks[1].kind == ZERO

    def test_structured_kind_dual_flag_flips(self):
        C = SymMatrix.from_dense(np.eye(2))
        p = ConicProblem("primal", C, [C], np.ones(1), [Block(2, DD)])
        d = dualize(p)
        assert d.blocks[0].kind.tag == "dd" and d.blocks[0].kind.dual

    def test_self_dual_cones_fixed(self):
        C = SymMatrix.from_dense(np.eye(3))
        p = ConicProblem("primal", C, [C], np.ones(1),
                         [Block(2, PSD), Block(1, NONNEG)])
        d = dualize(p)
        assert d.blocks[0].kind is PSD
        assert d.blocks[1].kind is NONNEG

    def test_data_preserved(self):
        C = SymMatrix.from_dense(np.eye(2))
        p = ConicProblem("primal", C, [C], np.ones(1), [Block(2, PSD)])
        d = dualize(p)
        assert np.allclose(d.C.to_dense(), p.C.to_dense())
        assert np.array_equal(d.b, p.b)


class TestDiagonalKind:
    def test_diagonal_is_structured_matrix(self):
        assert DIAGONAL.is_matrix and not DIAGONAL.is_primitive

    def test_diagonal_dual_allowed(self):
        kd = dataclasses.replace(DIAGONAL, dual=True)
        assert kd.dual
