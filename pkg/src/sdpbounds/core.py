"""Problem containers: symmetric matrix data, cone tags, conic programs.

A conic program is stored in one of two forms over the same data (C, A_1..A_m, b):

    primal:  min  <C, X>   s.t.  <A_i, X> = b_i,  X in K
    dual:    max  b'y      s.t.  C - sum_i y_i A_i = Z,  Z in K

K is a product of blocks. Matrix-cone blocks (psd, dd, sdd, ...) interpret their
index range as a dense symmetric matrix; vector-cone blocks (nonneg, soc, ...)
live on the diagonal entries of their range, which is also how diagonal/LP blocks
work in the SDPA file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

# ---------------------------------------------------------------------------
# cone kinds

# vector kinds: the block of dimension d is a vector x in R^d on the diagonal
VECTOR_TAGS = ("zero", "free", "nonneg", "soc", "rsoc")
# matrix kinds: the block of dimension d is a symmetric d x d matrix
MATRIX_TAGS = ("psd", "freemat", "zeromat", "diagonal", "dd", "sdd", "fw", "bfw2")
PRIMITIVE_TAGS = ("zero", "free", "nonneg", "soc", "rsoc", "psd", "freemat", "zeromat")


@dataclass(frozen=True)
class ConeKind:
    """Tag for one variable block.

    `dual=True` marks the dual (superset) orientation of a structured matrix
    cone, e.g. ConeKind("dd", dual=True) is the cone of matrices with all
    diagonally-dominant pairings nonnegative, a superset of the PSD cone.
    """

    tag: str
    k: int | None = None                      # factor width, for tag == "fw"
    partition: tuple[tuple[int, ...], ...] | None = None   # for tag == "bfw2", 0-based local
    dual: bool = False

    def __post_init__(self):
        if self.tag not in VECTOR_TAGS + MATRIX_TAGS:
            raise ValueError(f"unknown cone tag {self.tag!r}")
        if self.tag == "fw" and (self.k is None or self.k < 1):
            raise ValueError("fw kind needs k >= 1")
        if self.tag == "bfw2" and not self.partition and not (self.k and self.k >= 1):
            # k alone marks a uniform partition into blocks of size k, to be
            # resolved against a concrete dimension when assigned
            raise ValueError("bfw2 kind needs a partition or a block size k")
        if self.dual and self.tag in PRIMITIVE_TAGS:
            raise ValueError("dual flag is only for structured matrix kinds")

    @property
    def is_matrix(self) -> bool:
        return self.tag in MATRIX_TAGS

    @property
    def is_primitive(self) -> bool:
        return self.tag in PRIMITIVE_TAGS

    def dual_kind(self) -> "ConeKind":
        """The dual cone's kind. Self-dual primitives map to themselves."""
        table = {"zero": "free", "free": "zero",
                 "zeromat": "freemat", "freemat": "zeromat"}
        if self.tag in table:
            return ConeKind(table[self.tag])
        if self.tag in ("nonneg", "soc", "rsoc", "psd"):
            return self
        # structured matrix cones: flip orientation
        return replace(self, dual=not self.dual)

    def validate_for_dim(self, dim: int) -> None:
        if self.tag == "fw" and not 1 <= self.k <= dim:
            raise ValueError(f"factor width k={self.k} out of range for dim {dim}")
        if self.tag == "bfw2":
            if self.partition is None:
                raise ValueError("bfw2 partition is unresolved; resolve the "
                                 "uniform block size against the dimension first")
            seen = sorted(i for blk in self.partition for i in blk)
            if seen != list(range(dim)):
                raise ValueError("bfw2 partition must tile the block indices exactly once")
        if self.tag in ("soc", "rsoc") and dim < (3 if self.tag == "rsoc" else 2):
            raise ValueError(f"{self.tag} block needs dim >= {3 if self.tag == 'rsoc' else 2}")

    def __str__(self) -> str:
        s = self.tag
        if self.tag == "fw":
            s += str(self.k)
        if self.dual:
            s += "*"
        return s


ZERO = ConeKind("zero")
FREE = ConeKind("free")
NONNEG = ConeKind("nonneg")
SOC = ConeKind("soc")
RSOC = ConeKind("rsoc")
PSD = ConeKind("psd")
FREEMAT = ConeKind("freemat")
ZEROMAT = ConeKind("zeromat")
DIAGONAL = ConeKind("diagonal")
DD = ConeKind("dd")
SDD = ConeKind("sdd")


def factor_width(k: int, dual: bool = False) -> ConeKind:
    return ConeKind("fw", k=k, dual=dual)


def block_fw2(partition: Sequence[Sequence[int]], dual: bool = False) -> ConeKind:
    part = tuple(tuple(int(i) for i in blk) for blk in partition)
    return ConeKind("bfw2", partition=part, dual=dual)


def uniform_partition(dim: int, size: int) -> tuple[tuple[int, ...], ...]:
    """Contiguous partition of range(dim) into blocks of `size`, last one short."""
    return tuple(tuple(range(a, min(a + size, dim))) for a in range(0, dim, size))


# ---------------------------------------------------------------------------
# symmetric matrices in upper-triangle triplet form


class SymMatrix:
    """Sparse symmetric matrix; stores only entries with row <= col, 0-based.

    Duplicate (row, col) triplets raise instead of being summed, which catches
    assembly bugs early. Instances are treated as immutable.
    """

    __slots__ = ("n", "rows", "cols", "vals")

    def __init__(self, n: int, rows=(), cols=(), vals=()):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("triplet arrays must have equal length")
        if rows.size:
            if rows.min() < 0 or cols.max() >= n:
                raise ValueError(f"index out of range for n={n}")
            if np.any(rows > cols):
                raise ValueError("entries must satisfy row <= col")
            order = np.lexsort((cols, rows))
            rows, cols, vals = rows[order], cols[order], vals[order]
            key = rows * n + cols
            if np.any(np.diff(key) == 0):
                d = int(np.argmin(np.diff(key)))
                raise ValueError(f"duplicate entry at ({rows[d]}, {cols[d]})")
        self.n = int(n)
        self.rows = rows
        self.cols = cols
        self.vals = vals

    @classmethod
    def from_entries(cls, n: int, entries: Sequence[tuple[int, int, float]]) -> "SymMatrix":
        if not entries:
            return cls(n)
        r, c, v = zip(*entries)
        r = np.asarray(r)
        c = np.asarray(c)
        swap = r > c
        return cls(n, np.where(swap, c, r), np.where(swap, r, c), v)

    @classmethod
    def from_dense(cls, M, tol: float = 0.0) -> "SymMatrix":
        M = np.asarray(M, dtype=float)
        n = M.shape[0]
        if M.shape != (n, n) or not np.allclose(M, M.T, atol=1e-12 * (1 + np.abs(M).max(initial=0))):
            raise ValueError("from_dense expects a square symmetric array")
        iu, ju = np.triu_indices(n)
        v = M[iu, ju]
        keep = np.abs(v) > tol
        return cls(n, iu[keep], ju[keep], v[keep])

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> "SymMatrix":
        idx = np.arange(n)
        return cls(n, idx, idx, np.full(n, float(scale)))

    @classmethod
    def zeros(cls, n: int) -> "SymMatrix":
        return cls(n)

    def to_dense(self) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        M[self.rows, self.cols] = self.vals
        M[self.cols, self.rows] = self.vals
        return M

    @property
    def nnz(self) -> int:
        return self.vals.size

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for i, j, v in zip(self.rows, self.cols, self.vals):
            yield int(i), int(j), float(v)

    def inner(self, other: "SymMatrix") -> float:
        """Trace inner product <A, B> = sum_ij A_ij B_ij."""
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        return float(np.sum(self.to_dense() * other.to_dense()))

    def scaled(self, alpha: float) -> "SymMatrix":
        return SymMatrix(self.n, self.rows, self.cols, self.vals * alpha)

    def __repr__(self) -> str:
        return f"SymMatrix(n={self.n}, nnz={self.nnz})"


# ---------------------------------------------------------------------------
# svec / smat: isometric vectorization of symmetric matrices

_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def triu_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _TRIU_CACHE:
        _TRIU_CACHE[n] = np.triu_indices(n)
    return _TRIU_CACHE[n]


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def svec_index(n: int, i: int, j: int) -> int:
    """Position of entry (i, j), i <= j, in the row-major upper-triangle order."""
    if i > j:
        i, j = j, i
    return i * n - i * (i - 1) // 2 + (j - i)


_SQRT2 = np.sqrt(2.0)


def svec_array(M: np.ndarray) -> np.ndarray:
    """Map a dense symmetric matrix to R^{n(n+1)/2} with off-diagonals scaled
    by sqrt(2), so that dot(svec A, svec B) equals the trace inner product."""
    n = M.shape[0]
    iu, ju = triu_pairs(n)
    v = M[iu, ju].astype(float).copy()
    v[iu != ju] *= _SQRT2
    return v


def smat_array(v: np.ndarray, n: int | None = None) -> np.ndarray:
    if n is None:
        n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if svec_dim(n) != v.size:
        raise ValueError("svec length does not match any n")
    iu, ju = triu_pairs(n)
    M = np.zeros((n, n))
    off = iu != ju
    w = v.astype(float).copy()
    w[off] /= _SQRT2
    M[iu, ju] = w
    M[ju, iu] = w
    return M


@dataclass(frozen=True)
class SVec:
    """svec image of a symmetric matrix (off-diagonals carry a sqrt(2) factor)."""

    n: int
    data: np.ndarray


def svec(M: SymMatrix) -> SVec:
    return SVec(M.n, svec_array(M.to_dense()))


def smat(v: SVec) -> SymMatrix:
    return SymMatrix.from_dense(smat_array(v.data, v.n))


# ---------------------------------------------------------------------------
# conic problems


@dataclass(frozen=True)
class Block:
    dim: int
    kind: ConeKind

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("block dim must be >= 1")
        self.kind.validate_for_dim(self.dim)

    @property
    def width(self) -> int:
        """Number of scalar variables the block contributes (svec length for
        matrix kinds, dim for vector kinds)."""
        return svec_dim(self.dim) if self.kind.is_matrix else self.dim


class ConicProblem:
    """Conic program over block-structured symmetric data.

    form "primal":  min <C, X>  s.t.  <A_i, X> = b_i,  X in blocks
    form "dual":    max b'y     s.t.  C - sum_i y_i A_i in blocks
    """

    def __init__(self, form: str, C: SymMatrix, As: Sequence[SymMatrix],
                 b, blocks: Sequence[Block]):
        if form not in ("primal", "dual"):
            raise ValueError("form must be 'primal' or 'dual'")
        b = np.asarray(b, dtype=float).ravel()
        if len(As) != b.size:
            raise ValueError("len(As) must equal len(b)")
        n = sum(blk.dim for blk in blocks)
        if C.n != n or any(A.n != n for A in As):
            raise ValueError("C and all A_i must share the total block dimension")
        self.form = form
        self.C = C
        self.As = list(As)
        self.b = b
        self.blocks = list(blocks)
        self._validate_entries()

    @property
    def n(self) -> int:
        return sum(blk.dim for blk in self.blocks)

    @property
    def m(self) -> int:
        return self.b.size

    def block_offsets(self) -> np.ndarray:
        """Start index of each block in the global [0, n) index space."""
        return np.concatenate([[0], np.cumsum([blk.dim for blk in self.blocks])])

    def block_of_index(self, i: int) -> int:
        offs = self.block_offsets()
        return int(np.searchsorted(offs, i, side="right") - 1)

    def _validate_entries(self):
        offs = self.block_offsets()
        for name, M in [("C", self.C)] + [(f"A[{i}]", A) for i, A in enumerate(self.As)]:
            if M.nnz == 0:
                continue
            bi = np.searchsorted(offs, M.rows, side="right") - 1
            bj = np.searchsorted(offs, M.cols, side="right") - 1
            if np.any(bi != bj):
                bad = int(np.argmax(bi != bj))
                raise ValueError(
                    f"{name} entry ({M.rows[bad]}, {M.cols[bad]}) straddles blocks")
            off_diag = M.rows != M.cols
            for t in np.nonzero(off_diag)[0]:
                if not self.blocks[bi[t]].kind.is_matrix:
                    raise ValueError(
                        f"{name} has off-diagonal entry ({M.rows[t]}, {M.cols[t]}) "
                        "inside a vector-cone block")

    def is_primitive(self) -> bool:
        return all(blk.kind.is_primitive for blk in self.blocks)

    def with_blocks(self, blocks: Sequence[Block]) -> "ConicProblem":
        return ConicProblem(self.form, self.C, self.As, self.b, blocks)

    def __repr__(self) -> str:
        kinds = ",".join(str(b.kind) for b in self.blocks)
        return f"ConicProblem(form={self.form}, n={self.n}, m={self.m}, blocks=[{kinds}])"


def dualize(p: ConicProblem) -> ConicProblem:
    """Swap between the primal and dual forms over the same (C, A, b).

    The dual of  min <C,X> s.t. <A_i,X> = b_i, X in K  is
                 max b'y   s.t. C - sum y_i A_i in K*,
    and dualizing again recovers an equivalent primal. Every kind has a
    registered dual: primitives map among themselves (zero <-> free,
    zeromat <-> freemat, the rest self-dual) and structured matrix kinds
    flip orientation between subset and superset.
    """
    blocks = [Block(blk.dim, blk.kind.dual_kind()) for blk in p.blocks]
    other = "dual" if p.form == "primal" else "primal"
    return ConicProblem(other, p.C, p.As, p.b, blocks)


# ---------------------------------------------------------------------------
# solutions

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAXITER = "maxiter"
NUMERICAL_ERROR = "numerical_error"


@dataclass
class Solution:
    """Solver output.

    block_x: per-block minimization-side values (dense (d,d) arrays for matrix
        blocks, length-d vectors for vector blocks). For a dual-form problem
        this is the implicit primal variable paired with it.
    block_z: per-block slack values C - sum(y_i A_i) (the problem's own matrix
        for dual form; the dual slack for primal form).
    y: multipliers / decision vector of length m.
    obj_primal, obj_dual: minimization-side and maximization-side objectives.
    objective: optimal value in the sense of the problem as stated (the min
        value for primal form, the max value for dual form).
    """

    status: str
    y: np.ndarray
    block_x: list
    block_z: list
    obj_primal: float
    obj_dual: float
    res_primal: float
    res_dual: float
    gap: float
    iterations: int
    objective: float = float("nan")
    solve_time: float = 0.0
    certificate: dict | None = None
