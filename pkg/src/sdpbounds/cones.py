"""Structured matrix cones: membership tests, splits, and reformulations.

The structured subsets of the PSD cone handled here are, in increasing order
of expressiveness,

    diagonal  <  dd  <  sdd  <  fw(k)  <  psd

where dd is the cone of symmetric diagonally dominant matrices with
nonnegative diagonal, sdd its scaled counterpart (equal to the factor-width-2
cone), fw(k) the cone of matrices expressible as a sum of PSD matrices each
supported on k indices, and bfw2(partition) the block analogue of sdd built
from pairs of partition blocks.  Each subset K comes with a superset dual
K* >= PSD obtained by dualizing the description.

Two reformulation modes translate a structured block into primitive cones:

* ``generators``: M in K  iff  svec(M) = G @ lam with lam in a product of
  primitive cones (new variables, used when the structured block sits on the
  construction / lower-bound side).
* ``constraints``: M in K* iff  H @ svec(M) lies in a product of primitive
  cones (no new variables, used on the completion / upper-bound side).

Both modes speak svec coordinates: off-diagonal entries carry a sqrt(2)
factor so that Euclidean inner products of svec vectors match trace inner
products of the matrices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .core import (
    NONNEG,
    PSD,
    RSOC,
    ConeKind,
    svec_dim,
    svec_index,
)

__all__ = [
    "DDCertificate",
    "SDDCertificate",
    "ConeReformulation",
    "dd_membership",
    "sdd_membership",
    "membership",
    "dd_extreme_decomposition",
    "clique_dd_split",
    "clique_sdd_split",
    "reformulate",
    "reformulate_dual",
    "svec_embedding",
    "fw_supports",
]


# ---------------------------------------------------------------------------
# membership tests with certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DDCertificate:
    """Row slacks s_i = M_ii - sum_{j != i} |M_ij| of a dominance test."""

    slacks: np.ndarray

    @property
    def worst(self) -> float:
        return float(self.slacks.min()) if self.slacks.size else 0.0


@dataclass(frozen=True)
class SDDCertificate:
    """Positive scaling d with diag(d) @ M @ diag(d) diagonally dominant."""

    scaling: np.ndarray
    slacks: np.ndarray

    @property
    def worst(self) -> float:
        return float(self.slacks.min()) if self.slacks.size else 0.0


def _as_sym_dense(M) -> np.ndarray:
    A = np.asarray(getattr(M, "to_dense", lambda: M)(), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(A, A.T, atol=1e-12 * (1.0 + np.abs(A).max(initial=0.0))):
        raise ValueError("expected a symmetric matrix")
    return 0.5 * (A + A.T)


def dd_membership(M, tol: float = 1e-12) -> tuple[bool, DDCertificate]:
    """Test diagonal dominance with nonnegative diagonal.

    Row i passes when M_ii - sum_{j != i} |M_ij| >= -tol * (1 + |M_ii|),
    a relative floor so that scaling a member never flips the verdict.
    """
    A = _as_sym_dense(M)
    d = np.diag(A)
    slacks = d - (np.abs(A).sum(axis=1) - np.abs(d))
    ok = bool(np.all(slacks >= -tol * (1.0 + np.abs(d))))
    return ok, DDCertificate(slacks)


def _offdiag_components(A: np.ndarray) -> list[list[int]]:
    """Connected components of the off-diagonal support graph."""
    n = A.shape[0]
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        comp, stack = [], [s]
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in range(n):
                if v != u and not seen[v] and A[u, v] != 0.0:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def sdd_membership(M, tol: float = 1e-9) -> tuple[bool, Optional[SDDCertificate]]:
    """Test scaled diagonal dominance, returning the scaling on success.

    M is scaled diagonally dominant iff there is d > 0 with
    diag(d) M diag(d) diagonally dominant, which holds iff the comparison
    matrix W (W_ii = M_ii, W_ij = -|M_ij|) admits d > 0 with W d >= 0.
    A Jacobi-style equilibration is tried first; if it fails, the scaling
    is found per connected component by a small linear program maximizing
    the least entry of d subject to W d >= 0, 0 <= d <= 1.
    """
    A = _as_sym_dense(M)
    n = A.shape[0]
    diag = np.diag(A)
    scale = 1.0 + np.abs(diag)
    if np.any(diag < -tol * scale):
        return False, None
    # rows with (numerically) zero diagonal must be entirely zero
    for i in range(n):
        off = np.abs(A[i]).sum() - abs(A[i, i])
        if diag[i] <= tol * scale[i] and off > tol * (1.0 + off):
            return False, None

    def verify(d: np.ndarray) -> Optional[SDDCertificate]:
        S = A * np.outer(d, d)
        ok, cert = dd_membership(S, tol=max(tol, 1e-12))
        return SDDCertificate(d, cert.slacks) if ok else None

    ok, cert = dd_membership(A)
    if ok:
        out = verify(np.ones(n))
        if out is not None:
            return True, out
    # Jacobi equilibration: d_i = 1/sqrt(M_ii)
    d0 = np.where(diag > tol * scale, 1.0 / np.sqrt(np.maximum(diag, 1e-300)), 1.0)
    out = verify(d0 / max(d0.max(), 1.0))
    if out is not None:
        return True, out

    # exact test: per-component LP for a generalized dominance scaling
    W = -np.abs(A)
    np.fill_diagonal(W, diag)
    d = np.zeros(n)
    for comp in _offdiag_components(A):
        k = len(comp)
        if k == 1:
            d[comp[0]] = 1.0
            continue
        Wc = W[np.ix_(comp, comp)]
        # variables (d_c, t): max t  s.t.  Wc d >= 0, d >= t, 0 <= d <= 1
        A_ub = np.block([[-Wc, np.zeros((k, 1))],
                         [-np.eye(k), np.ones((k, 1))]])
        b_ub = np.zeros(2 * k)
        c = np.zeros(k + 1)
        c[-1] = -1.0
        bounds = [(0.0, 1.0)] * k + [(0.0, 1.0)]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if not res.success or -res.fun <= max(tol, 1e-9):
            return False, None
        d[comp] = res.x[:k]
    out = verify(d)
    if out is not None:
        return True, out
    return False, None


def _min_eig_2x2(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of [[a, c], [c, b]], vectorized."""
    mean = 0.5 * (a + b)
    rad = np.sqrt((0.5 * (a - b)) ** 2 + c ** 2)
    return mean - rad


def fw_supports(n: int, k: int, partition: Optional[tuple] = None) -> list[tuple]:
    """Index subsets whose principal blocks generate the cone.

    For factor-width-k with n <= 12 this is every k-subset.  For larger n the
    cone is narrowed to the block variant over a contiguous partition into
    ceil(n/k) blocks, keeping the subset count polynomial; the resulting cone
    still sits between sdd and psd so orderings are preserved.  For bfw2 the
    subsets are unions of pairs of partition blocks.
    """
    if partition is not None:
        blocks = [tuple(b) for b in partition]
        if len(blocks) == 1:
            return [tuple(sorted(blocks[0]))]
        return [tuple(sorted(set(p) | set(q)))
                for p, q in itertools.combinations(blocks, 2)]
    if k >= n:
        return [tuple(range(n))]
    if n <= 12:
        return [tuple(s) for s in itertools.combinations(range(n), k)]
    # contiguous fallback for large n
    cuts = [tuple(range(i, min(i + k, n))) for i in range(0, n, k)]
    if len(cuts) == 1:
        return cuts
    return [tuple(sorted(set(p) | set(q)))
            for p, q in itertools.combinations(cuts, 2)]


def membership(M, kind: ConeKind, tol: float = 1e-9) -> bool:
    """Does the symmetric matrix M belong to the structured cone `kind`?

    Closed-form checks cover diagonal, dd, sdd, psd and every dual kind;
    fw(k) and bfw2 memberships on the primal side fall back to a small
    conic feasibility solve over the generator reformulation.
    """
    A = _as_sym_dense(M)
    n = A.shape[0]
    kind.validate_for_dim(n)
    scale = 1.0 + (np.abs(np.diag(A)).max() if n else 0.0)
    thresh = -tol * scale
    off = A - np.diag(np.diag(A))

    if kind.tag == "psd":
        if n == 0:
            return True
        return float(np.linalg.eigvalsh(A).min()) >= thresh
    if kind.tag == "diagonal" and not kind.dual:
        return bool(np.abs(off).max(initial=0.0) <= tol * scale
                    and np.all(np.diag(A) >= thresh))
    if kind.tag == "diagonal" and kind.dual:
        return bool(np.all(np.diag(A) >= thresh))
    if kind.tag == "dd" and not kind.dual:
        return dd_membership(A, tol=tol)[0]
    if kind.tag == "dd" and kind.dual:
        # pairings M_ii + M_jj +- 2 M_ij >= 0 and M_ii >= 0
        if np.any(np.diag(A) < thresh):
            return False
        dsum = np.add.outer(np.diag(A), np.diag(A))
        return bool(np.all(dsum - 2.0 * np.abs(off) >= thresh))
    if kind.tag == "sdd" and not kind.dual:
        return sdd_membership(A, tol=tol)[0]
    if kind.tag in ("sdd", "fw", "bfw2") and kind.dual:
        if kind.tag == "sdd":
            supports = fw_supports(n, 2)
        else:
            supports = fw_supports(n, kind.k or 2, kind.partition)
        for S in supports:
            sub = A[np.ix_(S, S)]
            if len(S) == 2:
                lam = _min_eig_2x2(sub[0, 0], sub[1, 1], sub[0, 1])
            else:
                lam = np.linalg.eigvalsh(sub).min()
            if float(lam) < thresh:
                return False
        return True
    if kind.tag == "fw" and not kind.dual:
        if kind.k == 1:
            return membership(A, ConeKind("diagonal"), tol)
        if kind.k == 2:
            return sdd_membership(A, tol=tol)[0]
        if kind.k >= n:
            return membership(A, PSD, tol)
        return _generator_feasible(A, kind, tol)
    if kind.tag == "bfw2" and not kind.dual:
        if len(kind.partition) == 1:
            return membership(A, PSD, tol)
        if all(len(b) == 1 for b in kind.partition):
            return sdd_membership(A, tol=tol)[0]
        return _generator_feasible(A, kind, tol)
    raise ValueError(f"membership not defined for kind {kind}")


def _generator_feasible(A: np.ndarray, kind: ConeKind, tol: float) -> bool:
    """Solver-based membership via the cone margin  max t : A - t I in K.

    Every structured cone here contains the nonnegative diagonal matrices,
    so A - t I is a member for t negative enough and the margin problem is
    feasible and bounded; A in K iff the optimal margin is >= 0 (up to the
    solve tolerance).
    """
    from .core import Block, ConicProblem, SymMatrix
    from .decomp import lower_problem
    from .solver import SolverSettings, solve

    n = A.shape[0]
    prob = ConicProblem(
        form="dual",
        blocks=[Block(n, kind)],
        C=SymMatrix.from_dense(A),
        As=[SymMatrix.identity(n)],
        b=np.array([1.0]),
    )
    lowered = lower_problem(prob)
    sol = solve(lowered.problem, SolverSettings(eps=1e-8, max_iter=100000))
    if sol.status != "optimal":
        raise RuntimeError(f"cone margin solve failed with status {sol.status}")
    scale = 1.0 + float(np.abs(np.diag(A)).max(initial=0.0))
    return float(sol.objective) >= -(tol + 1e-7) * scale


# ---------------------------------------------------------------------------
# extreme-ray decompositions and clique splits
# ---------------------------------------------------------------------------


def dd_extreme_decomposition(M) -> list[tuple[float, np.ndarray]]:
    """Write a diagonally dominant M as sum of w * v v^T with v extreme.

    The extreme rays of the dd cone are e_i e_i^T and (e_i +- e_j)(...)^T.
    Off-diagonal entry M_ij > 0 contributes weight M_ij on e_i + e_j,
    M_ij < 0 contributes |M_ij| on e_i - e_j, and the dominance slack of
    each row rides on e_i.  Zero-weight terms are dropped.
    """
    A = _as_sym_dense(M)
    ok, cert = dd_membership(A)
    if not ok:
        raise ValueError("matrix is not diagonally dominant")
    n = A.shape[0]
    terms: list[tuple[float, np.ndarray]] = []
    for i in range(n):
        if cert.slacks[i] != 0.0:
            v = np.zeros(n)
            v[i] = 1.0
            terms.append((float(cert.slacks[i]), v))
    for i in range(n):
        for j in range(i + 1, n):
            if A[i, j] == 0.0:
                continue
            v = np.zeros(n)
            v[i] = 1.0
            v[j] = 1.0 if A[i, j] > 0 else -1.0
            terms.append((abs(float(A[i, j])), v))
    return terms


def clique_dd_split(Z, cover) -> list[np.ndarray]:
    """Split a diagonally dominant Z along a clique cover.

    Returns one dense block per clique (in cover order) such that each block
    is diagonally dominant and sum_k E_k^T B_k E_k == Z exactly.  Every
    off-diagonal entry goes to the lowest-index clique containing both ends;
    the dominance slack of each row is divided evenly among the cliques
    containing that row.
    """
    A = _as_sym_dense(Z)
    ok, cert = dd_membership(A)
    if not ok:
        raise ValueError("matrix is not diagonally dominant")
    n = A.shape[0]
    if getattr(cover, "graph").n != n:
        raise ValueError("cover and matrix dimensions disagree")
    cliques = [tuple(c) for c in cover.cliques]
    local = [{v: p for p, v in enumerate(c)} for c in cliques]
    owner: list[list[int]] = [[] for _ in range(n)]
    for ci, c in enumerate(cliques):
        for v in c:
            owner[v].append(ci)
    blocks = [np.zeros((len(c), len(c))) for c in cliques]
    for i in range(n):
        if not owner[i]:
            raise ValueError(f"vertex {i} is not covered by any clique")
        for j in range(i + 1, n):
            z = A[i, j]
            if z == 0.0:
                continue
            home = next((ci for ci in owner[i] if j in local[ci]), None)
            if home is None:
                raise ValueError(f"entry ({i}, {j}) is not covered by any clique")
            li, lj = local[home][i], local[home][j]
            w = abs(z)
            blocks[home][li, li] += w
            blocks[home][lj, lj] += w
            blocks[home][li, lj] += z
            blocks[home][lj, li] += z
    for i in range(n):
        share = cert.slacks[i] / len(owner[i])
        for ci in owner[i]:
            li = local[ci][i]
            blocks[ci][li, li] += share
    return blocks


def clique_sdd_split(Z, cover) -> list[np.ndarray]:
    """Split a scaled diagonally dominant Z along a clique cover.

    Scales Z into the dd cone with the sdd certificate, splits there, and
    unscales each block, so every block is sdd and the blocks reassemble
    to Z up to roundoff.
    """
    A = _as_sym_dense(Z)
    ok, cert = sdd_membership(A)
    if not ok or cert is None:
        raise ValueError("matrix is not scaled diagonally dominant")
    d = cert.scaling
    S = A * np.outer(d, d)
    blocks = clique_dd_split(S, cover)
    out = []
    for c, B in zip(cover.cliques, blocks):
        dc = d[list(c)]
        out.append(B / np.outer(dc, dc))
    return out


# ---------------------------------------------------------------------------
# reformulation into primitive cones
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConeReformulation:
    """Primitive-cone description of a structured matrix block.

    mode == "generators": svec(M) = matrix @ lam, lam in the product of
    `blocks` (matrix has shape svec_dim(n) x total width).
    mode == "constraints": matrix @ svec(M) in the product of `blocks`
    (matrix has shape total width x svec_dim(n)).
    Widths count svec entries for matrix kinds and plain entries otherwise.
    """

    n: int
    kind: ConeKind
    mode: str
    blocks: tuple[tuple[int, ConeKind], ...]
    matrix: sp.csr_matrix

    @property
    def width(self) -> int:
        return sum(svec_dim(d) if k.is_matrix else d for d, k in self.blocks)


def svec_embedding(n: int, S: Sequence[int]) -> sp.csr_matrix:
    """Sparse map sending svec of a principal submatrix into svec(R^{n x n}).

    Columns index svec coordinates of the |S| x |S| submatrix on sorted S,
    rows the svec coordinates of the ambient matrix; entries are 1 because
    diagonal slots map to diagonal slots and off-diagonal to off-diagonal,
    so the sqrt(2) conventions line up.  Its transpose selects a principal
    submatrix in svec coordinates.
    """
    S = sorted(S)
    s = len(S)
    rows, cols = [], []
    t = 0
    for a in range(s):
        for b in range(a, s):
            rows.append(svec_index(n, S[a], S[b]))
            cols.append(t)
            t += 1
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(svec_dim(n), svec_dim(s)))


def _pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def reformulate(n: int, kind: ConeKind) -> ConeReformulation:
    """Generator form of a structured cone: svec(M) = G lam, lam in cones.

    Used to impose M in K by introducing the generator weights lam as new
    variables.  Supported kinds: psd (identity), diagonal, dd, sdd, fw(k),
    bfw2.  Dual-orientation kinds have no generator form here; use
    `reformulate_dual`.
    """
    if kind.dual:
        raise ValueError("dual-orientation kinds use reformulate_dual")
    kind.validate_for_dim(n)
    T = svec_dim(n)
    root2 = np.sqrt(2.0)

    if kind.tag == "psd":
        return ConeReformulation(n, kind, "generators",
                                 ((n, PSD),), sp.identity(T, format="csr"))
    if kind.tag == "diagonal":
        rows = [svec_index(n, i, i) for i in range(n)]
        G = sp.csr_matrix((np.ones(n), (rows, range(n))), shape=(T, n))
        return ConeReformulation(n, kind, "generators", ((n, NONNEG),), G)
    if kind.tag == "dd":
        # columns: n diagonal rays, then (plus, minus) per pair
        rows, cols, vals = [], [], []
        for i in range(n):
            rows.append(svec_index(n, i, i))
            cols.append(i)
            vals.append(1.0)
        c = n
        for i, j in _pairs(n):
            for sgn in (1.0, -1.0):
                rows += [svec_index(n, i, i), svec_index(n, j, j),
                         svec_index(n, i, j)]
                cols += [c, c, c]
                vals += [1.0, 1.0, sgn * root2]
                c += 1
        G = sp.csr_matrix((vals, (rows, cols)), shape=(T, c))
        return ConeReformulation(n, kind, "generators", ((c, NONNEG),), G)
    if kind.tag == "sdd":
        # one rotated second-order triple (p, q, z) per pair:
        # the pair contributes [[p, z/sqrt(2)], [z/sqrt(2), q]], p q >= z^2/2
        rows, cols, vals = [], [], []
        c = 0
        for i, j in _pairs(n):
            rows += [svec_index(n, i, i), svec_index(n, j, j),
                     svec_index(n, i, j)]
            cols += [c, c + 1, c + 2]
            vals += [1.0, 1.0, 1.0]
            c += 3
        blocks = tuple((3, RSOC) for _ in _pairs(n))
        if not blocks:  # n == 1: sdd degenerates to a nonnegative scalar
            G = sp.csr_matrix(np.ones((1, 1)))
            return ConeReformulation(n, kind, "generators", ((1, NONNEG),), G)
        G = sp.csr_matrix((vals, (rows, cols)), shape=(T, c))
        return ConeReformulation(n, kind, "generators", blocks, G)
    if kind.tag in ("fw", "bfw2"):
        if kind.tag == "fw":
            supports = fw_supports(n, kind.k)
        else:
            supports = fw_supports(n, 2, kind.partition)
        mats = [svec_embedding(n, S) for S in supports]
        G = sp.hstack(mats, format="csr") if mats else sp.csr_matrix((T, 0))
        blocks = tuple((len(S), PSD) for S in supports)
        return ConeReformulation(n, kind, "generators", blocks, G)
    raise ValueError(f"no generator reformulation for kind {kind}")


def reformulate_dual(n: int, kind: ConeKind) -> ConeReformulation:
    """Constraint form of the dual superset: H svec(M) in cones iff M in K*.

    Accepts either orientation and describes the dual of the base kind:
    diagonal* pins only the diagonal sign, dd* the pair sums
    M_ii + M_jj +- 2 M_ij, sdd* the 2x2 principal minors (as rotated
    second-order triples), fw(k)* the k x k principal blocks, bfw2* the
    pairs of partition blocks.  psd maps to itself.
    """
    kind.validate_for_dim(n)
    T = svec_dim(n)
    root2 = np.sqrt(2.0)
    tag = kind.tag

    if tag == "psd":
        return ConeReformulation(n, kind, "constraints",
                                 ((n, PSD),), sp.identity(T, format="csr"))
    if tag == "diagonal":
        cols = [svec_index(n, i, i) for i in range(n)]
        H = sp.csr_matrix((np.ones(n), (range(n), cols)), shape=(n, T))
        return ConeReformulation(n, kind, "constraints", ((n, NONNEG),), H)
    if tag == "dd":
        rows, cols, vals = [], [], []
        r = 0
        for i in range(n):
            rows.append(r)
            cols.append(svec_index(n, i, i))
            vals.append(1.0)
            r += 1
        for i, j in _pairs(n):
            for sgn in (1.0, -1.0):
                rows += [r, r, r]
                cols += [svec_index(n, i, i), svec_index(n, j, j),
                         svec_index(n, i, j)]
                # M_ii + M_jj +- 2 M_ij, with svec carrying sqrt(2) M_ij
                vals += [1.0, 1.0, sgn * root2]
                r += 1
        H = sp.csr_matrix((vals, (rows, cols)), shape=(r, T))
        return ConeReformulation(n, kind, "constraints", ((r, NONNEG),), H)
    if tag == "sdd":
        rows, cols, vals = [], [], []
        r = 0
        for i, j in _pairs(n):
            rows += [r, r + 1, r + 2]
            cols += [svec_index(n, i, i), svec_index(n, j, j),
                     svec_index(n, i, j)]
            vals += [1.0, 1.0, 1.0]
            r += 3
        if r == 0:  # n == 1: the dual is a nonnegative scalar
            H = sp.csr_matrix(np.ones((1, 1)))
            return ConeReformulation(n, kind, "constraints", ((1, NONNEG),), H)
        H = sp.csr_matrix((vals, (rows, cols)), shape=(r, T))
        blocks = tuple((3, RSOC) for _ in _pairs(n))
        return ConeReformulation(n, kind, "constraints", blocks, H)
    if tag in ("fw", "bfw2"):
        if tag == "fw":
            supports = fw_supports(n, kind.k)
        else:
            supports = fw_supports(n, 2, kind.partition)
        mats = [svec_embedding(n, S).T.tocsr() for S in supports]
        H = sp.vstack(mats, format="csr") if mats else sp.csr_matrix((0, T))
        blocks = tuple((len(S), PSD) for S in supports)
        return ConeReformulation(n, kind, "constraints", blocks, H)
    raise ValueError(f"no constraint reformulation for kind {kind}")
