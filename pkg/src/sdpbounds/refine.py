"""Tightness certificates and change-of-basis refinement of clique bounds.

A decomposed bound computed with structured cones is tight exactly when the
matrix it approximates is globally positive semidefinite, not just clique by
clique.  `certify` measures that: it reports the minimum eigenvalue of every
clique principal submatrix and of each whole matrix block, for the dual
slack C - sum y_i A_i (completion side) or the recovered matrix variable
(construction side).

When a bound is not tight, it can be sharpened without changing the cone
family: replace each clique cone K by its congruence W' K W, where W is a
condition-capped square-root factor of the previous round's optimal clique
block.  The previous optimum maps to a nonnegative diagonal matrix in the
new coordinates, which lies inside every cone handled here, so each round's
bound is at least as good as the last.  `cob_step` performs one such round
and `cob_run` iterates to a stall or a round limit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import ConicProblem, SymMatrix, Solution
from .decomp import DecomposedProblem, lower_problem
from .sparsity import CliqueCover

__all__ = [
    "TightnessReport",
    "certify",
    "BasisSet",
    "cob_step",
    "CobResult",
    "cob_run",
]


# ---------------------------------------------------------------------------
# tightness certification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TightnessReport:
    """Eigenvalue evidence for whether a clique bound is globally tight.

    clique_eigs pairs each clique index (into the cover) with the minimum
    eigenvalue of the certified matrix's principal submatrix on it;
    block_eigs does the same for whole matrix blocks.

    Which eigenvalues decide tightness depends on the side.  The completion
    side certifies the dual slack, a fully determined matrix: the bound is
    tight when every whole block is psd.  The construction side certifies
    the recovered multiplier, which is determined only on the cover's
    filled pattern (the assembled matrix fills the rest with zeros): on a
    chordal cover it admits a psd completion exactly when every clique
    submatrix is psd, so the clique eigenvalues decide.
    """

    side: str
    tol: float
    clique_eigs: tuple[tuple[int, float], ...]
    block_eigs: tuple[tuple[int, float], ...]

    @property
    def deciding_eigs(self) -> tuple[tuple[int, float], ...]:
        return (self.clique_eigs if self.side == "construction"
                else self.block_eigs)

    @property
    def tight(self) -> bool:
        return all(e >= -self.tol for _, e in self.deciding_eigs)

    @property
    def worst(self) -> float:
        pool = [e for _, e in self.block_eigs]
        pool += [e for _, e in self.clique_eigs]
        return min(pool) if pool else 0.0

    def summary(self) -> str:
        flag = "tight" if self.tight else "not tight"
        kind = "clique" if self.side == "construction" else "block"
        worst = min((e for _, e in self.deciding_eigs), default=0.0)
        return (f"{flag} (side={self.side}, worst {kind} eig "
                f"{worst:.3e}, tol {self.tol:g})")


def certify(p: ConicProblem, sol: Solution, cover: CliqueCover,
            side: str = "completion", tol: float = 1e-6) -> TightnessReport:
    """Certify a mapped decomposed solution against the original problem.

    side "completion" examines the dual slack C - sum y_i A_i built from
    sol.y; side "construction" examines the recovered matrix variable in
    sol.block_x.  Vector blocks carry no eigenvalues and are skipped.
    """
    if side not in ("completion", "construction"):
        raise ValueError("side must be 'completion' or 'construction'")
    if cover.graph.n != p.n:
        raise ValueError("cover dimension does not match the problem")
    offs = p.block_offsets()

    mats: dict[int, np.ndarray] = {}
    if side == "completion":
        Zg = p.C.to_dense()
        for i, Ai in enumerate(p.As):
            yi = float(sol.y[i])
            if yi != 0.0:
                Zg -= yi * Ai.to_dense()
        for bi, blk in enumerate(p.blocks):
            if blk.kind.is_matrix:
                o = int(offs[bi])
                mats[bi] = Zg[o:o + blk.dim, o:o + blk.dim]
    else:
        for bi, blk in enumerate(p.blocks):
            if blk.kind.is_matrix:
                mats[bi] = np.asarray(sol.block_x[bi], dtype=float)

    clique_eigs = []
    for k, clq in enumerate(cover.cliques):
        bi = p.block_of_index(clq[0])
        if not p.blocks[bi].kind.is_matrix:
            continue
        if any(p.block_of_index(v) != bi for v in clq[1:]):
            raise ValueError(f"clique {clq} straddles variable blocks")
        o = int(offs[bi])
        loc = [v - o for v in clq]
        sub = mats[bi][np.ix_(loc, loc)]
        clique_eigs.append((k, float(np.linalg.eigvalsh(sub)[0])))
    block_eigs = [(bi, float(np.linalg.eigvalsh(M)[0]))
                  for bi, M in sorted(mats.items())]
    return TightnessReport(side=side, tol=tol,
                           clique_eigs=tuple(clique_eigs),
                           block_eigs=tuple(block_eigs))


# ---------------------------------------------------------------------------
# change of basis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisSet:
    """One basis matrix per clique block of a decomposed problem.

    mats aligns with dec.clique_blocks; None means identity (used for psd
    cliques, which gain nothing from a change of basis).  Each stored W is
    nonsingular; the clique cone K is replaced by W' K W when the basis is
    applied.
    """

    mats: tuple[Optional[np.ndarray], ...]

    @classmethod
    def identity(cls, dec: DecomposedProblem) -> "BasisSet":
        return cls((None,) * len(dec.clique_blocks))

    @property
    def is_identity(self) -> bool:
        return all(W is None for W in self.mats)


def _transform_matrix(M: SymMatrix, offs, spans) -> SymMatrix:
    """Congruence U M U' restricted to the listed block spans.

    spans maps a block start offset to (dim, U); entries outside any span
    pass through unchanged.
    """
    keep = []
    holds: dict[int, np.ndarray] = {}
    for i, j, v in M.entries():
        placed = False
        for start, (d, U) in spans.items():
            if start <= i < start + d:
                if not (start <= j < start + d):
                    raise ValueError("entry straddles a transformed block")
                B = holds.setdefault(start, np.zeros((d, d)))
                B[i - start, j - start] = v
                B[j - start, i - start] = v
                placed = True
                break
        if not placed:
            keep.append((i, j, v))
    for start, B in holds.items():
        d, U = spans[start]
        T = U @ B @ U.T
        for a in range(d):
            for b in range(a, d):
                if abs(T[a, b]) > 1e-14:
                    keep.append((start + a, start + b, float(T[a, b])))
    return SymMatrix.from_entries(M.n, keep)


def _apply_basis(dec: DecomposedProblem, basis: BasisSet) -> ConicProblem:
    """The decomposed problem with clique data mapped by U = W^{-T} per
    clique, so that the cone constraint on the new block value is K while
    the original block value ranges over W' K W."""
    p = dec.problem
    if basis.is_identity:
        return p
    offs = p.block_offsets()
    spans: dict[int, tuple[int, np.ndarray]] = {}
    for (info, W) in zip(dec.clique_blocks, basis.mats):
        if W is None:
            continue
        dec_idx = info[3]
        d = p.blocks[dec_idx].dim
        U = np.linalg.solve(W, np.eye(d)).T  # W^{-T}
        spans[int(offs[dec_idx])] = (d, U)
    Ct = _transform_matrix(p.C, offs, spans)
    As_t = [_transform_matrix(A, offs, spans) for A in p.As]
    return ConicProblem(p.form, Ct, As_t, p.b.copy(), p.blocks)


def _untransform(dec: DecomposedProblem, basis: BasisSet,
                 sol: Solution) -> Solution:
    """Map a solution of the basis-transformed problem back to the
    decomposed problem's coordinates: V = W' V~ W on the cone side and
    X = W^{-1} X~ W^{-T} on the multiplier side."""
    if basis.is_identity:
        return sol
    block_x = [np.asarray(v) for v in sol.block_x]
    block_z = [np.asarray(v) for v in sol.block_z]
    for (info, W) in zip(dec.clique_blocks, basis.mats):
        if W is None:
            continue
        dec_idx = info[3]
        block_z[dec_idx] = W.T @ block_z[dec_idx] @ W
        Xt = np.linalg.solve(W, np.linalg.solve(W, block_x[dec_idx].T).T)
        block_x[dec_idx] = Xt
    return replace(sol, block_x=block_x, block_z=block_z)


def _next_basis(dec: DecomposedProblem, sol_dec: Solution,
                cond_cap: float = 1e4) -> BasisSet:
    """Square-root bases from the optimal clique block values.

    Eigenvalues are clipped from below at (top eigenvalue)/cond_cap before
    taking the square-root factor W, so the congruence stays well enough
    conditioned for a first-order solve.  The previous optimum then maps to
    a nonnegative diagonal matrix, which belongs to every cone family here,
    so the bound sequence stays weakly monotone.
    """
    mats = []
    for info in dec.clique_blocks:
        dec_idx = info[3]
        if dec.problem.blocks[dec_idx].kind.tag == "psd":
            mats.append(None)
            continue
        V = np.asarray(sol_dec.block_z[dec_idx], dtype=float)
        V = 0.5 * (V + V.T)
        lam, Q = np.linalg.eigh(V)
        top = max(float(lam[-1]), 1e-8 * max(1.0, float(np.abs(V).max())))
        lam = np.clip(lam, top / cond_cap, None)
        mats.append(np.sqrt(lam)[:, None] * Q.T)
    return BasisSet(tuple(mats))


def cob_step(dec: DecomposedProblem, basis: BasisSet, settings=None,
             cond_cap: float = 1e4) -> tuple[Solution, Solution, BasisSet]:
    """One refinement round under a given basis.

    Solves the basis-transformed decomposition, maps the solution back to
    the original block structure, and proposes the next basis from the
    optimal clique blocks.  Returns (mapped solution, decomposed-level
    solution, next basis); the bound for the round is
    dec.objective_value(decomposed-level solution).
    """
    from .solver import solve as solve_primitive
    q = _apply_basis(dec, basis)
    low = lower_problem(q)
    sol_low = solve_primitive(low.problem, settings)
    sol_q = low.map_solution(sol_low)
    if sol_q.status != "optimal":
        return dec.map_solution(sol_q), sol_q, basis
    sol_dec = _untransform(dec, basis, sol_q)
    mapped = dec.map_solution(sol_dec)
    return mapped, sol_dec, _next_basis(dec, sol_dec, cond_cap)


@dataclass
class CobResult:
    """Outcome of an iterated change-of-basis run.

    bounds[r] is the bound after round r (round 0 is the plain bound in the
    initial basis).  best_bound and best_solution track the best round in
    the decomposition's bound direction.  stalled is True when the run
    ended on the stall criterion rather than the round limit.
    """

    bounds: list[float]
    statuses: list[str]
    best_bound: float
    best_solution: Solution
    basis: BasisSet
    stalled: bool


def cob_run(dec: DecomposedProblem, rounds: int = 10, settings=None,
            stall_tol: float = 1e-6, window: int = 3,
            cond_cap: float = 1e4) -> CobResult:
    """Iterate cob_step until improvement stalls or `rounds` extra rounds ran.

    Improvement is measured in the decomposition's bound direction (upper
    bounds should fall, lower bounds should rise).  The run stalls when the
    total relative improvement over the last `window` rounds drops below
    stall_tol.
    """
    sign = -1.0 if dec.bound_direction == "upper" else 1.0
    basis = BasisSet.identity(dec)
    mapped, sol_dec, basis = cob_step(dec, basis, settings, cond_cap)
    bounds = [dec.objective_value(sol_dec)]
    statuses = [sol_dec.status]
    best_bound, best_sol = bounds[0], mapped
    if sol_dec.status != "optimal":
        return CobResult(bounds, statuses, best_bound, best_sol, basis, False)
    recent: list[float] = []
    stalled = False
    for _ in range(rounds):
        mapped, sol_dec, basis = cob_step(dec, basis, settings, cond_cap)
        bounds.append(dec.objective_value(sol_dec))
        statuses.append(sol_dec.status)
        if sol_dec.status != "optimal":
            break
        if sign * (bounds[-1] - best_bound) > 0:
            best_bound, best_sol = bounds[-1], mapped
        recent.append(sign * (bounds[-1] - bounds[-2]))
        if len(recent) >= window:
            gain = sum(recent[-window:])
            if gain < stall_tol * (1.0 + abs(best_bound)):
                stalled = True
                break
    return CobResult(bounds, statuses, best_bound, best_sol, basis, stalled)
