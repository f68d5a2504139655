"""Clique decomposition and cone lowering of sparse conic programs.

Two decomposition styles bound a sparse semidefinite program by clique-local
cone constraints over a chordal cover of its aggregate pattern:

* completion style (`build_completion`): the matrix variable is reduced to
  one scalar per filled-pattern entry and every clique principal submatrix is
  constrained to a cone.  For a primal-form (min) input, subset cones give
  upper bounds, psd cones are exact on chordal covers, and superset cones
  give lower bounds.  For a dual-form (max) input the same function imposes
  the per-clique constraints directly on C - sum y_i A_i (whose pattern is
  fixed by the data); superset cones then give upper bounds.

* construction style (`build_construction`): the slack matrix is written as
  an explicit sum of clique-supported blocks, Z = sum_k E_k' Z_k E_k with
  Z_k in the assigned cone.  On a dual-form (max) input, subset cones give
  lower bounds; superset cones give upper bounds on chordal covers.  A
  primal-form input is dualized first, so the resulting value bounds its
  dual optimum from below (hence the primal optimum too, by weak duality).

`lower_problem` translates any remaining structured cones into primitive
ones (new generator variables for subset cones, extra constraint rows or
blocks for superset cones) so the result can go straight to `solve`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    FREEMAT,
    PSD,
    ZERO,
    ZEROMAT,
    Block,
    ConeKind,
    ConicProblem,
    Solution,
    SymMatrix,
    dualize,
    smat_array,
    svec_array,
    svec_dim,
    svec_index,
    uniform_partition,
)
from .cones import ConeReformulation, reformulate, reformulate_dual
from .sparsity import CliqueCover, problem_pattern

__all__ = [
    "ConeAssignment",
    "assign_cones",
    "DecomposedProblem",
    "build_completion",
    "build_construction",
    "LoweredProblem",
    "lower_problem",
    "recover_entries",
]

_SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# per-clique cone assignment
# ---------------------------------------------------------------------------


def _resolve_kind(base: ConeKind, dim: int) -> ConeKind:
    """Concrete kind for a clique of the given dimension (clamp fw width,
    expand a uniform bfw2 block size into an explicit partition)."""
    if base.tag == "fw":
        return ConeKind("fw", k=min(base.k, dim), dual=base.dual)
    if base.tag == "bfw2" and base.partition is None:
        part = uniform_partition(dim, min(base.k or 2, dim))
        return ConeKind("bfw2", partition=part, dual=base.dual)
    base.validate_for_dim(dim)
    return base


@dataclass(frozen=True)
class ConeAssignment:
    """One cone kind per clique of a cover, plus the decomposition side.

    side is "completion" or "construction"; it records intent and is checked
    by the builders.  kinds align with cover.cliques.
    """

    cover: CliqueCover
    kinds: tuple[ConeKind, ...]
    side: str

    def __post_init__(self):
        if self.side not in ("completion", "construction"):
            raise ValueError("side must be 'completion' or 'construction'")
        if len(self.kinds) != len(self.cover.cliques):
            raise ValueError("need exactly one kind per clique")
        for clq, kind in zip(self.cover.cliques, self.kinds):
            if not kind.is_matrix or kind.tag in ("freemat", "zeromat"):
                raise ValueError(f"kind {kind} cannot be assigned to a clique")
            kind.validate_for_dim(len(clq))

    def with_kind(self, index: int, kind: ConeKind) -> "ConeAssignment":
        kinds = list(self.kinds)
        kinds[index] = _resolve_kind(kind, len(self.cover.cliques[index]))
        return ConeAssignment(self.cover, tuple(kinds), self.side)


def assign_cones(cover: CliqueCover, base: ConeKind, side: str,
                 threshold: int = 0) -> ConeAssignment:
    """Assign `base` to every clique larger than `threshold`, psd to the rest.

    Small cliques cost little as exact psd blocks, so cheapening only the
    large ones trades far less accuracy per unit of solve time.  threshold=0
    assigns `base` everywhere.  fw widths are clamped to the clique size and
    a uniform bfw2 block size is expanded per clique.
    """
    kinds = []
    for clq in cover.cliques:
        d = len(clq)
        kinds.append(PSD if d <= threshold else _resolve_kind(base, d))
    return ConeAssignment(cover, tuple(kinds), side)


# ---------------------------------------------------------------------------
# shared clique bookkeeping
# ---------------------------------------------------------------------------


def _split_cliques(p: ConicProblem, cover: CliqueCover):
    """Map cover cliques onto matrix blocks.

    Returns (kept, offs) where kept is a list of
    (assignment_index, orig_block_index, global_vertices, local_vertices)
    for cliques inside matrix blocks; cliques inside vector blocks must be
    singletons and are dropped (vector blocks pass through whole).
    """
    if cover.graph.n != p.n:
        raise ValueError("cover dimension does not match the problem")
    if not cover.covers(problem_pattern(p)):
        raise ValueError("cover does not cover the aggregate pattern")
    offs = p.block_offsets()
    kept = []
    for k, clq in enumerate(cover.cliques):
        b0 = p.block_of_index(clq[0])
        if any(p.block_of_index(v) != b0 for v in clq[1:]):
            raise ValueError(f"clique {clq} straddles variable blocks")
        if p.blocks[b0].kind.is_matrix:
            off = int(offs[b0])
            kept.append((k, b0, tuple(clq), tuple(v - off for v in clq)))
        elif len(clq) > 1:
            raise ValueError(f"clique {clq} spans a vector block")
    covered = set()
    for _, _, clq, _ in kept:
        covered.update(clq)
    for bi, blk in enumerate(p.blocks):
        if blk.kind.is_matrix:
            lo = int(offs[bi])
            missing = [v for v in range(lo, lo + blk.dim) if v not in covered]
            if missing:
                raise ValueError(f"matrix-block vertices {missing} not covered")
    return kept, offs


def _orientation(kinds: Sequence[ConeKind]) -> str:
    """'subset', 'superset', or 'psd' for a uniform-orientation assignment."""
    flavors = set()
    for kind in kinds:
        if kind.tag == "psd":
            flavors.add("psd")
        else:
            flavors.add("superset" if kind.dual else "subset")
    flavors.discard("psd")
    if not flavors:
        return "psd"
    if len(flavors) > 1:
        raise ValueError("mixing subset and superset cones in one assignment "
                         "has no bound direction")
    return flavors.pop()


# ---------------------------------------------------------------------------
# decomposed problems
# ---------------------------------------------------------------------------


@dataclass
class DecomposedProblem:
    """A clique-decomposed problem plus the bookkeeping to map solutions back.

    style: "entry" (completion over shared pattern entries), "restrict"
    (per-clique constraints on a dual-form slack), or "construct"
    (clique-supported sum for the slack).  bound_direction says how
    objective_value relates to the original optimum: "upper" means the
    value is >= it, "lower" means <=.
    """

    original: ConicProblem
    problem: ConicProblem
    assignment: ConeAssignment
    style: str
    bound_direction: str
    dualized: bool
    matrix_entries: tuple  # (orig_block, gi, gj) per entry variable / tie row
    vector_blocks: tuple   # (orig_block, dec_block, var_start or -1, dim)
    clique_blocks: tuple   # (assign_idx, orig_block, global clq, dec_block)
    m_orig: int

    def objective_value(self, sol: Solution) -> float:
        """Bound on the original optimum implied by a decomposed solution."""
        if self.style == "entry":
            return -float(sol.objective)
        return float(sol.objective)

    def map_solution(self, sol: Solution) -> Solution:
        """Express a solution of `problem` in the original block structure."""
        if sol.status in ("infeasible", "unbounded", "numerical_error"):
            return Solution(status=sol.status, y=np.zeros(self.m_orig),
                            block_x=[], block_z=[], obj_primal=float("nan"),
                            obj_dual=float("nan"), res_primal=sol.res_primal,
                            res_dual=sol.res_dual, gap=sol.gap,
                            iterations=sol.iterations, objective=float("nan"),
                            solve_time=sol.solve_time,
                            certificate=sol.certificate)
        p0 = self.dual_view()
        offs = p0.block_offsets()
        nblk = len(p0.blocks)
        dims = [blk.dim for blk in p0.blocks]

        if self.style == "entry":
            y0 = np.asarray(sol.block_x[0], dtype=float) if self.m_orig else \
                np.zeros(0)
            X = [np.zeros((d, d)) if blk.kind.is_matrix else np.zeros(d)
                 for d, blk in zip(dims, p0.blocks)]
            for t, (bi, gi, gj) in enumerate(self.matrix_entries):
                o = int(offs[bi])
                v = float(sol.y[t])
                X[bi][gi - o, gj - o] = v
                X[bi][gj - o, gi - o] = v
            for bi, dec_idx, var_start, d in self.vector_blocks:
                X[bi] = np.asarray(sol.y[var_start:var_start + d], dtype=float)
            Z = self._assemble_clique_side(sol.block_x, dims, p0, offs)
            for bi, dec_idx, _, d in self.vector_blocks:
                Z[bi] = np.asarray(sol.block_z[dec_idx], dtype=float)
            obj_p = self._inner_with_C(X, p0, offs)
            obj_d = float(p0.b @ y0)
            return Solution(status=sol.status, y=y0, block_x=X, block_z=Z,
                            obj_primal=obj_p, obj_dual=obj_d,
                            res_primal=sol.res_primal, res_dual=sol.res_dual,
                            gap=sol.gap, iterations=sol.iterations,
                            objective=obj_p, solve_time=sol.solve_time,
                            certificate=None)

        if self.style == "restrict":
            y0 = sol.y.copy()
            Z = self._slack_from_data(y0, p0, offs)
            X = [None] * nblk
            Xsum = [np.zeros((d, d)) if blk.kind.is_matrix else None
                    for d, blk in zip(dims, p0.blocks)]
            for (_, bi, clq, dec_idx) in self.clique_blocks:
                o = int(offs[bi])
                loc = [v - o for v in clq]
                Xsum[bi][np.ix_(loc, loc)] += np.asarray(sol.block_x[dec_idx])
            for bi, blk in enumerate(p0.blocks):
                X[bi] = Xsum[bi]
            for bi, dec_idx, _, d in self.vector_blocks:
                X[bi] = np.asarray(sol.block_x[dec_idx], dtype=float)
            obj_d = float(p0.b @ y0)
            obj_p = self._inner_with_C(X, p0, offs)
            return Solution(status=sol.status, y=y0, block_x=X, block_z=Z,
                            obj_primal=obj_p, obj_dual=obj_d,
                            res_primal=sol.res_primal, res_dual=sol.res_dual,
                            gap=sol.gap, iterations=sol.iterations,
                            objective=obj_d, solve_time=sol.solve_time,
                            certificate=None)

        # construct style
        y0 = sol.y[:self.m_orig].copy()
        Z = self._assemble_clique_side(sol.block_z, dims, p0, offs)
        X = [np.zeros((d, d)) if blk.kind.is_matrix else np.zeros(d)
             for d, blk in zip(dims, p0.blocks)]
        mu = np.asarray(sol.block_x[0], dtype=float) if self.matrix_entries \
            else np.zeros(0)
        for t, (bi, gi, gj) in enumerate(self.matrix_entries):
            o = int(offs[bi])
            v = float(mu[t]) * (0.5 if gi != gj else 1.0)
            X[bi][gi - o, gj - o] = v
            X[bi][gj - o, gi - o] = v
        for bi, dec_idx, _, d in self.vector_blocks:
            X[bi] = np.asarray(sol.block_x[dec_idx], dtype=float)
            Z[bi] = np.asarray(sol.block_z[dec_idx], dtype=float)
        obj_d = float(p0.b @ y0)
        obj_p = self._inner_with_C(X, p0, offs)
        return Solution(status=sol.status, y=y0, block_x=X, block_z=Z,
                        obj_primal=obj_p, obj_dual=obj_d,
                        res_primal=sol.res_primal, res_dual=sol.res_dual,
                        gap=sol.gap, iterations=sol.iterations,
                        objective=obj_d, solve_time=sol.solve_time,
                        certificate=None)

    def dual_view(self) -> ConicProblem:
        """The problem whose (C, A, b) the decomposition was built from
        (the original, or its dualization for construct-on-primal)."""
        return dualize(self.original) if self.dualized else self.original

    def _assemble_clique_side(self, values, dims, p0, offs):
        out = [np.zeros((d, d)) if blk.kind.is_matrix else np.zeros(d)
               for d, blk in zip(dims, p0.blocks)]
        for (_, bi, clq, dec_idx) in self.clique_blocks:
            o = int(offs[bi])
            loc = [v - o for v in clq]
            out[bi][np.ix_(loc, loc)] += np.asarray(values[dec_idx])
        return out

    def _slack_from_data(self, y, p0, offs):
        Zg = p0.C.to_dense()
        for i, Ai in enumerate(p0.As):
            if y[i] != 0.0:
                Zg -= y[i] * Ai.to_dense()
        out = []
        for bi, blk in enumerate(p0.blocks):
            o = int(offs[bi])
            sub = Zg[o:o + blk.dim, o:o + blk.dim]
            out.append(sub.copy() if blk.kind.is_matrix
                       else np.diag(sub).copy())
        return out

    def _inner_with_C(self, X, p0, offs):
        total = 0.0
        for i, j, v in p0.C.entries():
            bi = p0.block_of_index(i)
            o = int(offs[bi])
            if p0.blocks[bi].kind.is_matrix:
                total += v * X[bi][i - o, j - o] * (2.0 if i != j else 1.0)
            else:
                total += v * X[bi][i - o]
        return float(total)

    def solve(self, settings=None) -> Solution:
        """Lower, solve, and map back; the returned Solution's `objective`
        is the bound in the original problem's sense (see bound_direction)."""
        from .solver import solve as solve_primitive
        low = lower_problem(self.problem)
        sol_low = solve_primitive(low.problem, settings)
        sol_dec = low.map_solution(sol_low)
        return self.map_solution(sol_dec)


def recover_entries(dec: DecomposedProblem, sol: Solution) -> SymMatrix:
    """Matrix-side estimate of a decomposed solution on the original index
    space: the completed variable for entry style, the assembled slack
    sum for construct style, the summed clique duals for restrict style.
    `sol` is a solution of dec.problem (before map_solution)."""
    p0 = dec.dual_view()
    offs = p0.block_offsets()
    ent: list[tuple[int, int, float]] = []
    if dec.style == "entry":
        for t, (bi, gi, gj) in enumerate(dec.matrix_entries):
            ent.append((gi, gj, float(sol.y[t])))
        for bi, dec_idx, var_start, d in dec.vector_blocks:
            o = int(offs[bi])
            for l in range(d):
                ent.append((o + l, o + l, float(sol.y[var_start + l])))
        return SymMatrix.from_entries(p0.n, ent)
    values = sol.block_z if dec.style == "construct" else sol.block_x
    acc: dict[tuple[int, int], float] = {}
    for (_, bi, clq, dec_idx) in dec.clique_blocks:
        V = np.asarray(values[dec_idx])
        for a, ga in enumerate(clq):
            for bpos in range(a, len(clq)):
                gb = clq[bpos]
                key = (min(ga, gb), max(ga, gb))
                acc[key] = acc.get(key, 0.0) + float(V[a, bpos])
    for bi, dec_idx, _, d in dec.vector_blocks:
        o = int(offs[bi])
        vals = np.asarray(sol.block_z[dec_idx] if dec.style == "construct"
                          else sol.block_x[dec_idx])
        for l in range(d):
            acc[(o + l, o + l)] = acc.get((o + l, o + l), 0.0) + float(vals[l])
    ent = [(i, j, v) for (i, j), v in acc.items()]
    return SymMatrix.from_entries(p0.n, ent)


# ---------------------------------------------------------------------------
# completion style
# ---------------------------------------------------------------------------


def build_completion(p: ConicProblem, assignment: ConeAssignment) -> DecomposedProblem:
    """Impose the assigned cone on every clique principal submatrix.

    Primal-form input: the matrix variable becomes one scalar per filled-
    pattern entry shared across cliques ("entry" style); vector blocks pass
    through.  Dual-form input: the constraints go directly onto the slack
    C - sum y_i A_i ("restrict" style), which requires psd or superset
    cones (clique-wise subset constraints on a shared slack do not contain
    or cover the psd cone, so they bound nothing).
    """
    if assignment.side != "completion":
        raise ValueError("assignment was made for the construction side")
    orient = _orientation(assignment.kinds)
    if p.form == "dual":
        if orient == "subset":
            raise ValueError("dual-form completion needs psd or superset "
                             "cones; subset constraints per clique give no "
                             "bound on the shared slack")
        return _build_restrict(p, assignment, bound="upper" if orient in
                               ("psd", "superset") else "lower")
    direction = {"psd": "upper", "subset": "upper", "superset": "lower"}[orient]
    return _build_entry(p, assignment, direction)


def _build_entry(p: ConicProblem, assignment: ConeAssignment,
                 direction: str) -> DecomposedProblem:
    cover = assignment.cover
    kept, offs = _split_cliques(p, cover)
    m = p.m

    entset = set()
    for (_, bi, clq, _) in kept:
        for a in range(len(clq)):
            for b in range(a, len(clq)):
                entset.add((p.block_of_index(clq[a]), clq[a], clq[b]))
    entries = tuple(sorted(entset, key=lambda e: (e[1], e[2])))
    entidx = {(gi, gj): t for t, (_, gi, gj) in enumerate(entries)}

    # variable layout: pattern entries, then vector-block entries
    nvar = len(entries)
    vec_blocks = []
    vec_output = []
    for bi, blk in enumerate(p.blocks):
        if not blk.kind.is_matrix:
            vec_blocks.append((bi, blk, nvar))
            nvar += blk.dim

    # decomposed block layout: [zero^m] + clique blocks + vector blocks
    dec_blocks: list[Block] = []
    if m:
        dec_blocks.append(Block(m, ZERO))
    clique_info = []
    doffs = [0] * 0
    pos = m
    for (k, bi, clq, loc) in kept:
        kind = assignment.kinds[k]
        dec_blocks.append(Block(len(clq), kind))
        clique_info.append((k, bi, clq, len(dec_blocks) - 1, pos))
        pos += len(clq)
    vec_info = []
    for bi, blk, var_start in vec_blocks:
        dec_blocks.append(Block(blk.dim, blk.kind))
        vec_info.append((bi, len(dec_blocks) - 1, var_start, blk.dim, pos))
        pos += blk.dim
    total = pos

    var_rows: list[list] = [[] for _ in range(nvar)]
    bt = np.zeros(nvar)

    # objective and equality coefficients from the data
    def scan(M: SymMatrix, sink):
        for gi, gj, v in M.entries():
            bi = p.block_of_index(gi)
            if p.blocks[bi].kind.is_matrix:
                t = entidx.get((gi, gj))
                if t is None:
                    raise ValueError(
                        f"data entry ({gi}, {gj}) lies outside the cover")
                sink(t, v * (2.0 if gi != gj else 1.0))
            else:
                o = int(offs[bi])
                vs = next(start for (b2, _, start) in vec_blocks if b2 == bi)
                sink(vs + (gi - o), v)

    scan(p.C, lambda t, coeff: bt.__setitem__(t, bt[t] - coeff))
    for i, Ai in enumerate(p.As):
        scan(Ai, lambda t, coeff, i=i: var_rows[t].append((i, i, -coeff)))

    # clique membership rows
    for (k, bi, clq, dec_idx, start) in clique_info:
        o = int(offs[bi])
        for a in range(len(clq)):
            for b2 in range(a, len(clq)):
                t = entidx[(clq[a], clq[b2])]
                var_rows[t].append((start + a, start + b2, -1.0))
    # vector pass-through rows
    for (bi, dec_idx, var_start, d, start) in vec_info:
        for l in range(d):
            var_rows[var_start + l].append((start + l, start + l, -1.0))

    C_ent = [(i, i, -float(p.b[i])) for i in range(m) if p.b[i] != 0.0]
    Ct = SymMatrix.from_entries(total, C_ent)
    As_t = [SymMatrix.from_entries(total, rows) for rows in var_rows]
    prob = ConicProblem("dual", Ct, As_t, bt, dec_blocks)
    return DecomposedProblem(
        original=p, problem=prob, assignment=assignment, style="entry",
        bound_direction=direction, dualized=False,
        matrix_entries=tuple((bi, gi, gj) for (bi, gi, gj) in entries),
        vector_blocks=tuple((bi, dec_idx, var_start, d)
                            for (bi, dec_idx, var_start, d, _) in vec_info),
        clique_blocks=tuple((k, bi, clq, dec_idx)
                            for (k, bi, clq, dec_idx, _) in clique_info),
        m_orig=m)


def _build_restrict(p: ConicProblem, assignment: ConeAssignment,
                    bound: str) -> DecomposedProblem:
    cover = assignment.cover
    kept, offs = _split_cliques(p, cover)

    dec_blocks: list[Block] = []
    clique_info = []
    pos = 0
    for (k, bi, clq, loc) in kept:
        dec_blocks.append(Block(len(clq), assignment.kinds[k]))
        clique_info.append((k, bi, clq, len(dec_blocks) - 1, pos))
        pos += len(clq)
    vec_info = []
    for bi, blk in enumerate(p.blocks):
        if not blk.kind.is_matrix:
            dec_blocks.append(Block(blk.dim, blk.kind))
            vec_info.append((bi, len(dec_blocks) - 1, -1, blk.dim, pos))
            pos += blk.dim
    total = pos

    def remap(M: SymMatrix) -> SymMatrix:
        ent = []
        for gi, gj, v in M.entries():
            bi = p.block_of_index(gi)
            if p.blocks[bi].kind.is_matrix:
                o = int(offs[bi])
                li, lj = gi - o, gj - o
                hit = False
                for (k, b2, clq, dec_idx, start) in clique_info:
                    if b2 != bi:
                        continue
                    try:
                        a = clq.index(gi)
                        c = clq.index(gj)
                    except ValueError:
                        continue
                    lo, hi = min(a, c), max(a, c)
                    ent.append((start + lo, start + hi, v))
                    hit = True
                if not hit:
                    raise ValueError(
                        f"data entry ({gi}, {gj}) lies outside the cover")
            else:
                o = int(offs[bi])
                vstart = next(s for (b2, _, _, _, s) in vec_info if b2 == bi)
                ent.append((vstart + gi - o, vstart + gj - o, v))
        return SymMatrix.from_entries(total, ent)

    Ct = remap(p.C)
    As_t = [remap(A) for A in p.As]
    prob = ConicProblem("dual", Ct, As_t, p.b.copy(), dec_blocks)
    return DecomposedProblem(
        original=p, problem=prob, assignment=assignment, style="restrict",
        bound_direction=bound, dualized=False, matrix_entries=(),
        vector_blocks=tuple((bi, dec_idx, -1, d)
                            for (bi, dec_idx, _, d, _) in vec_info),
        clique_blocks=tuple((k, bi, clq, dec_idx)
                            for (k, bi, clq, dec_idx, _) in clique_info),
        m_orig=p.m)


# ---------------------------------------------------------------------------
# construction style
# ---------------------------------------------------------------------------


def build_construction(p: ConicProblem, assignment: ConeAssignment) -> DecomposedProblem:
    """Write the slack as a sum of clique-supported cone blocks.

    Dual-form input: Z = C - sum y_i A_i is replaced by sum_k E_k' Z_k E_k
    with Z_k in the assigned cones; subset cones lower-bound the (max)
    optimum, superset cones upper-bound it on chordal covers.  A primal-form
    input is dualized first, so the value bounds the dual optimum (a lower
    bound on the primal one for subset cones, by weak duality).
    """
    if assignment.side != "construction":
        raise ValueError("assignment was made for the completion side")
    orient = _orientation(assignment.kinds)
    dualized = p.form == "primal"
    q = dualize(p) if dualized else p
    direction = {"psd": "lower", "subset": "lower", "superset": "upper"}[orient]
    if dualized and orient == "superset":
        raise ValueError("superset construction on a dualized primal bounds "
                         "neither side; use completion instead")

    cover = assignment.cover
    kept, offs = _split_cliques(q, cover)
    m = q.m

    entset = set()
    for (_, bi, clq, _) in kept:
        for a in range(len(clq)):
            for b in range(a, len(clq)):
                entset.add((bi, clq[a], clq[b]))
    entries = tuple(sorted(entset, key=lambda e: (e[1], e[2])))
    entidx = {(gi, gj): t for t, (_, gi, gj) in enumerate(entries)}
    E = len(entries)

    dec_blocks: list[Block] = []
    if E:
        dec_blocks.append(Block(E, ZERO))
    clique_info = []
    pos = E
    for (k, bi, clq, loc) in kept:
        dec_blocks.append(Block(len(clq), assignment.kinds[k]))
        clique_info.append((k, bi, clq, len(dec_blocks) - 1, pos))
        pos += len(clq)
    vec_info = []
    for bi, blk in enumerate(q.blocks):
        if not blk.kind.is_matrix:
            dec_blocks.append(Block(blk.dim, blk.kind))
            vec_info.append((bi, len(dec_blocks) - 1, blk.dim, pos))
            pos += blk.dim
    total = pos

    def remap_data(M: SymMatrix) -> list:
        ent = []
        for gi, gj, v in M.entries():
            bi = q.block_of_index(gi)
            if q.blocks[bi].kind.is_matrix:
                t = entidx.get((gi, gj))
                if t is None:
                    raise ValueError(
                        f"data entry ({gi}, {gj}) lies outside the cover")
                ent.append((t, t, v))
            else:
                o = int(offs[bi])
                vstart = next(s for (b2, _, _, s) in vec_info if b2 == bi)
                ent.append((vstart + gi - o, vstart + gj - o, v))
        return ent

    Ct = SymMatrix.from_entries(total, remap_data(q.C))
    As_t = [SymMatrix.from_entries(total, remap_data(A)) for A in q.As]

    # one variable per clique-block svec entry
    for (k, bi, clq, dec_idx, start) in clique_info:
        d = len(clq)
        for a in range(d):
            for b2 in range(a, d):
                t = entidx[(clq[a], clq[b2])]
                rows = [(t, t, 1.0), (start + a, start + b2, -1.0)]
                As_t.append(SymMatrix.from_entries(total, rows))
    bt = np.concatenate([q.b, np.zeros(len(As_t) - m)])
    prob = ConicProblem("dual", Ct, As_t, bt, dec_blocks)
    return DecomposedProblem(
        original=p, problem=prob, assignment=assignment, style="construct",
        bound_direction=direction, dualized=dualized,
        matrix_entries=tuple(entries),
        vector_blocks=tuple((bi, dec_idx, -1, d)
                            for (bi, dec_idx, d, _) in vec_info),
        clique_blocks=tuple((k, bi, clq, dec_idx)
                            for (k, bi, clq, dec_idx, _) in clique_info),
        m_orig=m)


# ---------------------------------------------------------------------------
# lowering structured cones to primitive ones
# ---------------------------------------------------------------------------


@dataclass
class LoweredProblem:
    """A problem with only primitive cones, plus the map back.

    plan entries, one per original block:
      ("copy", dec_index)
      ("gen", ref, tie_index, aux_indices, var_start)     dual form, subset
      ("con", ref, out_indices)                           dual form, superset
      ("genp", ref, aux_indices)                          primal form, subset
      ("conp", ref, keep_index, out_indices, row_start)   primal form, superset
    """

    original: ConicProblem
    problem: ConicProblem
    plan: list

    def map_solution(self, sol: Solution) -> Solution:
        p = self.original
        if sol.status in ("infeasible", "unbounded", "numerical_error"):
            return Solution(status=sol.status, y=np.zeros(p.m), block_x=[],
                            block_z=[], obj_primal=float("nan"),
                            obj_dual=float("nan"), res_primal=sol.res_primal,
                            res_dual=sol.res_dual, gap=sol.gap,
                            iterations=sol.iterations, objective=float("nan"),
                            solve_time=sol.solve_time,
                            certificate=sol.certificate)
        y0 = sol.y[:p.m].copy()
        offs = p.block_offsets()
        dense_slack: Optional[np.ndarray] = None

        def slack_block(bi: int):
            nonlocal dense_slack
            if dense_slack is None:
                Zg = p.C.to_dense()
                for i, Ai in enumerate(p.As):
                    if y0[i] != 0.0:
                        Zg -= y0[i] * Ai.to_dense()
                dense_slack = Zg
            o = int(offs[bi])
            d = p.blocks[bi].dim
            return dense_slack[o:o + d, o:o + d].copy()

        block_x: list = []
        block_z: list = []
        for bi, (blk, step) in enumerate(zip(p.blocks, self.plan)):
            tag = step[0]
            if tag == "copy":
                di = step[1]
                block_x.append(np.asarray(sol.block_x[di]))
                block_z.append(np.asarray(sol.block_z[di]))
            elif tag == "gen":
                _, ref, tie_idx, aux_idxs, var_start = step
                lam = _stack_values(ref, [sol.block_z[i] for i in aux_idxs])
                Zb = smat_array(ref.matrix @ lam, blk.dim)
                block_z.append(Zb)
                block_x.append(np.asarray(sol.block_x[tie_idx]))
            elif tag == "con":
                _, ref, out_idxs = step
                zeta = _stack_values(ref, [sol.block_x[i] for i in out_idxs])
                block_x.append(smat_array(ref.matrix.T @ zeta, blk.dim))
                block_z.append(slack_block(bi))
            elif tag == "genp":
                _, ref, aux_idxs = step
                lam = _stack_values(ref, [sol.block_x[i] for i in aux_idxs])
                block_x.append(smat_array(ref.matrix @ lam, blk.dim))
                block_z.append(slack_block(bi))
            else:  # "conp"
                _, ref, keep_idx, out_idxs, row_start = step
                block_x.append(np.asarray(sol.block_x[keep_idx]))
                mu = sol.y[row_start:row_start + ref.matrix.shape[0]]
                Zb = slack_block(bi) - smat_array(ref.matrix.T @ mu, blk.dim)
                block_z.append(Zb)
        return Solution(status=sol.status, y=y0, block_x=block_x,
                        block_z=block_z, obj_primal=sol.obj_primal,
                        obj_dual=sol.obj_dual, res_primal=sol.res_primal,
                        res_dual=sol.res_dual, gap=sol.gap,
                        iterations=sol.iterations, objective=sol.objective,
                        solve_time=sol.solve_time, certificate=None)


def _stack_values(ref: ConeReformulation, values: list) -> np.ndarray:
    """Concatenate aux/out block values into the reformulation's coordinate
    vector (svec for matrix blocks, plain for vector blocks)."""
    parts = []
    for (d, kind), val in zip(ref.blocks, values):
        arr = np.asarray(val, dtype=float)
        parts.append(svec_array(arr) if kind.is_matrix else arr.ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def _block_entry_lists(p: ConicProblem):
    """Entries of C and each A_i grouped by block, in local coordinates."""
    offs = p.block_offsets()
    nb = len(p.blocks)

    def group(M: SymMatrix):
        out: list[list] = [[] for _ in range(nb)]
        for gi, gj, v in M.entries():
            bi = p.block_of_index(gi)
            o = int(offs[bi])
            out[bi].append((gi - o, gj - o, v))
        return out

    per_A = [group(A) for A in p.As]
    As_by = [[per_A[i][bi] for i in range(len(p.As))] for bi in range(nb)]
    return group(p.C), As_by


def lower_problem(p: ConicProblem) -> LoweredProblem:
    """Replace structured cone blocks by primitive ones.

    Dual form: a subset block M in K becomes svec(M) = G lam with new
    variables lam in primitive cones and a matrix-equality tie; a superset
    block M in K* becomes constraint blocks holding sections of H svec(M).
    Primal form: a subset block is substituted X = smat(G lam) into the
    data (the block disappears in favor of the generator blocks); a superset
    block stays as a free matrix with new rows tying H svec(X) to new slack
    blocks.  Primitive blocks pass through unchanged.
    """
    if p.is_primitive():
        return LoweredProblem(p, p, [("copy", i) for i in range(len(p.blocks))])
    C_by, As_by = _block_entry_lists(p)
    m = p.m

    dec_blocks: list[Block] = []
    plan: list = []
    # entry lists for the new problem: C and one list per variable
    new_C: list = []
    new_As: list[list] = [[] for _ in range(m)]
    extra_vars: list[list] = []     # dual form: generator variables
    extra_rows: list[list] = []     # primal form: added constraint rows
    extra_b: list[float] = []

    def add_block(blk: Block) -> tuple[int, int]:
        dec_blocks.append(blk)
        start = sum(b.dim for b in dec_blocks[:-1])
        return len(dec_blocks) - 1, start

    def place(entries, start, sink):
        for li, lj, v in entries:
            sink.append((start + li, start + lj, v))

    for bi, blk in enumerate(p.blocks):
        kind = blk.kind
        if kind.is_primitive:
            di, start = add_block(blk)
            plan.append(("copy", di))
            place(C_by[bi], start, new_C)
            for i in range(m):
                place(As_by[bi][i], start, new_As[i])
            continue
        if p.form == "dual" and not kind.dual:
            ref = reformulate(blk.dim, kind)
            tie_idx, tstart = add_block(Block(blk.dim, ZEROMAT))
            place(C_by[bi], tstart, new_C)
            for i in range(m):
                place(As_by[bi][i], tstart, new_As[i])
            aux_idxs = []
            aux_layout = []
            for (d_a, kind_a) in ref.blocks:
                ai, astart = add_block(Block(d_a, kind_a))
                aux_idxs.append(ai)
                aux_layout.append((d_a, kind_a, astart))
            var_start = m + len(extra_vars)
            G = ref.matrix.tocsc()
            col = 0
            for (d_a, kind_a, astart) in aux_layout:
                w = svec_dim(d_a) if kind_a.is_matrix else d_a
                for t in range(w):
                    rows = []
                    gcol = G.getcol(col + t).tocoo()
                    for r, v in zip(gcol.row, gcol.data):
                        li, lj = _svec_pos_to_pair(blk.dim, int(r))
                        val = v if li == lj else v / _SQRT2
                        rows.append((tstart + li, tstart + lj, val))
                    if kind_a.is_matrix:
                        li, lj = _svec_pos_to_pair(d_a, t)
                        val = -1.0 if li == lj else -1.0 / _SQRT2
                        rows.append((astart + li, astart + lj, val))
                    else:
                        rows.append((astart + t, astart + t, -1.0))
                    extra_vars.append(rows)
                col += w
            plan.append(("gen", ref, tie_idx, tuple(aux_idxs), var_start))
        elif p.form == "dual" and kind.dual:
            ref = reformulate_dual(blk.dim, kind)
            H = ref.matrix.tocsr()
            Csv = _entries_to_svec(blk.dim, C_by[bi])
            Asv = [_entries_to_svec(blk.dim, As_by[bi][i]) for i in range(m)]
            out_idxs = []
            r0 = 0
            for (d_o, kind_o) in ref.blocks:
                w = svec_dim(d_o) if kind_o.is_matrix else d_o
                oi, ostart = add_block(Block(d_o, kind_o))
                out_idxs.append(oi)
                Hsec = H[r0:r0 + w]
                _sink_section(Hsec @ Csv, d_o, kind_o, ostart, new_C)
                for i in range(m):
                    _sink_section(Hsec @ Asv[i], d_o, kind_o, ostart, new_As[i])
                r0 += w
            plan.append(("con", ref, tuple(out_idxs)))
        elif p.form == "primal" and not kind.dual:
            ref = reformulate(blk.dim, kind)
            GT = ref.matrix.T.tocsr()
            Csv = _entries_to_svec(blk.dim, C_by[bi])
            Asv = [_entries_to_svec(blk.dim, As_by[bi][i]) for i in range(m)]
            aux_idxs = []
            r0 = 0
            for (d_a, kind_a) in ref.blocks:
                w = svec_dim(d_a) if kind_a.is_matrix else d_a
                ai, astart = add_block(Block(d_a, kind_a))
                aux_idxs.append(ai)
                Gsec = GT[r0:r0 + w]
                _sink_section(Gsec @ Csv, d_a, kind_a, astart, new_C)
                for i in range(m):
                    _sink_section(Gsec @ Asv[i], d_a, kind_a, astart, new_As[i])
                r0 += w
            plan.append(("genp", ref, tuple(aux_idxs)))
        else:
            ref = reformulate_dual(blk.dim, kind)
            keep_idx, kstart = add_block(Block(blk.dim, FREEMAT))
            place(C_by[bi], kstart, new_C)
            for i in range(m):
                place(As_by[bi][i], kstart, new_As[i])
            out_idxs = []
            out_layout = []
            for (d_o, kind_o) in ref.blocks:
                oi, ostart = add_block(Block(d_o, kind_o))
                out_idxs.append(oi)
                out_layout.append((d_o, kind_o, ostart))
            H = ref.matrix.tocsr()
            row_start = m + len(extra_rows)
            r0 = 0
            for (d_o, kind_o, ostart) in out_layout:
                w = svec_dim(d_o) if kind_o.is_matrix else d_o
                for t in range(w):
                    hrow = H[r0 + t].tocoo()
                    rows = []
                    for c, v in zip(hrow.col, hrow.data):
                        li, lj = _svec_pos_to_pair(blk.dim, int(c))
                        val = v if li == lj else v / _SQRT2
                        rows.append((kstart + li, kstart + lj, val))
                    if kind_o.is_matrix:
                        li, lj = _svec_pos_to_pair(d_o, t)
                        val = -1.0 if li == lj else -1.0 / _SQRT2
                        rows.append((ostart + li, ostart + lj, val))
                    else:
                        rows.append((ostart + t, ostart + t, -1.0))
                    extra_rows.append(rows)
                    extra_b.append(0.0)
                r0 += w
            plan.append(("conp", ref, keep_idx, tuple(out_idxs), row_start))

    total = sum(b.dim for b in dec_blocks)
    Ct = SymMatrix.from_entries(total, new_C)
    if p.form == "dual":
        As_t = [SymMatrix.from_entries(total, lst) for lst in new_As]
        As_t += [SymMatrix.from_entries(total, lst) for lst in extra_vars]
        bt = np.concatenate([p.b, np.zeros(len(extra_vars))])
    else:
        As_t = [SymMatrix.from_entries(total, lst) for lst in new_As]
        As_t += [SymMatrix.from_entries(total, lst) for lst in extra_rows]
        bt = np.concatenate([p.b, np.asarray(extra_b)])
    prob = ConicProblem(p.form, Ct, As_t, bt, dec_blocks)
    return LoweredProblem(p, prob, plan)


def _svec_pos_to_pair(n: int, t: int) -> tuple[int, int]:
    """Inverse of svec_index for dimension n."""
    i = 0
    row_len = n
    while t >= row_len:
        t -= row_len
        i += 1
        row_len -= 1
    return i, i + t


def _entries_to_svec(n: int, entries) -> np.ndarray:
    v = np.zeros(svec_dim(n))
    for li, lj, val in entries:
        v[svec_index(n, li, lj)] = val * (_SQRT2 if li != lj else 1.0)
    return v


def _sink_section(vals: np.ndarray, d: int, kind: ConeKind, start: int,
                  sink: list) -> None:
    """Append entries for a section vector placed on a new block: svec
    coordinates become matrix entries for matrix kinds, diagonal entries
    for vector kinds.  Zeros are dropped."""
    vals = np.asarray(vals).ravel()
    if kind.is_matrix:
        for t, v in enumerate(vals):
            if v == 0.0:
                continue
            li, lj = _svec_pos_to_pair(d, t)
            sink.append((start + li, start + lj,
                         float(v) if li == lj else float(v) / _SQRT2))
    else:
        for t, v in enumerate(vals):
            if v != 0.0:
                sink.append((start + t, start + t, float(v)))
