"""First-order conic solver over primitive cones, plus problem/solution I/O.

Both problem forms embed directly into a homogeneous self-dual model

    find (u, v):  Qu = v,  u in C,  v in C*,
    u = (x, y, tau),  v = (r, s, kappa),
    Q = [[0, A', c], [-A, 0, b], [-c', -b', 0]],
    C = R^nx x K* x R+,

for the standard-form pair  min c'x s.t. Ax + s = b, s in K  and
max -b'y s.t. A'y + c = 0, y in K*.  A dual-form problem maps its own
variables y onto x (one column per multiplier, one row per stacked svec
coordinate); a primal-form problem maps its stacked block variables onto x
with leading equality rows and -I rows tying each cone block to a slack.
Either way the problem as stated IS the embedded primal, so solver statuses
(optimal / infeasible / unbounded) apply to it verbatim.

The iteration is the operator splitting

    u~   = (I + Q)^{-1} (u + v)
    u^+  = Pi_C(alpha u~ + (1 - alpha) u - v)
    v^+  = v - alpha u~ - (1 - alpha) u + u^+

with the linear solve reduced, via the skew structure of Q, to one cached
sparse factorization of I + A'A (or I + AA', whichever is smaller).

Everything is deterministic: no randomness, fixed iteration order, and the
`jobs` setting does not change numerics (projections are vectorized), so
repeated runs return bitwise-identical iterates.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    INFEASIBLE,
    MAXITER,
    NUMERICAL_ERROR,
    OPTIMAL,
    UNBOUNDED,
    Block,
    ConeKind,
    ConicProblem,
    Solution,
    SymMatrix,
    smat_array,
    svec_dim,
    triu_pairs,
)

_SQRT2 = np.sqrt(2.0)

__all__ = [
    "SolverSettings",
    "solve",
    "min_eigenvalue",
    "check_solution",
    "CheckReport",
    "export_sdpa",
    "import_sdpa",
    "export_json",
    "import_json",
    "solution_to_json",
    "solution_from_json",
    "solution_to_csv",
]


@dataclass(frozen=True)
class SolverSettings:
    """Termination and conditioning knobs for `solve`.

    eps bounds the three normalized residuals (primal, dual, gap) at the
    reported solution; eps_infeasible bounds the certificate residual before
    an infeasible/unbounded status is declared.  alpha in (0, 2) is the
    over-relaxation weight.  jobs is accepted for interface stability but
    projections are vectorized, so results are identical for any value.
    seed likewise does not influence the (randomness-free) iteration.
    """

    max_iter: int = 50000
    eps: float = 1e-6
    eps_infeasible: float = 1e-7
    alpha: float = 1.5
    scaling: bool = True
    check_every: int = 25
    time_limit: Optional[float] = None
    verbose: bool = False
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        if self.max_iter < 1 or self.eps <= 0:
            raise ValueError("max_iter >= 1 and eps > 0 required")


# ---------------------------------------------------------------------------
# encoding a block problem into standard form
# ---------------------------------------------------------------------------


def _value_layout(p: ConicProblem) -> np.ndarray:
    """Start offsets of each block in the stacked value vector (svec widths
    for matrix blocks, plain widths for vector blocks)."""
    return np.concatenate([[0], np.cumsum([blk.width for blk in p.blocks])])


def _data_triplets(p: ConicProblem, M: SymMatrix, starts: np.ndarray):
    """Positions and values of svec-stacked entries of M (block layout)."""
    if M.nnz == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    offs = p.block_offsets()
    bi = np.searchsorted(offs, M.rows, side="right") - 1
    li = M.rows - offs[bi]
    lj = M.cols - offs[bi]
    dims = np.asarray([blk.dim for blk in p.blocks], dtype=np.int64)[bi]
    ismat = np.asarray([blk.kind.is_matrix for blk in p.blocks], dtype=bool)[bi]
    pos = np.where(
        ismat,
        starts[bi] + li * dims - li * (li - 1) // 2 + (lj - li),
        starts[bi] + li,
    )
    vals = M.vals * np.where(ismat & (li != lj), _SQRT2, 1.0)
    return pos.astype(np.int64), vals


def _data_vector(p: ConicProblem, M: SymMatrix, starts: np.ndarray) -> np.ndarray:
    w = np.zeros(int(starts[-1]))
    pos, vals = _data_triplets(p, M, starts)
    w[pos] = vals
    return w


@dataclass
class _ProjPlan:
    zero_out: np.ndarray
    clamp: np.ndarray
    rsoc3: np.ndarray
    soc: list
    rsoc_other: list
    psd: list  # entries (d, idx (g, svec_dim(d)), iu, ju, offmask)


def _build_plan(cones: list) -> _ProjPlan:
    """Compile the s-row cone list into a projection plan for Pi_{K*}.

    `cones` holds (tag, start, width, dim) in row order.  Rows of zero-type
    cones are unconstrained in u_y (dual is free); rows of free-type cones
    are pinned to 0 (dual is the zero cone); the rest are self-dual.
    """
    zero_out, clamp, rsoc3 = [], [], []
    soc, rsoc_other = [], []
    psd_groups: dict[int, list[int]] = {}
    for tag, start, width, dim in cones:
        if tag in ("zero", "zeromat"):
            continue
        if tag in ("free", "freemat"):
            zero_out.append(np.arange(start, start + width))
        elif tag == "nonneg":
            clamp.append(np.arange(start, start + width))
        elif tag == "soc":
            soc.append((start, width))
        elif tag == "rsoc":
            if width == 3:
                rsoc3.append(start)
            else:
                rsoc_other.append((start, width))
        elif tag == "psd":
            psd_groups.setdefault(dim, []).append(start)
        else:
            raise ValueError(f"cone tag {tag!r} is not primitive")
    psd = []
    for d, starts in sorted(psd_groups.items()):
        T = svec_dim(d)
        idx = np.asarray(starts, dtype=np.int64)[:, None] + np.arange(T)[None, :]
        iu, ju = triu_pairs(d)
        psd.append((d, idx, iu, ju, iu != ju))
    cat = lambda lst: (np.concatenate(lst) if lst else np.zeros(0, dtype=np.int64))
    return _ProjPlan(cat(zero_out), cat(clamp),
                     np.asarray(rsoc3, dtype=np.int64), soc, rsoc_other, psd)


def _proj_soc_inplace(w: np.ndarray, start: int, dim: int) -> None:
    t = w[start]
    z = w[start + 1:start + dim]
    nz = float(np.linalg.norm(z))
    if nz <= t:
        return
    if nz <= -t:
        w[start:start + dim] = 0.0
        return
    beta = 0.5 * (t + nz)
    w[start] = beta
    z *= beta / nz


def _proj_rsoc_span(w: np.ndarray, start: int, dim: int) -> None:
    """Project (p, q, z) with cone 2pq >= |z|^2, p,q >= 0 via SOC rotation."""
    p, q = w[start], w[start + 1]
    t = (p + q) / _SQRT2
    u1 = (p - q) / _SQRT2
    buf = np.empty(dim)
    buf[0] = t
    buf[1] = u1
    buf[2:] = w[start + 2:start + dim]
    _proj_soc_inplace(buf, 0, dim)
    w[start] = (buf[0] + buf[1]) / _SQRT2
    w[start + 1] = (buf[0] - buf[1]) / _SQRT2
    w[start + 2:start + dim] = buf[2:]


def _project_dual_cone(w: np.ndarray, plan: _ProjPlan) -> None:
    """In-place projection of the y-slot onto K* (see _build_plan)."""
    if plan.zero_out.size:
        w[plan.zero_out] = 0.0
    if plan.clamp.size:
        w[plan.clamp] = np.maximum(w[plan.clamp], 0.0)
    if plan.rsoc3.size:
        s = plan.rsoc3
        p, q, z = w[s], w[s + 1], w[s + 2]
        t = (p + q) / _SQRT2
        u1 = (p - q) / _SQRT2
        nz = np.hypot(u1, z)
        inside = nz <= t
        polar = nz <= -t
        beta = 0.5 * (t + nz)
        scale = np.where(nz > 0, beta / np.where(nz > 0, nz, 1.0), 0.0)
        tn = np.where(inside, t, np.where(polar, 0.0, beta))
        un = np.where(inside, u1, np.where(polar, 0.0, scale * u1))
        zn = np.where(inside, z, np.where(polar, 0.0, scale * z))
        w[s] = (tn + un) / _SQRT2
        w[s + 1] = (tn - un) / _SQRT2
        w[s + 2] = zn
    for start, dim in plan.soc:
        _proj_soc_inplace(w, start, dim)
    for start, dim in plan.rsoc_other:
        _proj_rsoc_span(w, start, dim)
    for d, idx, iu, ju, off in plan.psd:
        V = w[idx]
        V[:, off] /= _SQRT2
        g = V.shape[0]
        mats = np.zeros((g, d, d))
        mats[:, iu, ju] = V
        mats[:, ju, iu] = V
        lam, vec = np.linalg.eigh(mats)
        np.clip(lam, 0.0, None, out=lam)
        mats = (vec * lam[:, None, :]) @ np.transpose(vec, (0, 2, 1))
        V = mats[:, iu, ju]
        V[:, off] *= _SQRT2
        w[idx] = V


@dataclass
class _Encoding:
    A: sp.csr_matrix
    AT: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    A0: sp.csr_matrix
    AT0: sp.csr_matrix
    b0: np.ndarray
    c0: np.ndarray
    Dv: np.ndarray
    Ev: np.ndarray
    sigma: float
    rho: float
    plan: _ProjPlan
    cones: list
    m_eq: int
    col_starts: np.ndarray  # primal form: x layout per block
    row_starts: np.ndarray  # value rows per block (cone rows), -1 if none


def _encode(p: ConicProblem, settings: SolverSettings) -> _Encoding:
    starts = _value_layout(p)
    tags = [blk.kind.tag for blk in p.blocks]
    if p.form == "dual":
        R = int(starts[-1])
        m = p.m
        rows, cols, vals = [], [], []
        for i, A in enumerate(p.As):
            pos, v = _data_triplets(p, A, starts)
            rows.append(pos)
            cols.append(np.full(pos.size, i, dtype=np.int64))
            vals.append(v)
        A_std = sp.csr_matrix(
            (np.concatenate(vals) if vals else np.zeros(0),
             (np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64),
              np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64))),
            shape=(R, m))
        b_std = _data_vector(p, p.C, starts)
        c_std = -p.b.copy()
        cones = [(tags[k], int(starts[k]), int(starts[k + 1] - starts[k]),
                  p.blocks[k].dim) for k in range(len(p.blocks))]
        m_eq = 0
        col_starts = np.zeros(0, dtype=np.int64)
        row_starts = starts[:-1].astype(np.int64)
    else:
        N = int(starts[-1])
        m = p.m
        rows, cols, vals = [], [], []
        for i, A in enumerate(p.As):
            pos, v = _data_triplets(p, A, starts)
            cols.append(pos)
            rows.append(np.full(pos.size, i, dtype=np.int64))
            vals.append(v)
        cones = [("zero", 0, m, 0)] if m else []
        row_starts = np.full(len(p.blocks), -1, dtype=np.int64)
        r = m
        for k, blk in enumerate(p.blocks):
            if blk.kind.tag in ("free", "freemat"):
                continue
            w = blk.width
            rows.append(np.arange(r, r + w, dtype=np.int64))
            cols.append(np.arange(starts[k], starts[k] + w, dtype=np.int64))
            vals.append(np.full(w, -1.0))
            cones.append((blk.kind.tag, r, w, blk.dim))
            row_starts[k] = r
            r += w
        A_std = sp.csr_matrix(
            (np.concatenate(vals) if vals else np.zeros(0),
             (np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64),
              np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64))),
            shape=(r, N))
        b_std = np.concatenate([p.b, np.zeros(r - m)])
        c_std = _data_vector(p, p.C, starts)
        m_eq = m
        col_starts = starts[:-1].astype(np.int64)

    A0 = A_std.tocsr()
    b0 = b_std.copy()
    c0 = c_std.copy()
    Dv = np.ones(A0.shape[0])
    Ev = np.ones(A0.shape[1])
    if settings.scaling and A0.nnz:
        uniform = [(s, w) for t, s, w, _ in cones if t in ("soc", "rsoc", "psd")]
        A_std, Dv, Ev = _equilibrate(A0, uniform)
    else:
        A_std = A0.copy()
    b_hat = Dv * b0
    c_hat = Ev * c0
    nb, nc = float(np.linalg.norm(b_hat)), float(np.linalg.norm(c_hat))
    sigma = nb if nb > 1e-12 else 1.0
    rho = nc if nc > 1e-12 else 1.0
    b_hat /= sigma
    c_hat /= rho
    plan = _build_plan(cones)
    return _Encoding(A_std.tocsr(), A_std.T.tocsr(), b_hat, c_hat,
                     A0, A0.T.tocsr(), b0, c0, Dv, Ev, sigma, rho,
                     plan, cones, m_eq, col_starts, row_starts)


def _equilibrate(A: sp.csr_matrix, uniform: list, rounds: int = 10):
    """Ruiz equilibration with block-uniform row scaling on soc/rsoc/psd rows
    (a shared positive scale keeps those cones invariant)."""
    Dv = np.ones(A.shape[0])
    Ev = np.ones(A.shape[1])
    W = A.copy().tocsr()
    for _ in range(rounds):
        absW = abs(W)
        rn = absW.max(axis=1).toarray().ravel()
        for s, w in uniform:
            rn[s:s + w] = rn[s:s + w].max()
        cn = absW.max(axis=0).toarray().ravel()
        rn = np.where(rn > 0, np.sqrt(rn), 1.0)
        cn = np.where(cn > 0, np.sqrt(cn), 1.0)
        W = sp.csr_matrix(W.multiply(1.0 / rn[:, None]).multiply(1.0 / cn[None, :]))
        Dv /= rn
        Ev /= cn
    return W, Dv, Ev


class _LinSolve:
    """Cached solve of [[I, A'], [-A, I]] (x; y) = (h1; h2)."""

    def __init__(self, A: sp.csr_matrix, AT: sp.csr_matrix):
        self.A, self.AT = A, AT
        m, n = A.shape
        self.via_cols = n <= m
        if n == 0 or m == 0:
            self.factor = None
        elif self.via_cols:
            G = (sp.identity(n) + AT @ A).tocsc()
            self.factor = spla.splu(G)
        else:
            G = (sp.identity(m) + A @ AT).tocsc()
            self.factor = spla.splu(G)

    def __call__(self, h1: np.ndarray, h2: np.ndarray):
        if self.factor is None:
            # one of the dimensions is empty; M degenerates to the identity
            return h1.copy(), h2.copy()
        if self.via_cols:
            x = self.factor.solve(h1 - self.AT @ h2)
            y = h2 + self.A @ x
        else:
            y = self.factor.solve(h2 + self.A @ h1)
            x = h1 - self.AT @ y
        return x, y


def solve(p: ConicProblem, settings: Optional[SolverSettings] = None) -> Solution:
    """Solve a conic problem whose blocks are all primitive cones.

    Structured blocks (diagonal/dd/sdd/fw/bfw2 and their duals) must be
    lowered first (see `decomp.lower_problem`).  Statuses refer to the
    problem as stated; on infeasible/unbounded the `certificate` dict holds
    the normalized improving ray in stacked coordinates.
    """
    if settings is None:
        settings = SolverSettings()
    if not p.is_primitive():
        bad = sorted({str(b.kind) for b in p.blocks if not b.kind.is_primitive})
        raise ValueError(
            f"solve requires primitive cones; lower these first: {bad}")
    t_start = time.perf_counter()
    enc = _encode(p, settings)
    A, AT, b, c = enc.A, enc.AT, enc.b, enc.c
    ms, nx = A.shape
    lin = _LinSolve(A, AT)
    qx, qy = lin(c, b)
    denom = 1.0 + float(c @ qx) + float(b @ qy)

    u = np.zeros(nx + ms + 1)
    v = np.zeros(nx + ms + 1)
    u[-1] = 1.0
    v[-1] = 1.0
    alpha = settings.alpha

    best = None
    status = MAXITER
    cert = None
    iters_done = settings.max_iter

    def candidates(uvec, vvec):
        tau = uvec[-1]
        x = enc.sigma * enc.Ev * uvec[:nx]
        y = enc.rho * enc.Dv * uvec[nx:-1]
        s = enc.sigma * vvec[nx:-1] / enc.Dv
        return tau, x, y, s

    k = 0
    while k < settings.max_iter:
        w = u + v
        px, py = lin(w[:nx], w[nx:nx + ms])
        tau_t = (w[-1] + float(c @ px) + float(b @ py)) / denom
        ut = np.empty_like(u)
        ut[:nx] = px - tau_t * qx
        ut[nx:-1] = py - tau_t * qy
        ut[-1] = tau_t
        t_vec = alpha * ut + (1.0 - alpha) * u
        unew = t_vec - v
        _project_dual_cone(unew[nx:-1], enc.plan)
        if unew[-1] < 0.0:
            unew[-1] = 0.0
        v = v - t_vec + unew
        u = unew
        k += 1

        if k % settings.check_every and k < settings.max_iter:
            continue
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(v)):
            status = NUMERICAL_ERROR
            iters_done = k
            break
        tau, xr, yr, sr = candidates(u, v)
        kappa = v[-1]
        if tau > 1e-8 * max(1.0, kappa):
            xc, yc, sc = xr / tau, yr / tau, sr / tau
            pres = np.linalg.norm(enc.A0 @ xc + sc - enc.b0) / (
                1.0 + np.linalg.norm(enc.b0))
            dres = np.linalg.norm(enc.AT0 @ yc + enc.c0) / (
                1.0 + np.linalg.norm(enc.c0))
            ctx = float(enc.c0 @ xc)
            bty = float(enc.b0 @ yc)
            gap = abs(ctx + bty) / (1.0 + abs(ctx) + abs(bty))
            score = max(pres, dres, gap)
            if best is None or score < best[0]:
                best = (score, pres, dres, gap, xc.copy(), yc.copy(), sc.copy())
            if settings.verbose and (k // settings.check_every) % 40 == 0:
                import sys
                print(f"  iter {k:6d}  pres {pres:9.2e}  dres {dres:9.2e}  "
                      f"gap {gap:9.2e}", file=sys.stderr)
            if score <= settings.eps:
                status = OPTIMAL
                iters_done = k
                break
        if tau < 1e-4 * max(1.0, kappa):
            bty = float(enc.b0 @ yr)
            if bty < -1e-14:
                yray = yr / (-bty)
                if np.linalg.norm(enc.AT0 @ yray) <= settings.eps_infeasible:
                    status = INFEASIBLE
                    cert = {"kind": "infeasibility", "y": yray}
                    iters_done = k
                    break
            ctx = float(enc.c0 @ xr)
            if ctx < -1e-14:
                xray = xr / (-ctx)
                sray = sr / (-ctx)
                if np.linalg.norm(enc.A0 @ xray + sray) <= settings.eps_infeasible:
                    status = UNBOUNDED
                    cert = {"kind": "unboundedness", "x": xray, "s": sray}
                    iters_done = k
                    break
        if settings.time_limit is not None and (
                time.perf_counter() - t_start > settings.time_limit):
            status = MAXITER
            iters_done = k
            break

    elapsed = time.perf_counter() - t_start
    if status in (INFEASIBLE, UNBOUNDED):
        nanv = float("nan")
        return Solution(status=status, y=np.zeros(p.m), block_x=[], block_z=[],
                        obj_primal=nanv, obj_dual=nanv, res_primal=nanv,
                        res_dual=nanv, gap=nanv, iterations=iters_done,
                        objective=nanv, solve_time=elapsed, certificate=cert)
    if status == NUMERICAL_ERROR and best is None:
        nanv = float("nan")
        return Solution(status=status, y=np.zeros(p.m), block_x=[], block_z=[],
                        obj_primal=nanv, obj_dual=nanv, res_primal=nanv,
                        res_dual=nanv, gap=nanv, iterations=iters_done,
                        objective=nanv, solve_time=elapsed, certificate=None)
    if status == OPTIMAL:
        tau, xr, yr, sr = candidates(u, v)
        xc, yc, sc = xr / tau, yr / tau, sr / tau
        pres = np.linalg.norm(enc.A0 @ xc + sc - enc.b0) / (
            1.0 + np.linalg.norm(enc.b0))
        dres = np.linalg.norm(enc.AT0 @ yc + enc.c0) / (
            1.0 + np.linalg.norm(enc.c0))
        ctx = float(enc.c0 @ xc)
        bty = float(enc.b0 @ yc)
        gap = abs(ctx + bty) / (1.0 + abs(ctx) + abs(bty))
    else:
        if best is None:
            tau, xr, yr, sr = candidates(u, v)
            tau = max(tau, 1e-12)
            xc, yc, sc = xr / tau, yr / tau, sr / tau
            pres = dres = gap = float("nan")
        else:
            _, pres, dres, gap, xc, yc, sc = best
    return _extract(p, enc, status, xc, yc, sc, pres, dres, gap,
                    iters_done, elapsed)


def _extract(p, enc, status, x, y, s, pres, dres, gap, iters, elapsed):
    block_x: list = []
    block_z: list = []
    starts = _value_layout(p)
    if p.form == "dual":
        y_our = x
        for k, blk in enumerate(p.blocks):
            a, w = int(starts[k]), blk.width
            zslice = s[a:a + w]
            xslice = y[a:a + w]
            if blk.kind.is_matrix:
                block_z.append(smat_array(zslice, blk.dim))
                block_x.append(smat_array(xslice, blk.dim))
            else:
                block_z.append(zslice.copy())
                block_x.append(xslice.copy())
        obj_dual = float(p.b @ y_our)
        obj_primal = float(enc.b0 @ y)
        objective = obj_dual
    else:
        y_our = -y[:enc.m_eq]
        dense_slack = None
        for k, blk in enumerate(p.blocks):
            a, w = int(starts[k]), blk.width
            r = int(enc.row_starts[k])
            if r >= 0:
                xs = s[r:r + w]
                zs = y[r:r + w]
            else:
                xs = x[a:a + w]
                if dense_slack is None:
                    Zg = p.C.to_dense()
                    for i, Ai in enumerate(p.As):
                        if y_our[i] != 0.0:
                            Zg -= y_our[i] * Ai.to_dense()
                    dense_slack = Zg
                offs = p.block_offsets()
                o = int(offs[k])
                sub = dense_slack[o:o + blk.dim, o:o + blk.dim]
                zs = None
                if blk.kind.is_matrix:
                    block_x.append(smat_array(xs, blk.dim))
                    block_z.append(sub.copy())
                else:
                    block_x.append(xs.copy())
                    block_z.append(np.diag(sub).copy())
                continue
            if blk.kind.is_matrix:
                block_x.append(smat_array(xs, blk.dim))
                block_z.append(smat_array(zs, blk.dim))
            else:
                block_x.append(xs.copy())
                block_z.append(zs.copy())
        obj_primal = float(enc.c0 @ x)
        obj_dual = float(p.b @ y_our)
        objective = obj_primal
    return Solution(status=status, y=np.asarray(y_our, dtype=float),
                    block_x=block_x, block_z=block_z,
                    obj_primal=obj_primal, obj_dual=obj_dual,
                    res_primal=float(pres), res_dual=float(dres),
                    gap=float(gap), iterations=iters, objective=objective,
                    solve_time=elapsed, certificate=None)


# ---------------------------------------------------------------------------
# eigenvalue helper and independent solution checking
# ---------------------------------------------------------------------------


def min_eigenvalue(M, tol: float = 1e-9) -> float:
    """Smallest eigenvalue of a symmetric matrix (SymMatrix or ndarray).

    Dense path up to n = 1500; beyond that a Lanczos solve on the shifted
    operator, falling back to dense if it fails to converge.
    """
    if isinstance(M, SymMatrix):
        n = M.n
        if n <= 1500:
            return float(np.linalg.eigvalsh(M.to_dense()).min()) if n else 0.0
        S = sp.coo_matrix((M.vals, (M.rows, M.cols)), shape=(n, n))
        S = (S + sp.triu(S, k=1).T).tocsr()
    else:
        A = np.asarray(M, dtype=float)
        n = A.shape[0]
        if n == 0:
            return 0.0
        if n <= 1500:
            return float(np.linalg.eigvalsh(0.5 * (A + A.T)).min())
        S = sp.csr_matrix(0.5 * (A + A.T))
    try:
        lam = spla.eigsh(S, k=1, which="SA", tol=tol, maxiter=50 * S.shape[0],
                         return_eigenvectors=False)
        return float(lam[0])
    except Exception:
        return float(np.linalg.eigvalsh(S.toarray()).min())


def _cone_violation(val, kind: ConeKind, dim: int) -> float:
    """How far a block value sits outside its cone (0 when inside)."""
    tag = kind.tag
    if tag in ("free", "freemat"):
        return 0.0
    if tag in ("zero", "zeromat"):
        return float(np.abs(val).max(initial=0.0))
    if tag == "nonneg":
        return float(max(0.0, -np.min(val, initial=0.0)))
    if tag == "soc":
        return float(max(0.0, np.linalg.norm(val[1:]) - val[0]))
    if tag == "rsoc":
        t = (val[0] + val[1]) / _SQRT2
        w = np.concatenate([[(val[0] - val[1]) / _SQRT2], val[2:]])
        return float(max(0.0, np.linalg.norm(w) - t))
    # matrix kinds: dense value
    A = np.asarray(val, dtype=float)
    if tag == "psd":
        return float(max(0.0, -np.linalg.eigvalsh(A).min()))
    from . import cones as _cones
    if tag == "diagonal" and not kind.dual:
        off = A - np.diag(np.diag(A))
        return float(max(np.abs(off).max(initial=0.0),
                         max(0.0, -np.diag(A).min(initial=0.0))))
    if tag == "diagonal" and kind.dual:
        return float(max(0.0, -np.diag(A).min(initial=0.0)))
    if tag == "dd" and not kind.dual:
        _, cert = _cones.dd_membership(A)
        return float(max(0.0, -cert.worst))
    if tag == "dd" and kind.dual:
        d = np.diag(A)
        off = np.abs(A - np.diag(d))
        worst = (np.add.outer(d, d) - 2.0 * off).min()
        return float(max(0.0, -min(worst, d.min())))
    if tag == "sdd" and not kind.dual:
        ok, _ = _cones.sdd_membership(A)
        if ok:
            return 0.0
        # distance proxy: how much identity must be added
        lo, hi = 0.0, max(1.0, float(np.abs(A).max()))
        while not _cones.sdd_membership(A + hi * np.eye(A.shape[0]))[0]:
            hi *= 2.0
            if hi > 1e12:
                return hi
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if _cones.sdd_membership(A + mid * np.eye(A.shape[0]))[0]:
                hi = mid
            else:
                lo = mid
        return hi
    if kind.dual and tag in ("sdd", "fw", "bfw2"):
        if tag == "sdd":
            supports = _cones.fw_supports(dim, 2)
        else:
            supports = _cones.fw_supports(dim, kind.k or 2, kind.partition)
        worst = 0.0
        for S in supports:
            sub = A[np.ix_(S, S)]
            worst = max(worst, -float(np.linalg.eigvalsh(sub).min()))
        return max(0.0, worst)
    if tag in ("fw", "bfw2"):
        # member of a psd subset must at least be psd (necessary check)
        return float(max(0.0, -np.linalg.eigvalsh(A).min()))
    raise ValueError(f"no violation measure for kind {kind}")


@dataclass
class CheckReport:
    ok: bool
    res_primal: float
    res_dual: float
    gap: float
    cone_violation: float
    messages: list = field(default_factory=list)


def check_solution(p: ConicProblem, sol: Solution,
                   eps: float = 1e-6, factor: float = 10.0) -> CheckReport:
    """Replay a solution against the problem data, independent of the solver.

    Recomputes equality residuals, the slack identity, objective gap, and
    per-block cone violations from (C, A_i, b) and the reported block values.
    Passes when everything is within factor * eps (relative where the solver
    normalizes).  fw/bfw2 primal blocks get the necessary psd check only.
    """
    msgs = []
    offs = p.block_offsets()
    scale = 1.0 + float(np.abs(p.C.vals).max(initial=0.0))

    def assemble(blocks):
        X = np.zeros((p.n, p.n))
        for k, blk in enumerate(p.blocks):
            o = int(offs[k])
            if blk.kind.is_matrix:
                X[o:o + blk.dim, o:o + blk.dim] = blocks[k]
            else:
                X[np.arange(o, o + blk.dim), np.arange(o, o + blk.dim)] = blocks[k]
        return X

    if sol.status in (INFEASIBLE, UNBOUNDED):
        return CheckReport(True, 0.0, 0.0, 0.0, 0.0,
                           [f"status {sol.status}: nothing to replay"])

    Z_data = p.C.to_dense()
    for i, Ai in enumerate(p.As):
        Z_data -= sol.y[i] * Ai.to_dense()

    cone_viol = 0.0
    if p.form == "primal":
        X = assemble(sol.block_x)
        r = np.array([Ai.to_dense().ravel() @ X.ravel() for Ai in p.As]) - p.b
        pres = float(np.linalg.norm(r)) / (1.0 + float(np.linalg.norm(p.b)))
        Zrep = assemble(sol.block_z)
        dres = float(np.abs(Zrep - Z_data).max(initial=0.0)) / scale
        for k, blk in enumerate(p.blocks):
            cone_viol = max(cone_viol, _cone_violation(
                sol.block_x[k], blk.kind, blk.dim) / scale)
            cone_viol = max(cone_viol, _cone_violation(
                sol.block_z[k], blk.kind.dual_kind(), blk.dim) / scale)
        op, od = sol.obj_primal, sol.obj_dual
    else:
        Zrep = assemble(sol.block_z)
        pres = float(np.abs(Zrep - Z_data).max(initial=0.0)) / scale
        for k, blk in enumerate(p.blocks):
            cone_viol = max(cone_viol, _cone_violation(
                sol.block_z[k], blk.kind, blk.dim) / scale)
        X = assemble(sol.block_x)
        r = np.array([Ai.to_dense().ravel() @ X.ravel() for Ai in p.As]) - p.b
        dres = float(np.linalg.norm(r)) / (1.0 + float(np.linalg.norm(p.b)))
        for k, blk in enumerate(p.blocks):
            cone_viol = max(cone_viol, _cone_violation(
                sol.block_x[k], blk.kind.dual_kind(), blk.dim) / scale)
        op, od = sol.obj_primal, sol.obj_dual
    gap = abs(op - od) / (1.0 + abs(op) + abs(od))
    tol = factor * eps
    ok = pres <= tol and dres <= tol and gap <= tol and cone_viol <= tol
    if not ok:
        msgs.append(f"residuals pres={pres:.2e} dres={dres:.2e} gap={gap:.2e} "
                    f"cone={cone_viol:.2e} exceed {tol:.2e}")
    return CheckReport(ok, pres, dres, gap, cone_viol, msgs)


# ---------------------------------------------------------------------------
# SDPA sparse format
# ---------------------------------------------------------------------------


def export_sdpa(p: ConicProblem, path: str) -> None:
    """Write a primal-form problem with psd/nonneg blocks as SDPA sparse text.

    Layout: m / nblocks / block sizes (negative = diagonal block) / b /
    one entry per line "matno blockno i j value" with 1-based local upper-
    triangle indices, matno 0 for the objective matrix.  Data matrices are
    written literally; the objective sense is min <C, X> as in `form
    "primal"`.
    """
    if p.form != "primal":
        raise ValueError("sdpa export takes primal-form problems "
                         "(use dualize() first)")
    for blk in p.blocks:
        if blk.kind.tag not in ("psd", "nonneg"):
            raise ValueError("sdpa export supports psd and nonneg blocks only")
    offs = p.block_offsets()
    sizes = [blk.dim if blk.kind.tag == "psd" else -blk.dim for blk in p.blocks]
    out = io.StringIO()
    out.write(f"{p.m}\n")
    out.write(f"{len(p.blocks)}\n")
    out.write(" ".join(str(s) for s in sizes) + "\n")
    out.write(" ".join(repr(float(x)) for x in p.b) + "\n")

    def write_mat(matno: int, M: SymMatrix):
        for i, j, v in M.entries():
            k = int(np.searchsorted(offs, i, side="right") - 1)
            li, lj = i - int(offs[k]) + 1, j - int(offs[k]) + 1
            out.write(f"{matno} {k + 1} {li} {lj} {repr(float(v))}\n")

    write_mat(0, p.C)
    for i, Ai in enumerate(p.As):
        write_mat(i + 1, Ai)
    with open(path, "w") as fh:
        fh.write(out.getvalue())


def import_sdpa(path: str) -> ConicProblem:
    """Read SDPA sparse text into a primal-form problem (psd/nonneg blocks)."""
    with open(path) as fh:
        raw = fh.read()
    lines = []
    for ln in raw.splitlines():
        t = ln.strip()
        if not t or t.startswith("*") or t.startswith('"'):
            continue
        lines.append(t.replace(",", " ").replace("{", " ").replace("}", " ")
                     .replace("(", " ").replace(")", " "))
    if len(lines) < 4:
        raise ValueError("sdpa file is truncated")
    m = int(lines[0].split()[0])
    nblocks = int(lines[1].split()[0])
    sizes = [int(t) for t in lines[2].split()][:nblocks]
    if len(sizes) != nblocks:
        raise ValueError("sdpa block structure line is short")
    b = np.array([float(t) for t in lines[3].split()][:m])
    if b.size != m:
        raise ValueError("sdpa right-hand-side line is short")
    from .core import NONNEG, PSD
    blocks = [Block(abs(s), PSD if s > 0 else NONNEG) for s in sizes]
    offs = np.concatenate([[0], np.cumsum([abs(s) for s in sizes])])
    ent: list[list[tuple[int, int, float]]] = [[] for _ in range(m + 1)]
    for ln in lines[4:]:
        parts = ln.split()
        if len(parts) != 5:
            raise ValueError(f"bad sdpa entry line: {ln!r}")
        matno, blk, i, j, val = (int(parts[0]), int(parts[1]),
                                 int(parts[2]), int(parts[3]), float(parts[4]))
        if not 0 <= matno <= m or not 1 <= blk <= nblocks:
            raise ValueError(f"sdpa entry indices out of range: {ln!r}")
        gi = int(offs[blk - 1]) + i - 1
        gj = int(offs[blk - 1]) + j - 1
        ent[matno].append((gi, gj, val))
    n = int(offs[-1])
    C = SymMatrix.from_entries(n, ent[0])
    As = [SymMatrix.from_entries(n, ent[i + 1]) for i in range(m)]
    return ConicProblem("primal", C, As, b, blocks)


# ---------------------------------------------------------------------------
# JSON problem and solution formats
# ---------------------------------------------------------------------------


def _kind_to_json(kind: ConeKind) -> dict:
    d: dict = {"tag": kind.tag}
    if kind.k is not None:
        d["k"] = kind.k
    if kind.partition is not None:
        d["partition"] = [[i + 1 for i in blk] for blk in kind.partition]
    if kind.dual:
        d["dual"] = True
    return d


def _kind_from_json(d: dict) -> ConeKind:
    part = d.get("partition")
    if part is not None:
        part = tuple(tuple(i - 1 for i in blk) for blk in part)
    return ConeKind(d["tag"], k=d.get("k"), partition=part,
                    dual=bool(d.get("dual", False)))


def _mat_to_json(M: SymMatrix) -> list:
    return [[int(i) + 1, int(j) + 1, float(v)] for i, j, v in M.entries()]


def _mat_from_json(n: int, rows: list) -> SymMatrix:
    return SymMatrix.from_entries(n, [(i - 1, j - 1, v) for i, j, v in rows])


def export_json(p: ConicProblem, path: str) -> None:
    """Write any conic problem (either form, any cone kinds) as JSON.

    Schema: {"format": "conic-problem", "version": 1, "form", "blocks":
    [{"dim", "kind": {"tag", "k"?, "partition"? (1-based), "dual"?}}],
    "b": [...], "C": [[i, j, value] 1-based upper triangle], "As": [...]}.
    """
    doc = {
        "format": "conic-problem",
        "version": 1,
        "form": p.form,
        "blocks": [{"dim": blk.dim, "kind": _kind_to_json(blk.kind)}
                   for blk in p.blocks],
        "b": [float(x) for x in p.b],
        "C": _mat_to_json(p.C),
        "As": [_mat_to_json(A) for A in p.As],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def import_json(path: str) -> ConicProblem:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "conic-problem":
        raise ValueError("not a conic-problem JSON file")
    blocks = [Block(int(bd["dim"]), _kind_from_json(bd["kind"]))
              for bd in doc["blocks"]]
    n = sum(blk.dim for blk in blocks)
    C = _mat_from_json(n, doc["C"])
    As = [_mat_from_json(n, rows) for rows in doc["As"]]
    return ConicProblem(doc["form"], C, As, np.asarray(doc["b"], dtype=float),
                        blocks)


def solution_to_json(sol: Solution, path: Optional[str] = None) -> str:
    """Serialize a Solution (dense block values) to JSON; optionally write it."""
    def arr(a):
        return np.asarray(a, dtype=float).tolist()

    doc = {
        "format": "conic-solution",
        "version": 1,
        "status": sol.status,
        "objective": None if np.isnan(sol.objective) else float(sol.objective),
        "obj_primal": None if np.isnan(sol.obj_primal) else float(sol.obj_primal),
        "obj_dual": None if np.isnan(sol.obj_dual) else float(sol.obj_dual),
        "res_primal": None if np.isnan(sol.res_primal) else float(sol.res_primal),
        "res_dual": None if np.isnan(sol.res_dual) else float(sol.res_dual),
        "gap": None if np.isnan(sol.gap) else float(sol.gap),
        "iterations": sol.iterations,
        "solve_time": sol.solve_time,
        "y": arr(sol.y),
        "block_x": [arr(v) for v in sol.block_x],
        "block_z": [arr(v) for v in sol.block_z],
        "certificate": (None if sol.certificate is None else
                        {k: (arr(v) if isinstance(v, np.ndarray) else v)
                         for k, v in sol.certificate.items()}),
    }
    text = json.dumps(doc, indent=1) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def solution_from_json(path: str) -> Solution:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "conic-solution":
        raise ValueError("not a conic-solution JSON file")

    def val(x):
        return float("nan") if x is None else float(x)

    def blockify(items):
        out = []
        for v in items:
            a = np.asarray(v, dtype=float)
            out.append(a)
        return out

    cert = doc.get("certificate")
    if cert is not None:
        cert = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
                for k, v in cert.items()}
    return Solution(status=doc["status"], y=np.asarray(doc["y"], dtype=float),
                    block_x=blockify(doc["block_x"]),
                    block_z=blockify(doc["block_z"]),
                    obj_primal=val(doc["obj_primal"]),
                    obj_dual=val(doc["obj_dual"]),
                    res_primal=val(doc["res_primal"]),
                    res_dual=val(doc["res_dual"]),
                    gap=val(doc["gap"]), iterations=int(doc["iterations"]),
                    objective=val(doc["objective"]),
                    solve_time=float(doc["solve_time"]), certificate=cert)


def solution_to_csv(sol: Solution) -> str:
    """Long-format CSV: section,index1,index2,value rows for a solution."""
    out = io.StringIO()
    out.write("section,i,j,value\n")
    out.write(f"status,,,{sol.status}\n")
    for name in ("objective", "obj_primal", "obj_dual", "res_primal",
                 "res_dual", "gap"):
        v = getattr(sol, name)
        out.write(f"{name},,,{'' if np.isnan(v) else repr(float(v))}\n")
    out.write(f"iterations,,,{sol.iterations}\n")
    for i, v in enumerate(sol.y):
        out.write(f"y,{i + 1},,{repr(float(v))}\n")
    for k, val in enumerate(sol.block_x):
        a = np.asarray(val)
        if a.ndim == 2:
            for i in range(a.shape[0]):
                for j in range(i, a.shape[1]):
                    out.write(f"x[{k + 1}],{i + 1},{j + 1},{repr(float(a[i, j]))}\n")
        else:
            for i, v in enumerate(a):
                out.write(f"x[{k + 1}],{i + 1},,{repr(float(v))}\n")
    return out.getvalue()
