"""Polynomial optimization by sum-of-squares programming.

A lower bound on min f(x) comes from the largest gamma with f - gamma a sum
of squares, a condition expressed through a positive semidefinite Gram
matrix on a monomial basis.  Constrained problems over a semialgebraic set
{g_i >= 0, h_j = 0} use weighted certificates f - gamma = sigma_0 +
sum_i sigma_i g_i + sum_j phi_j h_j with sigma SOS and phi free.

Variable co-occurrence sparsity splits the certificate: each clique of the
(chordally extended) co-occurrence graph carries its own Gram block over
monomials in that clique's variables, shrinking block sizes at the price of
a possibly weaker bound at fixed degree.  Replacing Gram PSD cones by
structured subsets (diagonally dominant and friends) weakens the bound
further but keeps it valid, since any Gram certificate in a subset of the
PSD cone is still a Gram certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    FREE,
    PSD,
    Block,
    ConeKind,
    ConicProblem,
    Solution,
    SymMatrix,
)
from .decomp import ConeAssignment, _resolve_kind
from .sparsity import CliqueCover, PatternGraph, chordal_extend

__all__ = [
    "Polynomial",
    "csp_graph",
    "SOSProgram",
    "build_sos",
    "build_putinar",
    "build_sparse_putinar",
    "restrict_gram",
    "solve_sos",
    "certificate_residual",
    "gen_lehmer_rosenbrock",
]


# ---------------------------------------------------------------------------
# polynomials as exponent-tuple maps
# ---------------------------------------------------------------------------


class Polynomial:
    """Real polynomial stored as {exponent tuple: coefficient}.

    Exponent tuples have one nonnegative integer per variable; zero
    coefficients are never stored.  Instances are treated as immutable;
    arithmetic returns new objects.
    """

    __slots__ = ("nvars", "coeffs")

    def __init__(self, nvars: int, coeffs: Optional[dict] = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        self.nvars = int(nvars)
        clean: dict[tuple[int, ...], float] = {}
        for expo, c in (coeffs or {}).items():
            expo = tuple(int(e) for e in expo)
            if len(expo) != nvars or any(e < 0 for e in expo):
                raise ValueError(f"bad exponent tuple {expo} for {nvars} variables")
            c = float(c)
            if c != 0.0:
                clean[expo] = clean.get(expo, 0.0) + c
                if clean[expo] == 0.0:
                    del clean[expo]
        self.coeffs = clean

    # constructors
    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Polynomial":
        if not 0 <= i < nvars:
            raise ValueError("variable index out of range")
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    # basic queries
    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    def support(self) -> tuple[int, ...]:
        """Variables appearing with positive exponent anywhere."""
        used = set()
        for e in self.coeffs:
            used.update(i for i, p in enumerate(e) if p > 0)
        return tuple(sorted(used))

    def coefficient(self, expo) -> float:
        return self.coeffs.get(tuple(expo), 0.0)

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("variable counts differ")
            return other
        return Polynomial.constant(self.nvars, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = float(other)
            return Polynomial(self.nvars,
                              {e: c * v for e, v in self.coeffs.items()})
        if other.nvars != self.nvars:
            raise ValueError("variable counts differ")
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = Polynomial.constant(self.nvars, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        return (isinstance(other, Polynomial) and self.nvars == other.nvars
                and self.coeffs == other.coeffs)

    def __hash__(self):
        return hash((self.nvars, tuple(sorted(self.coeffs.items()))))

    def evaluate(self, x) -> np.ndarray | float:
        """Evaluate at a point (length nvars) or batch (npoints x nvars)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        if pts.shape[1] != self.nvars:
            raise ValueError("point dimension mismatch")
        total = np.zeros(pts.shape[0])
        for e, c in self.coeffs.items():
            term = np.full(pts.shape[0], c)
            for i, p in enumerate(e):
                if p:
                    term = term * pts[:, i] ** p
            total += term
        return float(total[0]) if single else total

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for e in sorted(self.coeffs, key=lambda t: (sum(t), t)):
            c = self.coeffs[e]
            mono = "*".join(f"x{i + 1}" + (f"^{p}" if p > 1 else "")
                            for i, p in enumerate(e) if p)
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    __repr__ = __str__

    # text format: one monomial per line, "coeff e1 e2 ... eN"
    def to_text(self) -> str:
        lines = [f"# polynomial in {self.nvars} variables, "
                 "one monomial per line: coeff exponents..."]
        for e in sorted(self.coeffs, key=lambda t: (sum(t), t)):
            lines.append(" ".join([repr(self.coeffs[e])] + [str(p) for p in e]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, nvars: Optional[int] = None) -> "Polynomial":
        coeffs: dict[tuple[int, ...], float] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            expo = tuple(int(t) for t in toks[1:])
            if nvars is None:
                nvars = len(expo)
            elif len(expo) != nvars:
                raise ValueError("inconsistent exponent length in polynomial text")
            coeffs[expo] = coeffs.get(expo, 0.0) + float(toks[0])
        if nvars is None:
            raise ValueError("empty polynomial text and no variable count given")
        return cls(nvars, coeffs)


# ---------------------------------------------------------------------------
# correlative sparsity
# ---------------------------------------------------------------------------


def csp_graph(p: Polynomial, gs: Sequence[Polynomial] = (),
              hs: Sequence[Polynomial] = ()) -> PatternGraph:
    """Variable co-occurrence graph.

    Objective monomials connect the variables they multiply together; each
    constraint connects all variables appearing anywhere in it (the whole
    constraint couples its variables through the shared multiplier).
    """
    n = p.nvars
    edges = set()
    for e in p.coeffs:
        used = [i for i, q in enumerate(e) if q > 0]
        for a in range(len(used)):
            for b in range(a + 1, len(used)):
                edges.add((used[a], used[b]))
    for g in list(gs) + list(hs):
        if g.nvars != n:
            raise ValueError("constraint variable count differs from objective")
        used = g.support()
        for a in range(len(used)):
            for b in range(a + 1, len(used)):
                edges.add((used[a], used[b]))
    return PatternGraph(n, sorted(edges))


def _monomials(nvars: int, variables: Sequence[int], maxdeg: int):
    """Exponent tuples over a variable subset up to a total degree, graded."""
    out = []
    for t in range(maxdeg + 1):
        for combo in combinations_with_replacement(sorted(variables), t):
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    return out


# ---------------------------------------------------------------------------
# program construction
# ---------------------------------------------------------------------------


@dataclass
class SOSProgram:
    """A coefficient-matching conic program for a weighted SOS certificate.

    problem is in primal form (min -gamma); gram_bases[k] lists the monomial
    basis of Gram block k, whose label in gram_labels names its role
    ("sigma@<clique>" or "g<i>@<clique>").  free_bases holds the monomial
    bases of the free equality multipliers.  cliques are the variable
    groups used; cover is the clique cover behind them, when one was used.
    """

    problem: ConicProblem
    nvars: int
    objective: Polynomial
    ineqs: tuple[Polynomial, ...]
    eqs: tuple[Polynomial, ...]
    degree: int
    cliques: tuple[tuple[int, ...], ...]
    gram_bases: tuple[tuple[tuple[int, ...], ...], ...]
    gram_labels: tuple[str, ...]
    gram_blocks: tuple[int, ...]
    free_bases: tuple[tuple[tuple[int, ...], ...], ...]
    free_blocks: tuple[int, ...]
    gamma_block: int
    cover: Optional[CliqueCover] = None

    def gamma_value(self, sol: Solution) -> float:
        """Bound extracted from a solved (possibly restricted) program."""
        if sol.status == "infeasible":
            return float("-inf")
        if sol.status == "unbounded":
            return float("inf")
        if sol.status != "optimal":
            return float("nan")
        return -float(sol.objective)

    def gram(self, sol: Solution, k: int) -> np.ndarray:
        return np.asarray(sol.block_x[self.gram_blocks[k]], dtype=float)

    def multiplier(self, sol: Solution, j: int) -> Polynomial:
        vals = np.asarray(sol.block_x[self.free_blocks[j]], dtype=float)
        return Polynomial(self.nvars,
                          {e: v for e, v in zip(self.free_bases[j], vals)})


def _first_clique(cliques, supp) -> int:
    for k, clq in enumerate(cliques):
        if set(supp) <= set(clq):
            return k
    raise ValueError(f"constraint support {tuple(supp)} straddles the cliques")


def _build(p: Polynomial, gs: Sequence[Polynomial], hs: Sequence[Polynomial],
           d: int, cliques: Sequence[tuple[int, ...]],
           cover: Optional[CliqueCover]) -> SOSProgram:
    n = p.nvars
    if d % 2 != 0:
        raise ValueError("relaxation degree must be even")
    if d < p.degree:
        raise ValueError("relaxation degree is below the polynomial degree")
    for g in gs:
        if g.degree > d:
            raise ValueError("inequality constraint degree exceeds the relaxation")
    for h in hs:
        if h.degree > d:
            raise ValueError("equality constraint degree exceeds the relaxation")

    gram_bases: list = []
    gram_labels: list = []
    gram_payload: list = []   # (basis, weight polynomial)
    for k, clq in enumerate(cliques):
        gram_bases.append(tuple(_monomials(n, clq, d // 2)))
        gram_labels.append(f"sigma@{k}")
        gram_payload.append((gram_bases[-1], Polynomial.constant(n, 1.0)))
    for i, g in enumerate(gs):
        k = _first_clique(cliques, g.support())
        half = (d - g.degree) // 2
        basis = tuple(_monomials(n, cliques[k], half))
        gram_bases.append(basis)
        gram_labels.append(f"g{i}@{k}")
        gram_payload.append((basis, g))
    free_bases: list = []
    free_payload: list = []
    for j, h in enumerate(hs):
        k = _first_clique(cliques, h.support())
        basis = tuple(_monomials(n, cliques[k], d - h.degree))
        free_bases.append(basis)
        free_payload.append((basis, h))

    # variable layout
    blocks: list[Block] = []
    gram_blocks: list[int] = []
    offsets: list[int] = []
    pos = 0
    for basis in gram_bases:
        blocks.append(Block(len(basis), PSD))
        gram_blocks.append(len(blocks) - 1)
        offsets.append(pos)
        pos += len(basis)
    free_blocks: list[int] = []
    free_offsets: list[int] = []
    for basis in free_bases:
        blocks.append(Block(len(basis), FREE))
        free_blocks.append(len(blocks) - 1)
        free_offsets.append(pos)
        pos += len(basis)
    blocks.append(Block(1, FREE))
    gamma_block = len(blocks) - 1
    gamma_off = pos
    total = pos + 1

    # coefficient matching: rows[alpha][(i, j)] accumulates data entries
    rows: dict[tuple[int, ...], dict[tuple[int, int], float]] = {}

    def bump(alpha, i, j, v):
        ent = rows.setdefault(alpha, {})
        key = (i, j) if i <= j else (j, i)
        ent[key] = ent.get(key, 0.0) + v

    for off, (basis, weight) in zip(offsets, gram_payload):
        for s in range(len(basis)):
            for t in range(s, len(basis)):
                pair = tuple(a + b for a, b in zip(basis[s], basis[t]))
                for delta, gc in weight.coeffs.items():
                    alpha = tuple(a + b for a, b in zip(pair, delta))
                    bump(alpha, off + s, off + t, gc)
    for off, (basis, h) in zip(free_offsets, free_payload):
        for q, eta in enumerate(basis):
            for delta, hc in h.coeffs.items():
                alpha = tuple(a + b for a, b in zip(eta, delta))
                bump(alpha, off + q, off + q, hc)
    bump((0,) * n, gamma_off, gamma_off, 1.0)
    for alpha in p.coeffs:
        rows.setdefault(alpha, {})

    order = sorted(rows, key=lambda t: (sum(t), t))
    As = []
    b = np.zeros(len(order))
    for r, alpha in enumerate(order):
        ent = [(i, j, v) for (i, j), v in sorted(rows[alpha].items())
               if v != 0.0]
        As.append(SymMatrix.from_entries(total, ent))
        b[r] = p.coeffs.get(alpha, 0.0)
    C = SymMatrix.from_entries(total, [(gamma_off, gamma_off, -1.0)])
    prob = ConicProblem("primal", C, As, b, blocks)
    return SOSProgram(
        problem=prob, nvars=n, objective=p, ineqs=tuple(gs), eqs=tuple(hs),
        degree=d, cliques=tuple(tuple(c) for c in cliques),
        gram_bases=tuple(gram_bases), gram_labels=tuple(gram_labels),
        gram_blocks=tuple(gram_blocks), free_bases=tuple(free_bases),
        free_blocks=tuple(free_blocks), gamma_block=gamma_block, cover=cover)


def build_sos(p: Polynomial, d: int) -> SOSProgram:
    """Dense SOS lower bound program: max gamma with f - gamma SOS at
    degree d (one Gram block over all monomials up to d/2)."""
    return _build(p, (), (), d, [tuple(range(p.nvars))], None)


def build_putinar(p: Polynomial, gs: Sequence[Polynomial],
                  hs: Sequence[Polynomial], d: int) -> SOSProgram:
    """Dense weighted certificate over {g_i >= 0, h_j = 0} at degree d."""
    return _build(p, tuple(gs), tuple(hs), d, [tuple(range(p.nvars))], None)


def build_sparse_putinar(p: Polynomial, gs: Sequence[Polynomial] = (),
                         hs: Sequence[Polynomial] = (), d: int = 2,
                         cover: Optional[CliqueCover] = None) -> SOSProgram:
    """Clique-split certificate: one SOS block per clique of the variable
    co-occurrence graph, each constraint multiplier assigned to a clique
    containing its support (error if none does).  A cover may be supplied;
    otherwise the chordally extended co-occurrence graph provides one.
    """
    if cover is None:
        cover = chordal_extend(csp_graph(p, gs, hs))
    return _build(p, tuple(gs), tuple(hs), d,
                  [tuple(c) for c in cover.cliques], cover)


def restrict_gram(prog: SOSProgram, kinds) -> ConicProblem:
    """The program with Gram PSD cones replaced by structured kinds.

    kinds may be a single ConeKind (applied to every Gram block), a
    sequence with one kind per Gram block, or a ConeAssignment whose kinds
    align with the Gram blocks.  Subset kinds keep the bound a valid lower
    bound on the polynomial minimum; psd leaves the program unchanged.
    """
    if isinstance(kinds, ConeAssignment):
        kinds = kinds.kinds
    if isinstance(kinds, ConeKind):
        kinds = [kinds] * len(prog.gram_blocks)
    kinds = list(kinds)
    if len(kinds) != len(prog.gram_blocks):
        raise ValueError("need one kind per Gram block")
    blocks = list(prog.problem.blocks)
    for bi, kind in zip(prog.gram_blocks, kinds):
        if not kind.is_matrix:
            raise ValueError(f"kind {kind} cannot hold a Gram matrix")
        kind = _resolve_kind(kind, blocks[bi].dim)
        blocks[bi] = Block(blocks[bi].dim, kind)
    return prog.problem.with_blocks(blocks)


def solve_sos(prog: SOSProgram, kinds=None, settings=None):
    """Solve the program, optionally under restricted Gram cones.

    Returns (gamma, mapped solution); gamma is -inf on infeasibility (no
    certificate of that strength exists) and +inf on unboundedness.
    """
    from .decomp import lower_problem
    from .solver import solve as solve_primitive
    q = restrict_gram(prog, kinds) if kinds is not None else prog.problem
    low = lower_problem(q)
    sol_low = solve_primitive(low.problem, settings)
    sol = low.map_solution(sol_low)
    return prog.gamma_value(sol), sol


def certificate_residual(prog: SOSProgram, sol: Solution) -> float:
    """Largest coefficient mismatch of the reconstructed certificate.

    Rebuilds gamma + sum_k v_k' Q_k v_k (weighted by the g_i) plus the
    equality terms from the solved blocks and compares it to the objective
    polynomial coefficient by coefficient.
    """
    n = prog.nvars
    total: dict[tuple[int, ...], float] = {}
    gamma = -float(sol.objective)
    total[(0,) * n] = gamma
    labels = prog.gram_labels
    for k, (basis, bi) in enumerate(zip(prog.gram_bases, prog.gram_blocks)):
        Q = np.asarray(sol.block_x[bi], dtype=float)
        label = labels[k]
        weight = Polynomial.constant(n, 1.0)
        if label.startswith("g"):
            gi = int(label[1:label.index("@")])
            weight = prog.ineqs[gi]
        for s in range(len(basis)):
            for t in range(len(basis)):
                if Q[s, t] == 0.0:
                    continue
                pair = tuple(a + b for a, b in zip(basis[s], basis[t]))
                for delta, gc in weight.coeffs.items():
                    alpha = tuple(a + b for a, b in zip(pair, delta))
                    total[alpha] = total.get(alpha, 0.0) + Q[s, t] * gc
    for j, (basis, bi) in enumerate(zip(prog.free_bases, prog.free_blocks)):
        vals = np.asarray(sol.block_x[bi], dtype=float)
        for q, eta in enumerate(basis):
            for delta, hc in prog.eqs[j].coeffs.items():
                alpha = tuple(a + b for a, b in zip(eta, delta))
                total[alpha] = total.get(alpha, 0.0) + vals[q] * hc
    worst = 0.0
    for alpha in set(total) | set(prog.objective.coeffs):
        diff = abs(total.get(alpha, 0.0) - prog.objective.coeffs.get(alpha, 0.0))
        worst = max(worst, diff)
    return worst


# ---------------------------------------------------------------------------
# benchmark generator
# ---------------------------------------------------------------------------


def gen_lehmer_rosenbrock(N: int) -> Polynomial:
    """Chained quartic with a dense quadratic head.

    f = f_Q + f_R, where f_R sums 10*(x_{i+2} + 2 x_{i+1} - x_i^2)^2 +
    (1 - x_i - x_{i+3})^2 over the chain and f_Q = x_{1:N/6}' L x_{1:N/6}
    with the Lehmer matrix L_ij = min(i/j, j/i).  The head couples the
    first N/6 variables densely, so the co-occurrence graph has one large
    clique next to many small chain cliques.
    """
    if N < 6 or N % 6 != 0:
        raise ValueError("variable count must be a positive multiple of 6")
    x = [Polynomial.variable(N, i) for i in range(N)]
    f = Polynomial.zero(N)
    for i in range(N - 3):
        quart = x[i + 2] + 2.0 * x[i + 1] - x[i] * x[i]
        f = f + 10.0 * (quart * quart)
        lin = 1.0 - x[i] - x[i + 3]
        f = f + lin * lin
    h = N // 6
    for i in range(h):
        for j in range(h):
            lij = min((i + 1) / (j + 1), (j + 1) / (i + 1))
            f = f + lij * (x[i] * x[j])
    return f
