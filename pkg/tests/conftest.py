"""Shared seeded samplers for the test suite."""

import numpy as np
import pytest

from sdpbounds.core import (
    Block,
    ConicProblem,
    PSD,
    SymMatrix,
    uniform_partition,
)
from sdpbounds.sparsity import PatternGraph, chordal_extend


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_chordal_cover(rng, n, p_edge=0.3):
    """A chordal clique cover of a random pattern on n vertices."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.uniform() < p_edge]
    return chordal_extend(PatternGraph(n, edges))


def sample_dd(rng, d, scale=1.0):
    """Random diagonally dominant matrix: random off-diagonals, diagonal
    set to the absolute row sum plus a nonnegative slack."""
    M = scale * rng.normal(size=(d, d))
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, 0.0)
    slack = rng.uniform(0.0, scale, size=d)
    for i in range(d):
        M[i, i] = np.sum(np.abs(M[i])) + slack[i]
    return M


def sample_sdd(rng, d, scale=1.0):
    """Random scaled diagonally dominant matrix D M D with M dd."""
    M = sample_dd(rng, d, scale)
    D = np.diag(rng.uniform(0.2, 3.0, size=d))
    return D @ M @ D


def sample_fw(rng, d, k, scale=1.0):
    """Random factor-width-k matrix: sum of PSD terms on k-point supports."""
    M = np.zeros((d, d))
    for _ in range(2 * d):
        S = rng.choice(d, size=min(k, d), replace=False)
        G = scale * rng.normal(size=(len(S), len(S)))
        M[np.ix_(S, S)] += G @ G.T
    return M


def sample_bfw2(rng, d, blocksize, scale=1.0):
    """Random block factor-width-2 matrix over a uniform partition."""
    part = uniform_partition(d, blocksize)
    M = np.zeros((d, d))
    for a in range(len(part)):
        for b in range(a, len(part)):
            S = list(part[a]) + ([] if a == b else list(part[b]))
            G = scale * rng.normal(size=(len(S), len(S)))
            M[np.ix_(S, S)] += G @ G.T
    return M


def sample_psd(rng, d, scale=1.0, rank=None):
    G = scale * rng.normal(size=(d, rank or d))
    return G @ G.T


def trace_problem(rng, n, pattern=None):
    """min <C, X> s.t. tr X = 1 with C supported on the given pattern
    (dense if None); the psd optimum is the smallest eigenvalue of C."""
    if pattern is None:
        Cd = rng.normal(size=(n, n))
        Cd = 0.5 * (Cd + Cd.T)
    else:
        Cd = np.zeros((n, n))
        for i in range(n):
            Cd[i, i] = rng.uniform(0.5, 2.0)
        for (i, j) in pattern.edges:
            Cd[i, j] = Cd[j, i] = rng.uniform(-1.0, 1.0)
    C = SymMatrix.from_dense(Cd)
    A1 = SymMatrix.from_dense(np.eye(n))
    return ConicProblem("primal", C, [A1],
                        np.array([1.0]), [Block(n, PSD)]), Cd
