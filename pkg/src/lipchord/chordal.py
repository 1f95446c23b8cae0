"""Closed-form sparsity pattern and maximal cliques of the constraint matrix.

The constraint matrix of the banded formulation is supported on a union of
overlapping diagonal boxes, one per consecutive layer pair, each extended by
the bandwidth tau.  Such overlapping-block patterns are chordal and their
maximal cliques are contiguous index intervals, which keeps every clique
operation a plain slice.  Graph-theoretic oracles (Bron-Kerbosch enumeration,
maximum-cardinality-search chordality test) validate the closed forms at desk
scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .sdp import DimsProfile, SdpProblem

__all__ = [
    "EdgeSet",
    "CliqueSet",
    "predicted_edge_set",
    "oracle_edge_set",
    "maximal_cliques",
    "dense_clique",
    "bron_kerbosch",
    "check_chordal",
    "clique_scatter",
    "clique_gather",
    "pattern_mask",
    "write_pbm",
    "write_edge_csv",
]

BRON_KERBOSCH_VERTEX_GUARD = 256


@dataclass(frozen=True)
class EdgeSet:
    """Symmetric sparsity pattern on vertices 1..n.

    Stored as the upper triangle (i < j); diagonal membership is implicit
    (every diagonal entry of a pattern matrix is allowed).
    """

    n: int
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self):
        for i, j in self.pairs:
            if not (1 <= i < j <= self.n):
                raise ValueError(f"edge ({i}, {j}) outside upper triangle of 1..{self.n}")

    @staticmethod
    def from_pairs(n: int, pairs) -> "EdgeSet":
        canon = frozenset(
            (min(i, j), max(i, j)) for i, j in pairs if i != j
        )
        return EdgeSet(n, canon)

    @cached_property
    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {v: set() for v in range(1, self.n + 1)}
        for i, j in self.pairs:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def to_mask(self, include_diagonal: bool = True) -> np.ndarray:
        """Dense boolean n x n pattern (True = dense entry)."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        if self.pairs:
            ij = np.array(sorted(self.pairs)) - 1
            mask[ij[:, 0], ij[:, 1]] = True
            mask[ij[:, 1], ij[:, 0]] = True
        if include_diagonal:
            np.fill_diagonal(mask, True)
        return mask


@dataclass(frozen=True)
class CliqueSet:
    """Ordered maximal cliques, each a contiguous 1-based interval [start, end]."""

    n: int
    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for lo, hi in self.intervals:
            if not (1 <= lo <= hi <= self.n):
                raise ValueError(f"interval [{lo}, {hi}] outside 1..{self.n}")

    @property
    def p(self) -> int:
        return len(self.intervals)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(hi - lo + 1 for lo, hi in self.intervals)

    def vertex_sets(self) -> list[frozenset[int]]:
        return [frozenset(range(lo, hi + 1)) for lo, hi in self.intervals]


def _boxes(dims: DimsProfile, tau: int) -> list[tuple[int, int]]:
    """Per-layer-pair index boxes [S(k-1)+1, min(S(k+1)+tau, N)], k=1..K-1."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    S, N = dims.S, dims.N
    return [
        (S[k - 1] + 1, min(S[k + 1] + tau, N))
        for k in range(1, dims.K)
    ]


def predicted_edge_set(dims: DimsProfile, tau: int) -> EdgeSet:
    """Closed-form sparsity pattern: union of overlapping diagonal boxes."""
    pairs = set()
    for lo, hi in _boxes(dims, tau):
        for i in range(lo, hi + 1):
            for j in range(i + 1, hi + 1):
                pairs.add((i, j))
    return EdgeSet(dims.N, frozenset(pairs))


def pattern_mask(dims: DimsProfile, tau: int) -> np.ndarray:
    """Dense boolean pattern of the predicted edge set (diagonal included)."""
    mask = np.zeros((dims.N, dims.N), dtype=bool)
    for lo, hi in _boxes(dims, tau):
        mask[lo - 1 : hi, lo - 1 : hi] = True
    return mask


def oracle_edge_set(problem: SdpProblem) -> EdgeSet:
    """Numeric sparsity oracle: union of the structural supports of z_aff and
    every basis matrix.  Exactly the entries of Z(gamma) that can be nonzero
    for some gamma."""
    rows, cols = problem.structural_support()
    off = rows < cols
    pairs = frozenset(zip((rows[off] + 1).tolist(), (cols[off] + 1).tolist()))
    return EdgeSet(problem.n, pairs)


def maximal_cliques(dims: DimsProfile, tau: int) -> CliqueSet:
    """Closed-form maximal cliques of the predicted pattern.

    p = min{k : S(k+1) + tau >= N}; clique k < p is the interval
    [S(k-1)+1, S(k+1)+tau] and clique p is [S(p-1)+1, N].  Intervals
    contained in another (possible only for degenerate width profiles) are
    dropped.
    """
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    S, N = dims.S, dims.N
    p = next(k for k in range(1, dims.K) if S[k + 1] + tau >= N)
    intervals = [(S[k - 1] + 1, S[k + 1] + tau) for k in range(1, p)]
    intervals.append((S[p - 1] + 1, N))
    # Deduplicate dominated intervals (contained in a neighbor).
    kept: list[tuple[int, int]] = []
    for lo, hi in intervals:
        if any(lo >= lo2 and hi <= hi2 for lo2, hi2 in intervals if (lo2, hi2) != (lo, hi)):
            continue
        kept.append((lo, hi))
    return CliqueSet(N, tuple(kept))


def dense_clique(n: int) -> CliqueSet:
    """Single clique covering 1..n (the undecomposed problem)."""
    return CliqueSet(n, ((1, n),))


def bron_kerbosch(edges: EdgeSet, max_vertices: int = BRON_KERBOSCH_VERTEX_GUARD):
    """All maximal cliques of the graph, each sorted, lexicographically ordered.

    Pivoting variant; exponential worst case, guarded by a vertex cap since
    this exists only to validate the closed forms at desk scale.
    """
    if edges.n > max_vertices:
        raise ValueError(
            f"graph has {edges.n} vertices, exceeding the oracle guard "
            f"{max_vertices}"
        )
    adj = edges.adjacency
    out: list[tuple[int, ...]] = []

    def expand(R: set[int], P: set[int], X: set[int]):
        if not P and not X:
            out.append(tuple(sorted(R)))
            return
        pivot = max(P | X, key=lambda u: len(P & adj[u]))
        for v in list(P - adj[pivot]):
            expand(R | {v}, P & adj[v], X & adj[v])
            P.remove(v)
            X.add(v)

    expand(set(), set(range(1, edges.n + 1)), set())
    return sorted(out)


def check_chordal(edges: EdgeSet) -> tuple[bool, tuple[int, ...]]:
    """Maximum-cardinality-search chordality test.

    Returns (is_chordal, ordering) where the ordering is the MCS visit order
    reversed; the graph is chordal iff that ordering is a perfect elimination
    ordering.
    """
    adj = edges.adjacency
    n = edges.n
    weight = {v: 0 for v in range(1, n + 1)}
    visited: set[int] = set()
    mcs: list[int] = []
    for _ in range(n):
        v = max(
            (u for u in range(1, n + 1) if u not in visited),
            key=lambda u: (weight[u], -u),
        )
        visited.add(v)
        mcs.append(v)
        for u in adj[v]:
            if u not in visited:
                weight[u] += 1
    order = tuple(reversed(mcs))  # candidate perfect elimination ordering
    pos = {v: t for t, v in enumerate(order)}
    for v in order:
        later = [u for u in adj[v] if pos[u] > pos[v]]
        if not later:
            continue
        w = min(later, key=pos.get)
        if any(u != w and u not in adj[w] for u in later):
            return False, order
    return True, order


def clique_scatter(interval: tuple[int, int], Xk, n: int) -> sp.csr_matrix:
    """Embed a |C| x |C| block at rows/columns [start, end] of an n x n matrix."""
    lo, hi = interval
    if not (1 <= lo <= hi <= n):
        raise ValueError(f"interval [{lo}, {hi}] outside 1..{n}")
    Xk = np.asarray(Xk, dtype=np.float64)
    c = hi - lo + 1
    if Xk.shape != (c, c):
        raise ValueError(f"block has shape {Xk.shape}, expected ({c}, {c})")
    X = sp.lil_matrix((n, n))
    X[lo - 1 : hi, lo - 1 : hi] = Xk
    return X.tocsr()


def clique_gather(interval: tuple[int, int], X) -> np.ndarray:
    """Extract the principal submatrix at the clique interval."""
    lo, hi = interval
    if sp.issparse(X):
        return np.asarray(X[lo - 1 : hi, lo - 1 : hi].todense())
    return np.asarray(X)[lo - 1 : hi, lo - 1 : hi].copy()


def write_pbm(mask: np.ndarray, path) -> None:
    """Plain-text PBM (P1): one pixel per matrix entry, 1 = dense."""
    n_rows, n_cols = mask.shape
    with open(path, "w") as fh:
        fh.write("P1\n")
        fh.write(f"{n_cols} {n_rows}\n")
        for row in mask:
            fh.write(" ".join("1" if x else "0" for x in row))
            fh.write("\n")


def read_pbm(path) -> np.ndarray:
    """Parse a plain-text PBM back into a boolean mask."""
    with open(path) as fh:
        tokens: list[str] = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ValueError("not a plain PBM (P1) file")
    w, h = int(tokens[1]), int(tokens[2])
    bits = np.array([int(t) for t in tokens[3 : 3 + w * h]], dtype=bool)
    if bits.size != w * h:
        raise ValueError("truncated PBM data")
    return bits.reshape(h, w)


def write_edge_csv(mask: np.ndarray, path) -> None:
    """CSV of dense (i, j) pairs, 1-based upper triangle including diagonal."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j"])
        rr, cc = np.nonzero(np.triu(mask))
        for i, j in zip(rr + 1, cc + 1):
            writer.writerow([int(i), int(j)])
