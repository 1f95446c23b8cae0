"""Assembly of the sector-bounded Lipschitz SDP constraint matrix.

The decision variable is gamma = (gamma_alpha, gamma_ell) where gamma_alpha
parameterizes a banded multiplier matrix T (diagonal entries plus pairwise
difference couplings up to bandwidth tau) and gamma_ell is the squared
Lipschitz bound candidate.  The constraint matrix is affine in gamma:

    Z(gamma) = z_aff + sum_i gamma_i * Z_i

with z_aff carrying the output-layer Gram block.  Each basis matrix Z_i is a
combination of outer products of two sparse row vectors, so the whole
parameterization is stored column-wise in sparse triplet form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .network import Network

__all__ = [
    "DimsProfile",
    "TauIndexSet",
    "GammaLayout",
    "SdpProblem",
    "build_dims",
    "tau_index_set",
    "build_T",
    "build_problem",
    "assemble_Z",
]


@dataclass(frozen=True)
class DimsProfile:
    """Index bookkeeping for the stacked pre-output state (x_1, ..., x_K).

    ``S[k]`` is the prefix sum n_1 + ... + n_k (S[0] = 0, S[K] = N) and
    N_f = N - n_1 is the total number of activation coordinates.
    """

    layer_sizes: tuple[int, ...]  # (n_1, ..., n_K, m)

    @property
    def K(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def m(self) -> int:
        return self.layer_sizes[-1]

    @cached_property
    def S(self) -> tuple[int, ...]:
        out = [0]
        for n in self.layer_sizes[:-1]:
            out.append(out[-1] + n)
        return tuple(out)

    @property
    def N(self) -> int:
        return self.S[self.K]

    @property
    def N_f(self) -> int:
        return self.N - self.layer_sizes[0]

    def block_index(self, i: int) -> int:
        """Smallest k with S(k) >= i, for 1 <= i <= N (1-based)."""
        if not 1 <= i <= self.N:
            raise ValueError(f"index {i} outside 1..{self.N}")
        return int(np.searchsorted(self.S, i, side="left"))

    @classmethod
    def from_layer_sizes(cls, layer_sizes) -> "DimsProfile":
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 3:
            raise ValueError("need at least 3 size entries (n_1, n_2, m)")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive: {sizes}")
        return cls(sizes)


def build_dims(net: Network) -> DimsProfile:
    return DimsProfile.from_layer_sizes(net.layer_sizes)


@dataclass(frozen=True)
class TauIndexSet:
    """Pairs (i, j), 1 <= i < j <= N_f, j - i <= tau, in lexicographic order."""

    n_f: int
    tau: int
    pairs: tuple[tuple[int, int], ...]


def tau_index_set(n_f: int, tau: int) -> TauIndexSet:
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if tau > n_f - 1:
        warnings.warn(
            f"tau={tau} exceeds the densest band N_f-1={n_f - 1}; clamping",
            stacklevel=2,
        )
        tau = n_f - 1
    pairs = tuple(
        (i, j)
        for i in range(1, n_f + 1)
        for j in range(i + 1, min(i + tau, n_f) + 1)
    )
    return TauIndexSet(n_f, tau, pairs)


@dataclass(frozen=True)
class GammaLayout:
    """Coordinate order of gamma: N_f diagonal multipliers, then the banded
    pair multipliers in TauIndexSet order, then gamma_ell last."""

    index_set: TauIndexSet

    @property
    def n_f(self) -> int:
        return self.index_set.n_f

    @property
    def n_alpha(self) -> int:
        return self.n_f + len(self.index_set.pairs)

    @property
    def d(self) -> int:
        return self.n_alpha + 1

    @property
    def ell_index(self) -> int:
        """0-based position of gamma_ell (always last)."""
        return self.d - 1


def build_T(layout: GammaLayout, gamma_alpha) -> sp.csr_matrix:
    """Banded multiplier T from its diagonal and pairwise coefficients.

    T = sum_i a_ii e_i e_i^T + sum_(i,j) a_ij (e_i - e_j)(e_i - e_j)^T,
    which is diagonally dominant with nonnegative diagonal, hence PSD.
    """
    gamma_alpha = np.asarray(gamma_alpha, dtype=np.float64)
    if gamma_alpha.shape != (layout.n_alpha,):
        raise ValueError(
            f"gamma_alpha has shape {gamma_alpha.shape}, expected ({layout.n_alpha},)"
        )
    if gamma_alpha.size and gamma_alpha.min() < 0:
        raise ValueError("multipliers must be nonnegative")
    n_f = layout.n_f
    diag = gamma_alpha[:n_f].copy()
    rows, cols, vals = [], [], []
    for t, (i, j) in enumerate(layout.index_set.pairs):
        g = gamma_alpha[n_f + t]
        if g == 0.0:
            continue
        diag[i - 1] += g
        diag[j - 1] += g
        rows.extend((i - 1, j - 1))
        cols.extend((j - 1, i - 1))
        vals.extend((-g, -g))
    rows.extend(range(n_f))
    cols.extend(range(n_f))
    vals.extend(diag)
    T = sp.coo_matrix((vals, (rows, cols)), shape=(n_f, n_f)).tocsr()
    T.sum_duplicates()
    return T


@dataclass
class SdpProblem:
    """Affine parameterization Z(gamma) = z_aff + sum_i gamma_i Z_i.

    The basis is stored as concatenated COO triplets with a per-entry column
    id (``basis_rows/cols/vals/col``); ``basis`` materializes the per-column
    sparse matrices on demand.  Immutable after construction.
    """

    dims: DimsProfile
    layout: GammaLayout
    tau: int
    sector: tuple[float, float]
    z_aff: sp.csr_matrix
    basis_rows: np.ndarray = field(repr=False)
    basis_cols: np.ndarray = field(repr=False)
    basis_vals: np.ndarray = field(repr=False)
    basis_col: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.dims.N

    @property
    def d(self) -> int:
        return self.layout.d

    def basis_matrix(self, i: int) -> sp.csr_matrix:
        """The i-th basis matrix Z_i as a sparse symmetric N x N matrix."""
        if not 0 <= i < self.d:
            raise IndexError(f"basis index {i} outside 0..{self.d - 1}")
        mask = self.basis_col == i
        Z = sp.coo_matrix(
            (self.basis_vals[mask], (self.basis_rows[mask], self.basis_cols[mask])),
            shape=(self.n, self.n),
        ).tocsr()
        Z.sum_duplicates()
        return Z

    @cached_property
    def basis(self) -> list[sp.csr_matrix]:
        return [self.basis_matrix(i) for i in range(self.d)]

    def structural_support(self) -> tuple[np.ndarray, np.ndarray]:
        """(rows, cols) of all entries touched by z_aff or any basis matrix."""
        za = self.z_aff.tocoo()
        rows = np.concatenate([self.basis_rows, za.row])
        cols = np.concatenate([self.basis_cols, za.col])
        flat = np.unique(rows.astype(np.int64) * self.n + cols)
        return flat // self.n, flat % self.n


def _phi_row(dims: DimsProfile, net: Network, i0: int):
    """Support of activation coordinate i0 (0-based) in the stacked state.

    Returns (a_cols, a_vals, g0): the weight-row columns/values feeding this
    coordinate, and its own global index g0.
    """
    S = dims.S
    n1 = dims.layer_sizes[0]
    g0 = n1 + i0
    blk = int(np.searchsorted(S, g0, side="right")) - 1  # 0-based x-block
    a_cols = np.arange(S[blk - 1], S[blk])
    a_vals = net.weights[blk - 1][g0 - S[blk], :]
    return a_cols, a_vals, g0


def _outer_block(alpha, beta, sector):
    """Local dense block of  c_aa*aa^T + c_ab*(ab^T + ba^T) + c_bb*bb^T."""
    lo, hi = sector
    c_aa = -2.0 * lo * hi
    c_ab = lo + hi
    c_bb = -2.0
    return (
        c_aa * np.outer(alpha, alpha)
        + c_ab * (np.outer(alpha, beta) + np.outer(beta, alpha))
        + c_bb * np.outer(beta, beta)
    )


def build_problem(net: Network, tau: int) -> SdpProblem:
    """Assemble the affine SDP data for a network at bandwidth tau.

    Basis columns are built layer-blockwise from the sparse rows of the
    pre-activation selector (weight rows) and the activation selector (unit
    vectors); the stacked selector matrices are never materialized densely.
    """
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    dims = build_dims(net)
    iset = tau_index_set(dims.N_f, tau)
    layout = GammaLayout(iset)
    sector = (net.activation.lo, net.activation.hi)
    N, n1, K = dims.N, dims.layer_sizes[0], dims.K

    rows_acc: list[np.ndarray] = []
    cols_acc: list[np.ndarray] = []
    vals_acc: list[np.ndarray] = []
    col_acc: list[np.ndarray] = []

    def push(col_id: int, sup: np.ndarray, block: np.ndarray):
        s = sup.size
        rr = np.repeat(sup, s)
        cc = np.tile(sup, s)
        vv = block.ravel()
        keep = vv != 0.0
        rows_acc.append(rr[keep])
        cols_acc.append(cc[keep])
        vals_acc.append(vv[keep])
        col_acc.append(np.full(int(keep.sum()), col_id, dtype=np.int64))

    # Diagonal multiplier columns: one activation coordinate each.
    for i0 in range(dims.N_f):
        a_cols, a_vals, g0 = _phi_row(dims, net, i0)
        sup = np.concatenate([a_cols, [g0]])  # a-block precedes g0, still sorted
        alpha = np.concatenate([a_vals, [0.0]])
        beta = np.zeros(sup.size)
        beta[-1] = 1.0
        push(i0, sup, _outer_block(alpha, beta, sector))

    # Banded pair columns: difference couplings of two coordinates.
    for t, (i, j) in enumerate(iset.pairs):
        ai_cols, ai_vals, gi = _phi_row(dims, net, i - 1)
        aj_cols, aj_vals, gj = _phi_row(dims, net, j - 1)
        sup = np.unique(np.concatenate([ai_cols, aj_cols, [gi, gj]]))
        alpha = np.zeros(sup.size)
        alpha[np.searchsorted(sup, ai_cols)] += ai_vals
        alpha[np.searchsorted(sup, aj_cols)] -= aj_vals
        beta = np.zeros(sup.size)
        beta[np.searchsorted(sup, gi)] += 1.0
        beta[np.searchsorted(sup, gj)] -= 1.0
        push(dims.N_f + t, sup, _outer_block(alpha, beta, sector))

    # gamma_ell column: -I on the input block diagonal.
    ell = layout.ell_index
    idx = np.arange(n1)
    rows_acc.append(idx)
    cols_acc.append(idx)
    vals_acc.append(np.full(n1, -1.0))
    col_acc.append(np.full(n1, ell, dtype=np.int64))

    # Constant part: output-layer Gram block.
    WK = net.weights[K - 1]
    gram = WK.T @ WK
    off = dims.S[K - 1]
    gi, gj = np.nonzero(gram)
    z_aff = sp.coo_matrix(
        (gram[gi, gj], (gi + off, gj + off)), shape=(N, N)
    ).tocsr()

    return SdpProblem(
        dims=dims,
        layout=layout,
        tau=iset.tau,
        sector=sector,
        z_aff=z_aff,
        basis_rows=np.concatenate(rows_acc).astype(np.int64),
        basis_cols=np.concatenate(cols_acc).astype(np.int64),
        basis_vals=np.concatenate(vals_acc),
        basis_col=np.concatenate(col_acc),
    )


def assemble_Z(problem: SdpProblem, gamma) -> sp.csr_matrix:
    """Z(gamma) = z_aff + sum_i gamma_i Z_i as a sparse symmetric matrix."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (problem.d,):
        raise ValueError(f"gamma has shape {gamma.shape}, expected ({problem.d},)")
    vals = problem.basis_vals * gamma[problem.basis_col]
    Z = sp.coo_matrix(
        (vals, (problem.basis_rows, problem.basis_cols)),
        shape=(problem.n, problem.n),
    ).tocsr()
    Z.sum_duplicates()
    Z = Z + problem.z_aff
    Z.eliminate_zeros()
    return Z
