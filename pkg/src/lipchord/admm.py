"""ADMM solver for the clique-decomposed Lipschitz SDP.

The decomposed program is

    minimize    gamma_ell
    subject to  Z(gamma) = sum_k scatter_k(mat(z_k)),   gamma >= 0,
                mat(z_k) negative semidefinite for every clique k,

where Z(gamma) = z_aff + J gamma in vectorized form.  The undecomposed
program is the single-clique special case, so both run through identical
code.  Splitting introduces copies (omega, v_k) of (gamma, z_k); each
iteration solves the coupled equality-constrained quadratic subproblem in
(omega, v) exactly, projects gamma onto the nonnegative orthant and each
z_k onto the NSD cone, then takes a dual ascent step.

Only the entries covered by some clique box participate: outside the clique
union both z_aff and every column of J vanish identically (asserted when the
workspace is built), so those constraint rows are 0 = 0 and are dropped.
The (omega, v) subproblem reduces, by eliminating its KKT system, to one
linear solve with the covered-entry matrix J J^T + D (D = diagonal overlap
counts), handled via the Woodbury identity: a single Cholesky factorization
of the small d x d matrix I + J^T D^{-1} J is reused across all iterations
and penalty values.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .backend import get_backend
from .chordal import CliqueSet
from .sdp import SdpProblem, assemble_Z

__all__ = [
    "vec",
    "mat",
    "project_nsd",
    "ProjectionError",
    "SolveOptions",
    "BoundReport",
    "SolutionCheck",
    "VecSpace",
    "AdmmWorkspace",
    "AdmmState",
    "admm_step",
    "solve",
    "verify_solution",
    "decompose_nsd",
]

# Residual balancing (re-checked every RHO_CHECK_EVERY iterations).
RHO_CHECK_EVERY = 50
RHO_BALANCE_RATIO = 10.0
RHO_FACTOR = 2.0
RHO_MIN, RHO_MAX = 1e-10, 1e10

VERIFY_RECON_TOL = 1e-6
VERIFY_EIG_TOL = 1e-6
VERIFY_GAMMA_FLOOR = -1e-12


def _norm2(x: np.ndarray) -> float:
    return math.sqrt(float(x @ x))


def vec(M) -> np.ndarray:
    """Column-stacking of a square matrix."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M.ravel(order="F")


def mat(v) -> np.ndarray:
    """Inverse of ``vec``: reshape a length-s^2 vector into an s x s matrix."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    s = math.isqrt(v.size)
    if s * s != v.size:
        raise ValueError(f"length {v.size} is not a perfect square")
    return v.reshape(s, s, order="F")


class ProjectionError(RuntimeError):
    """Eigendecomposition failed during an NSD projection."""


def project_nsd(v) -> np.ndarray:
    """Euclidean projection of a vectorized symmetric matrix onto the NSD cone.

    The matrix is symmetrized first; eigenvalues above zero are clamped.
    """
    M = mat(v)
    M = 0.5 * (M + M.T)
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise ProjectionError(
            f"eigendecomposition failed: {exc} "
            f"(size {M.shape[0]}, max |entry| {np.abs(M).max():.3e}, "
            f"finite: {np.all(np.isfinite(M))})"
        ) from exc
    w = np.minimum(w, 0.0)
    return vec((V * w) @ V.T)


@dataclass
class SolveOptions:
    """Solver controls.  Tolerances follow a standard absolute + relative
    split; ``nsd_tol`` is the eigenvalue slack allowed on projected blocks."""

    rho0: float = 10.0
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    max_iters: int = 200_000
    adapt_rho: bool = True
    nsd_tol: float = 1e-9
    time_budget_s: float | None = None
    debug_checks: bool = False

    def __post_init__(self):
        if self.rho0 <= 0 or self.eps_abs <= 0 or self.eps_rel <= 0 or self.nsd_tol <= 0:
            raise ValueError("rho0 and all tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class BoundReport:
    """Result of one bound computation (JSON-stable field set)."""

    method: str
    tau: int
    gamma_ell: float
    lipschitz_bound: float
    certified: bool
    iters: int
    converged: bool
    primal_residual: float
    dual_residual: float
    wall_time_s: float

    def as_dict(self) -> dict:
        return asdict(self)


class VecSpace:
    """Covered-entry bookkeeping for a clique set over an N x N matrix.

    ``covered`` lists the column-major vectorized indices inside the union of
    clique boxes; ``D`` counts how many cliques cover each such entry; ``idx``
    maps every flat per-clique block entry to its covered position.
    """

    def __init__(self, n: int, cliques: CliqueSet):
        if cliques.n != n:
            raise ValueError(f"clique set is over 1..{cliques.n}, expected 1..{n}")
        self.n = n
        self.cliques = cliques
        self.sizes = np.array(cliques.sizes, dtype=np.int64)
        self.ptr = np.zeros(cliques.p + 1, dtype=np.int64)
        np.cumsum(self.sizes**2, out=self.ptr[1:])
        self.total = int(self.ptr[-1])

        mask = np.zeros((n, n), dtype=bool)
        for lo, hi in cliques.intervals:
            mask[lo - 1 : hi, lo - 1 : hi] = True
        flat_mask = mask.ravel(order="F")
        self.covered = np.flatnonzero(flat_mask).astype(np.int64)
        self.n_cov = self.covered.size
        pos = np.full(n * n, -1, dtype=np.int64)
        pos[self.covered] = np.arange(self.n_cov)
        self._pos = pos

        idx_parts = []
        counts = np.zeros(self.n_cov, dtype=np.int64)
        for (lo, hi), s in zip(cliques.intervals, self.sizes):
            lo0 = lo - 1
            aa = np.repeat(np.arange(s), s)  # local row, flat order t = a*s + b
            bb = np.tile(np.arange(s), s)  # local column
            vec_idx = (lo0 + bb) * n + (lo0 + aa)
            part = pos[vec_idx]
            idx_parts.append(part)
            counts[part] += 1
        self.idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.int64)
        self.D = counts.astype(np.float64)
        if self.n_cov and self.D.min() < 1:
            raise AssertionError("covered entry with zero clique coverage")

    def position(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Covered positions of (row, col) entries; -1 where uncovered."""
        return self._pos[cols.astype(np.int64) * self.n + rows.astype(np.int64)]

    def scatter(self, blocks_flat: np.ndarray) -> np.ndarray:
        return get_backend().scatter_add(blocks_flat, self.idx, self.ptr, self.n_cov)

    def gather(self, y: np.ndarray) -> np.ndarray:
        return get_backend().gather(y, self.idx)

    def project_blocks(self, blocks_flat: np.ndarray) -> np.ndarray:
        return get_backend().project_nsd_blocks(blocks_flat, self.ptr, self.sizes)

    def block(self, flat: np.ndarray, k: int) -> np.ndarray:
        s = int(self.sizes[k])
        return flat[self.ptr[k] : self.ptr[k + 1]].reshape(s, s)

    def block_norms(self, flat: np.ndarray) -> np.ndarray:
        if self.total == 0:
            return np.zeros(0)
        return np.sqrt(np.add.reduceat(flat * flat, self.ptr[:-1]))


class AdmmWorkspace:
    """Problem-plus-cliques data shared by all iterations of one solve."""

    def __init__(self, problem: SdpProblem, cliques: CliqueSet):
        if cliques.n != problem.n:
            raise ValueError("clique set does not match problem dimension")
        self.problem = problem
        self.cliques = cliques
        self.vs = VecSpace(problem.n, cliques)

        pos = self.vs.position(problem.basis_rows, problem.basis_cols)
        if pos.size and pos.min() < 0:
            raise AssertionError(
                "basis support escapes the clique union; the sparsity "
                "characterization was violated"
            )
        self.J = sp.coo_matrix(
            (problem.basis_vals, (pos, problem.basis_col)),
            shape=(self.vs.n_cov, problem.d),
        ).tocsr()
        self.JT = self.J.T.tocsr()

        za = problem.z_aff.tocoo()
        zpos = self.vs.position(za.row, za.col)
        if zpos.size and zpos.min() < 0:
            raise AssertionError("z_aff support escapes the clique union")
        self.z_aff_cov = np.zeros(self.vs.n_cov)
        self.z_aff_cov[zpos] = za.data

        self.Dinv = 1.0 / self.vs.D
        G = (self.JT @ self.J.multiply(self.Dinv[:, None])).toarray()
        G[np.diag_indices_from(G)] += 1.0
        self.chol = sla.cho_factor(G, lower=True)

        self.e_d = np.zeros(problem.d)
        self.e_d[problem.layout.ell_index] = 1.0
        self.n_total = problem.d + self.vs.total
        self._ginv = None
        self._csr64 = (
            self.J.data, self.J.indices.astype(np.int64),
            self.J.indptr.astype(np.int64),
            self.JT.data, self.JT.indices.astype(np.int64),
            self.JT.indptr.astype(np.int64),
        )

    @property
    def ginv(self) -> np.ndarray:
        """Dense inverse of the reduced matrix, for the fused kernel path."""
        if self._ginv is None:
            self._ginv = sla.cho_solve(
                self.chol, np.eye(self.problem.d), check_finite=False
            )
        return self._ginv

    def solve_kkt(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (J J^T + D) y = rhs on covered entries via Woodbury."""
        t = rhs * self.Dinv
        w = self.JT @ t
        s = sla.cho_solve(self.chol, w, check_finite=False)
        return t - self.Dinv * (self.J @ s)

    def affine_residual(self, omega: np.ndarray, v_flat: np.ndarray) -> float:
        """max-norm of J omega + z_aff - sum_k scatter(v_k)."""
        r = self.J @ omega + self.z_aff_cov - self.vs.scatter(v_flat)
        return float(np.abs(r).max()) if r.size else 0.0


@dataclass
class AdmmState:
    """Iterates and multipliers of one solve (flat per-clique block layout)."""

    omega: np.ndarray
    v: np.ndarray
    gamma: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    rho: float
    iterations: int = 0
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    eps_pri: float = 0.0
    eps_dual: float = 0.0
    converged: bool = False
    history: list = field(default_factory=list)
    # Filled only when debug checks are on.
    last_affine_residual: float = math.nan
    last_block_eig_max: float = math.nan

    def z_matrices(self, vs: VecSpace) -> list[np.ndarray]:
        return [self.block_matrix(vs, k) for k in range(vs.cliques.p)]

    def block_matrix(self, vs: VecSpace, k: int) -> np.ndarray:
        return vs.block(self.z, k).copy()


def _initial_state(work: AdmmWorkspace, opts: SolveOptions, gamma_ell0: float) -> AdmmState:
    d = work.problem.d
    gamma = np.zeros(d)
    gamma[work.problem.layout.ell_index] = gamma_ell0
    return AdmmState(
        omega=gamma.copy(),
        v=np.zeros(work.vs.total),
        gamma=gamma,
        z=np.zeros(work.vs.total),
        mu=np.zeros(d),
        lam=np.zeros(work.vs.total),
        rho=opts.rho0,
    )


def admm_step(state: AdmmState, work: AdmmWorkspace, opts: SolveOptions) -> AdmmState:
    """One full ADMM iteration (mutates and returns ``state``).

    Order: exact (omega, v) equality-constrained QP solve, gamma projection
    onto the nonnegative orthant, per-clique NSD projections, dual ascent,
    residual bookkeeping, and periodic penalty rebalancing.
    """
    vs = work.vs
    rho = state.rho

    # (1) Joint (omega, v) subproblem: KKT elimination + Woodbury solve.
    rhs = (
        work.J @ (rho * state.gamma + state.mu - work.e_d)
        + rho * work.z_aff_cov
        - vs.scatter(rho * state.z + state.lam)
    )
    y = work.solve_kkt(rhs)
    omega = state.gamma + (state.mu - work.e_d - work.JT @ y) / rho
    v = state.z + (state.lam + vs.gather(y)) / rho

    # (2) gamma projection, (3) per-clique NSD projections.
    gamma = np.maximum(omega - state.mu / rho, 0.0)
    z = vs.project_blocks(v - state.lam / rho)

    # (4) Dual ascent.
    mu = state.mu + rho * (gamma - omega)
    lam = state.lam + rho * (z - v)

    # Residuals: primal on the splitting constraints, dual from the change
    # of the second block, both in the max-over-components form.
    blk_pri = vs.block_norms(z - v)
    blk_dual = vs.block_norms(z - state.z)
    pri = max(_norm2(gamma - omega), float(blk_pri.max(initial=0.0)))
    dual = rho * max(_norm2(gamma - state.gamma), float(blk_dual.max(initial=0.0)))
    sqrt_n = math.sqrt(work.n_total)
    scale_pri = max(_norm2(gamma), _norm2(omega), _norm2(z), _norm2(v))
    scale_dual = max(_norm2(mu), _norm2(lam))
    state.eps_pri = opts.eps_abs * sqrt_n + opts.eps_rel * scale_pri
    state.eps_dual = opts.eps_abs * sqrt_n + opts.eps_rel * scale_dual

    if opts.debug_checks:
        state.last_affine_residual = work.affine_residual(omega, v)
        eig_max = -math.inf
        for k in range(vs.cliques.p):
            w = np.linalg.eigvalsh(0.5 * (vs.block(z, k) + vs.block(z, k).T))
            eig_max = max(eig_max, float(w[-1]))
        state.last_block_eig_max = eig_max

    state.omega, state.v, state.gamma, state.z = omega, v, gamma, z
    state.mu, state.lam = mu, lam
    state.primal_residual, state.dual_residual = pri, dual
    state.iterations += 1
    state.history.append((pri, dual))
    state.converged = pri <= state.eps_pri and dual <= state.eps_dual

    # Residual balancing.  Multipliers are stored unscaled, so the scaled
    # duals mu/rho, lam/rho used by the subproblems rescale implicitly.
    if (
        opts.adapt_rho
        and not state.converged
        and state.iterations % RHO_CHECK_EVERY == 0
    ):
        if pri > RHO_BALANCE_RATIO * dual and state.rho * RHO_FACTOR <= RHO_MAX:
            state.rho *= RHO_FACTOR
        elif dual > RHO_BALANCE_RATIO * pri and state.rho / RHO_FACTOR >= RHO_MIN:
            state.rho /= RHO_FACTOR
    return state


def _run_fused(state, work: AdmmWorkspace, opts: SolveOptions, backend, t0: float):
    """Iterate via the backend's fused chunk kernel (numba path).

    Chunks are RHO_CHECK_EVERY iterations long so that penalty rebalancing,
    the time budget, and history collection stay in one place.  Identical
    math to ``admm_step``.
    """
    jd, ji, jp, jtd, jti, jtp = work._csr64
    ell = work.problem.layout.ell_index
    sqrt_n = math.sqrt(work.n_total)
    pri_buf = np.empty(RHO_CHECK_EVERY)
    dual_buf = np.empty(RHO_CHECK_EVERY)
    ginv = work.ginv
    while state.iterations < opts.max_iters:
        chunk = min(RHO_CHECK_EVERY, opts.max_iters - state.iterations)
        steps, converged, pri, dual, eps_pri, eps_dual = backend.run_chunk(
            jd, ji, jp, jtd, jti, jtp,
            ginv, work.Dinv, work.z_aff_cov, ell,
            work.vs.idx, work.vs.ptr, work.vs.sizes,
            state.omega, state.v, state.gamma, state.z, state.mu, state.lam,
            state.rho, chunk, opts.eps_abs, opts.eps_rel, sqrt_n,
            pri_buf, dual_buf,
        )
        state.iterations += steps
        state.history.extend(zip(pri_buf[:steps].tolist(), dual_buf[:steps].tolist()))
        state.primal_residual, state.dual_residual = pri, dual
        state.eps_pri, state.eps_dual = eps_pri, eps_dual
        state.converged = bool(converged)
        if state.converged:
            return
        if opts.adapt_rho:
            if pri > RHO_BALANCE_RATIO * dual and state.rho * RHO_FACTOR <= RHO_MAX:
                state.rho *= RHO_FACTOR
            elif dual > RHO_BALANCE_RATIO * pri and state.rho / RHO_FACTOR >= RHO_MIN:
                state.rho /= RHO_FACTOR
        if (
            opts.time_budget_s is not None
            and time.perf_counter() - t0 > opts.time_budget_s
        ):
            return


def solve(
    problem: SdpProblem,
    cliques: CliqueSet,
    opts: SolveOptions | None = None,
    method: str = "chordal",
    gamma_ell0: float | None = None,
    callback=None,
    return_state: bool = False,
):
    """Run ADMM to convergence and report the bound.

    With a single clique covering 1..N this is exactly the undecomposed
    program.  ``gamma_ell0`` seeds the objective coordinate (defaults to 0;
    callers typically pass the squared layer-norm-product bound).  Returns a
    BoundReport, or (BoundReport, AdmmState) when ``return_state`` is set.
    """
    opts = opts or SolveOptions()
    work = AdmmWorkspace(problem, cliques)
    state = _initial_state(work, opts, 0.0 if gamma_ell0 is None else float(gamma_ell0))

    backend = get_backend()
    fused = (
        callback is None
        and not opts.debug_checks
        and hasattr(backend, "run_chunk")
    )
    t0 = time.perf_counter()
    budget_exhausted = False
    if fused:
        _run_fused(state, work, opts, backend, t0)
        budget_exhausted = (
            not state.converged
            and opts.time_budget_s is not None
            and time.perf_counter() - t0 > opts.time_budget_s
        )
    else:
        while state.iterations < opts.max_iters:
            admm_step(state, work, opts)
            if callback is not None:
                callback(state, work)
            if state.converged:
                break
            if (
                opts.time_budget_s is not None
                and state.iterations % RHO_CHECK_EVERY == 0
                and time.perf_counter() - t0 > opts.time_budget_s
            ):
                budget_exhausted = True
                break
    wall = time.perf_counter() - t0

    gamma_ell = float(state.gamma[problem.layout.ell_index])
    converged = bool(state.converged) and not budget_exhausted
    report = BoundReport(
        method=method,
        tau=problem.tau,
        gamma_ell=gamma_ell,
        lipschitz_bound=math.sqrt(max(gamma_ell, 0.0)),
        certified=bool(problem.tau == 0 and converged),
        iters=state.iterations,
        converged=converged,
        primal_residual=float(state.primal_residual),
        dual_residual=float(state.dual_residual),
        wall_time_s=wall,
    )
    if return_state:
        return report, state
    return report


@dataclass
class SolutionCheck:
    """Independent feasibility audit of a solver output."""

    reconstruction_error: float
    reconstruction_ok: bool
    block_eig_max: float
    blocks_ok: bool
    gamma_min: float
    gamma_ok: bool
    z_eig_max: float
    z_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.reconstruction_ok and self.blocks_ok and self.gamma_ok and self.z_ok

    def as_dict(self) -> dict:
        out = asdict(self)
        out["all_ok"] = self.all_ok
        return out


def verify_solution(
    problem: SdpProblem, cliques: CliqueSet, gamma, z_blocks
) -> SolutionCheck:
    """Audit: (a) the clique blocks reconstruct Z(gamma); (b) every block is
    NSD; (c) gamma is nonnegative; (d) Z(gamma) itself is NSD (the original
    one-piece constraint, checked by a direct eigenvalue computation)."""
    gamma = np.asarray(gamma, dtype=np.float64)
    Z = np.asarray(assemble_Z(problem, gamma).todense())
    recon = np.zeros_like(Z)
    block_eig = -math.inf
    for (lo, hi), Xk in zip(cliques.intervals, z_blocks):
        Xk = np.asarray(Xk, dtype=np.float64)
        recon[lo - 1 : hi, lo - 1 : hi] += Xk
        w = np.linalg.eigvalsh(0.5 * (Xk + Xk.T))
        block_eig = max(block_eig, float(w[-1]))
    recon_err = float(np.abs(Z - recon).max())
    z_scale = float(np.abs(Z).max())
    z_eig = float(np.linalg.eigvalsh(0.5 * (Z + Z.T))[-1])
    return SolutionCheck(
        reconstruction_error=recon_err,
        reconstruction_ok=recon_err <= VERIFY_RECON_TOL * (1.0 + z_scale),
        block_eig_max=block_eig,
        blocks_ok=block_eig <= VERIFY_EIG_TOL,
        gamma_min=float(gamma.min()),
        gamma_ok=bool(gamma.min() >= VERIFY_GAMMA_FLOOR),
        z_eig_max=z_eig,
        z_ok=z_eig <= VERIFY_EIG_TOL,
    )


def decompose_nsd(
    M,
    cliques: CliqueSet,
    rho: float = 1.0,
    tol: float = 1e-9,
    max_iters: int = 100_000,
):
    """Feasibility ADMM: split an NSD matrix supported on the clique union
    into NSD clique blocks summing back to it.

    Zero objective; the v-step is an exact projection onto the affine
    reconstruction constraint, the z-step projects blocks onto the NSD cone.
    Returns (blocks, info).  Raises RuntimeError on non-convergence.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    vs = VecSpace(n, cliques)
    m_full = M.ravel(order="F")
    off_cov = np.delete(m_full, vs.covered)
    scale = 1.0 + float(np.abs(M).max())
    if off_cov.size and np.abs(off_cov).max() > 1e-12 * scale:
        raise ValueError("matrix support escapes the clique union")
    m_cov = m_full[vs.covered]

    z = vs.gather(m_cov / vs.D)  # feasible (non-NSD) warm start
    lam = np.zeros(vs.total)
    for it in range(1, max_iters + 1):
        q = z + lam / rho
        y = (m_cov - vs.scatter(q)) * (1.0 / vs.D)
        v = q + vs.gather(y)
        z = vs.project_blocks(v - lam / rho)
        lam += rho * (z - v)
        split = float(vs.block_norms(z - v).max(initial=0.0))
        if split <= tol * scale:
            recon = float(np.abs(vs.scatter(z) - m_cov).max())
            if recon <= tol * scale * 10.0:
                blocks = [vs.block(z, k).copy() for k in range(cliques.p)]
                return blocks, {"iters": it, "split": split, "reconstruction": recon}
    raise RuntimeError(
        f"feasibility decomposition did not converge in {max_iters} iterations "
        f"(split residual {split:.3e})"
    )
