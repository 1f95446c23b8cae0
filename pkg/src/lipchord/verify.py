"""Independent ground-truth oracles: sampled Lipschitz lower bounds and a
small-scale round-trip check of the clique decomposition property.

The lower bound samples difference quotients; no solver machinery is shared
with the bound computation, so it can catch an unsound certificate.  The
sampling protocol (Gaussian pairs plus local perturbations) is this
artifact's own choice and is recorded in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .admm import decompose_nsd
from .chordal import CliqueSet
from .network import Network, eval_forward_batch

__all__ = ["LowerBoundReport", "lower_bound_sampling", "decomposition_roundtrip"]

DEFAULT_PAIRS = 10_000
DEFAULT_LOCAL = 10_000
DEFAULT_RADIUS = 1e-4


@dataclass
class LowerBoundReport:
    """Best sampled difference quotient; a floor for any valid upper bound."""

    best_quotient: float
    best_pair: tuple[tuple[float, ...], tuple[float, ...]]
    samples: int
    mode: str  # "pairwise" or "local-perturbation", whichever won
    seed: int
    n_pairs: int
    n_local: int
    radius: float

    def as_dict(self) -> dict:
        return asdict(self)


def lower_bound_sampling(
    net: Network,
    n_pairs: int = DEFAULT_PAIRS,
    n_local: int = DEFAULT_LOCAL,
    radius: float = DEFAULT_RADIUS,
    seed: int = 0,
) -> LowerBoundReport:
    """Empirical Lipschitz floor from sampled difference quotients.

    Draws ``n_pairs`` independent Gaussian input pairs plus ``n_local``
    local perturbations (y = x + radius * u with u a uniform random unit
    direction) and reports the largest ||f(x) - f(y)|| / ||x - y||.
    Deterministic in ``seed``; zero-distance pairs are skipped.
    """
    if net.activation.kind not in ("relu", "tanh"):
        raise ValueError("lower bound sampling needs an evaluable activation")
    n1 = net.input_dim
    best = 0.0
    best_pair = (np.zeros(n1), np.zeros(n1))
    best_mode = "pairwise"

    def scan(X, Y, mode):
        nonlocal best, best_pair, best_mode
        dx = np.linalg.norm(X - Y, axis=1)
        keep = dx > 0
        if not keep.any():
            return
        X, Y, dx = X[keep], Y[keep], dx[keep]
        df = np.linalg.norm(
            eval_forward_batch(net, X) - eval_forward_batch(net, Y), axis=1
        )
        q = df / dx
        t = int(np.argmax(q))
        if q[t] > best:
            best = float(q[t])
            best_pair = (X[t].copy(), Y[t].copy())
            best_mode = mode

    # One row of draws per sample and an independent stream per mode, so a
    # larger sample count extends the smaller one (the report is monotone in
    # the number of samples under a fixed seed).
    if n_pairs > 0:
        XY = np.random.default_rng([seed, 0]).standard_normal((n_pairs, 2 * n1))
        scan(XY[:, :n1], XY[:, n1:], "pairwise")
    if n_local > 0:
        XU = np.random.default_rng([seed, 1]).standard_normal((n_local, 2 * n1))
        X = XU[:, :n1]
        U = XU[:, n1:]
        U = U / np.linalg.norm(U, axis=1, keepdims=True)
        scan(X, X + radius * U, "local-perturbation")

    return LowerBoundReport(
        best_quotient=best,
        best_pair=(tuple(best_pair[0].tolist()), tuple(best_pair[1].tolist())),
        samples=n_pairs + n_local,
        mode=best_mode,
        seed=seed,
        n_pairs=n_pairs,
        n_local=n_local,
        radius=radius,
    )


def _random_nsd_block(rng: np.random.Generator, s: int) -> np.ndarray:
    A = rng.standard_normal((s, s)) / s
    return -(A @ A.T)


def decomposition_roundtrip(
    cliques: CliqueSet, seed: int = 0, eig_tol: float = 1e-9, recon_tol: float = 1e-6
) -> bool:
    """Round-trip both directions of the clique decomposition property.

    Easy direction: a sum of scattered NSD clique blocks is globally NSD and
    supported on the clique union.  Hard direction: a random NSD matrix
    supported on the clique union (built as such a sum, perturbed inside the
    pattern and shifted back to NSD) is re-decomposed by the feasibility
    solver into NSD blocks whose scatter-sum reconstructs it.
    """
    if cliques.n > 60:
        raise ValueError("round-trip oracle is meant for desk scale (N <= 60)")
    rng = np.random.default_rng(seed)
    n = cliques.n

    M0 = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=bool)
    for lo, hi in cliques.intervals:
        s = hi - lo + 1
        M0[lo - 1 : hi, lo - 1 : hi] += _random_nsd_block(rng, s)
        mask[lo - 1 : hi, lo - 1 : hi] = True

    # Easy direction: global NSD, support inside the union pattern.
    scale = float(np.abs(M0).max())
    if float(np.linalg.eigvalsh(M0)[-1]) > eig_tol * (1.0 + scale):
        return False
    if np.abs(M0[~mask]).max(initial=0.0) > 0.0:
        return False

    # Hard direction: perturb within the pattern, shift back to NSD, and
    # recover some decomposition via the zero-objective feasibility solve.
    noise = rng.standard_normal((n, n))
    noise = 0.05 * scale * (noise + noise.T) / 2.0
    noise[~mask] = 0.0
    M = M0 + noise
    top = float(np.linalg.eigvalsh(M)[-1])
    if top > 0.0:
        M -= (top + 1e-9) * np.eye(n)
    assert float(np.linalg.eigvalsh(M)[-1]) <= 1e-12 * (1.0 + scale)

    blocks, info = decompose_nsd(M, cliques)
    recon = np.zeros_like(M)
    for (lo, hi), Xk in zip(cliques.intervals, blocks):
        recon[lo - 1 : hi, lo - 1 : hi] += Xk
        if float(np.linalg.eigvalsh(0.5 * (Xk + Xk.T))[-1]) > eig_tol * (1.0 + scale):
            return False
    return float(np.abs(recon - M).max()) <= recon_tol
