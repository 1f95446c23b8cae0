"""Pure-numpy implementations of the solver's hot per-iteration kernels.

All three kernels operate on the flat block layout used by the solver: the
per-clique vectors are concatenated into one array, with ``ptr`` delimiting
blocks and ``idx`` mapping each flat entry to its position in the covered
global vector.  Equal-size projection blocks are batched through a single
stacked eigendecomposition.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def scatter_add(values: np.ndarray, idx: np.ndarray, ptr: np.ndarray, n_out: int):
    """Accumulate per-clique blocks into the covered global vector.

    Indices are unique within one block, so fancy-index addition is safe per
    block; overlap between blocks is handled by the outer loop.
    """
    out = np.zeros(n_out)
    for k in range(ptr.size - 1):
        sl = slice(ptr[k], ptr[k + 1])
        out[idx[sl]] += values[sl]
    return out


def gather(y: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Per-clique blocks of the covered global vector (concatenated)."""
    return np.take(y, idx)


def project_nsd_blocks(x: np.ndarray, ptr: np.ndarray, sizes: np.ndarray):
    """Project each block, viewed as a square matrix, onto the NSD cone.

    Each block is symmetrized, eigendecomposed, and has its positive
    eigenvalues clamped to zero.  Blocks of equal size go through one
    batched eigendecomposition.
    """
    out = np.empty_like(x)
    order = np.argsort(sizes, kind="stable")
    start = 0
    while start < order.size:
        s = int(sizes[order[start]])
        stop = start
        while stop < order.size and sizes[order[stop]] == s:
            stop += 1
        ks = order[start:stop]
        stack = np.stack([x[ptr[k] : ptr[k] + s * s].reshape(s, s) for k in ks])
        stack = 0.5 * (stack + stack.transpose(0, 2, 1))
        w, V = np.linalg.eigh(stack)
        w = np.minimum(w, 0.0)
        proj = (V * w[:, None, :]) @ V.transpose(0, 2, 1)
        for t, k in enumerate(ks):
            out[ptr[k] : ptr[k] + s * s] = proj[t].ravel()
        start = stop
    return out
