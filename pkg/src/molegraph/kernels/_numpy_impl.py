"""Pure-numpy implementations of the segment/scatter kernels.

Semantics are defined here; the compiled backend in `_core.pyx` must match
bit-for-bit.  All reductions run in ascending candidate order per output row
(sequential adds, first-wins ties) so results are reproducible and identical
across backends.
"""

import numpy as np


def neighbor_sum(H, nbr_flat, offsets):
    """out[i] = sum of H[j] over the (sorted) neighbour list of node i."""
    H = np.asarray(H, dtype=np.float64)
    n = offsets.shape[0] - 1
    out = np.zeros((n, H.shape[1]), dtype=np.float64)
    counts = np.diff(offsets)
    dst = np.repeat(np.arange(n, dtype=np.int64), counts)
    np.add.at(out, dst, H[nbr_flat])
    return out


def closed_max(H, cnbr_flat, offsets):
    """Columnwise max over each node's closed neighbourhood.

    Returns (out, argwin) where argwin[i, c] is the source row index that
    supplied out[i, c]; the first candidate in flat (ascending index) order
    wins exact ties.
    """
    H = np.asarray(H, dtype=np.float64)
    n = offsets.shape[0] - 1
    gathered = H[cnbr_flat]  # (E, F); every segment is non-empty (self included)
    starts = offsets[:-1]
    out = np.maximum.reduceat(gathered, starts, axis=0)
    seg_id = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
    is_max = gathered == out[seg_id]
    flat_pos = np.arange(gathered.shape[0], dtype=np.int64)[:, None]
    masked = np.where(is_max, flat_pos, gathered.shape[0])
    first = np.minimum.reduceat(masked, starts, axis=0)
    argwin = cnbr_flat[first]
    return out, argwin


def scatter_max_grad(grad, argwin, n_rows):
    """Adjoint of closed_max: route grad[i, c] to row argwin[i, c], column c."""
    grad = np.asarray(grad, dtype=np.float64)
    n_cols = grad.shape[1]
    flat = np.zeros(n_rows * n_cols, dtype=np.float64)
    cols = np.broadcast_to(np.arange(n_cols, dtype=np.int64), grad.shape)
    np.add.at(flat, (argwin * n_cols + cols).ravel(), grad.ravel())
    return flat.reshape(n_rows, n_cols)


def segment_sum(H, seg_offsets):
    """Row sums over contiguous segments; segment g is rows [off[g], off[g+1])."""
    H = np.asarray(H, dtype=np.float64)
    return np.add.reduceat(H, seg_offsets[:-1], axis=0)
