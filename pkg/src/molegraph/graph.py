"""Packing variable-size molecular graphs into flat batch arrays.

A batch concatenates the per-graph atom orderings into one node axis and
keeps neighbour lists in CSR form (flat index array + offsets) so the
segment kernels can run over them directly.  Nodes are also grouped into
degree buckets, one per degree 0..MAX_DEGREE, which is what lets the
convolution share weights across nodes of equal degree.

The dummy super node is deliberately NOT a row here: it has its own width
and its own update weights, so it lives in a separate (G, F_super) state
array created by `init_super_nodes`.
"""

from dataclasses import dataclass

import numpy as np

from .chem import MAX_DEGREE
from .errors import DegreeOverflow, SizeMismatch


@dataclass
class GraphBatch:
    node_count: int
    graph_count: int
    node_owner: np.ndarray       # (N,) graph index per node
    nbr_flat: np.ndarray         # concatenated sorted neighbour lists
    nbr_offsets: np.ndarray      # (N+1,) CSR offsets into nbr_flat
    cnbr_flat: np.ndarray        # closed neighbourhoods ({v} + neighbours, sorted)
    cnbr_offsets: np.ndarray     # (N+1,)
    degree_buckets: tuple        # MAX_DEGREE+1 index arrays, ascending
    per_graph_nodes: tuple       # per graph, its node index array

    @property
    def neighbor_lists(self):
        """Per-node sorted neighbour lists as plain Python lists."""
        return [
            self.nbr_flat[self.nbr_offsets[i] : self.nbr_offsets[i + 1]].tolist()
            for i in range(self.node_count)
        ]

    @property
    def graph_offsets(self):
        """(G+1,) segment boundaries: graph g owns nodes [off[g], off[g+1])."""
        counts = np.fromiter((len(p) for p in self.per_graph_nodes), dtype=np.int64)
        return np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(counts)])

    def degree(self, i):
        return int(self.nbr_offsets[i + 1] - self.nbr_offsets[i])


def build_batch(graphs, features):
    """Pack graphs and aligned per-atom feature matrices into one batch.

    Returns (GraphBatch, X) where X row i is the feature vector of batch
    node i.  Node ordering is the concatenation of per-graph atom orderings.
    """
    if not graphs:
        raise SizeMismatch("empty graph list")
    if len(graphs) != len(features):
        raise SizeMismatch(f"{len(graphs)} graphs vs {len(features)} feature matrices")
    width = features[0].shape[1]
    for g, f in zip(graphs, features):
        if f.shape != (g.n_atoms, width):
            raise SizeMismatch(
                f"feature matrix {f.shape} does not match graph with "
                f"{g.n_atoms} atoms and width {width}"
            )

    total = sum(g.n_atoms for g in graphs)
    owner = np.empty(total, dtype=np.int64)
    nbr_offsets = np.zeros(total + 1, dtype=np.int64)
    cnbr_offsets = np.zeros(total + 1, dtype=np.int64)
    nbr_parts = []
    cnbr_parts = []
    per_graph = []
    degrees = np.empty(total, dtype=np.int64)

    base = 0
    for gi, g in enumerate(graphs):
        n = g.n_atoms
        owner[base : base + n] = gi
        per_graph.append(np.arange(base, base + n, dtype=np.int64))
        for i in range(n):
            nbrs = g.neighbors(i)
            d = len(nbrs)
            if d > MAX_DEGREE:
                raise DegreeOverflow(f"node degree {d} > {MAX_DEGREE}")
            degrees[base + i] = d
            shifted = [base + j for j in nbrs]
            nbr_parts.extend(shifted)
            closed = sorted(shifted + [base + i])
            cnbr_parts.extend(closed)
            nbr_offsets[base + i + 1] = nbr_offsets[base + i] + d
            cnbr_offsets[base + i + 1] = cnbr_offsets[base + i] + d + 1
        base += n

    buckets = tuple(
        np.flatnonzero(degrees == d).astype(np.int64) for d in range(MAX_DEGREE + 1)
    )
    batch = GraphBatch(
        node_count=total,
        graph_count=len(graphs),
        node_owner=owner,
        nbr_flat=np.asarray(nbr_parts, dtype=np.int64),
        nbr_offsets=nbr_offsets,
        cnbr_flat=np.asarray(cnbr_parts, dtype=np.int64),
        cnbr_offsets=cnbr_offsets,
        degree_buckets=buckets,
        per_graph_nodes=tuple(per_graph),
    )
    packed = np.concatenate([np.asarray(f, dtype=np.float64) for f in features], axis=0)
    return batch, packed


def init_super_nodes(batch, width):
    """All-zero (graph_count, width) super-node state for the first layer."""
    if width <= 0:
        raise SizeMismatch(f"super-node width must be positive, got {width}")
    return np.zeros((batch.graph_count, width), dtype=np.float64)
