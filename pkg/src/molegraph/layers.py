"""Differentiable layers: degree-bucketed graph convolution, the super-node
convolution, closed-neighbourhood max pooling, node-level batch norm, and
plain dense layers.

The graph convolution updates node v of degree d as

    out(v) = W_self^d . H(v) + sum_i W_nb^d . H(n_i) + b_d

with one weight set per degree (0..MAX_DEGREE); because every neighbour of a
degree-d node shares W_nb^d, the neighbour sum is computed once per node and
multiplied afterwards.  The super-node convolution aggregates over all
genuine nodes of each graph and never writes back to them: the edge from
nodes to super node is directed.
"""

import numpy as np

from .chem import MAX_DEGREE
from .diff import Parameter
from .errors import DegreeOverflow, EmptyBatch, SizeMismatch


def glorot(rng, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


class GraphConv:
    """Per-degree weight sets; all MAX_DEGREE+1 buckets get weights even if a
    given batch never populates them (their gradients stay zero)."""

    def __init__(self, name, f_in, f_out, rng):
        self.name = name
        self.f_in = f_in
        self.f_out = f_out
        self.w_self = []
        self.w_nb = []
        self.bias = []
        for d in range(MAX_DEGREE + 1):
            self.w_self.append(Parameter(f"{name}/deg{d}/W_self", glorot(rng, f_in, f_out)))
            self.w_nb.append(Parameter(f"{name}/deg{d}/W_nb", glorot(rng, f_in, f_out)))
            self.bias.append(Parameter(f"{name}/deg{d}/b", np.zeros(f_out)))

    def parameters(self):
        out = []
        for d in range(MAX_DEGREE + 1):
            out += [self.w_self[d], self.w_nb[d], self.bias[d]]
        return out

    def forward(self, tape, batch, H):
        if H.value.shape != (batch.node_count, self.f_in):
            raise SizeMismatch(
                f"{self.name}: features {H.value.shape} vs expected "
                f"({batch.node_count}, {self.f_in})"
            )
        if sum(len(b) for b in batch.degree_buckets) != batch.node_count:
            raise DegreeOverflow("degree buckets do not partition the batch")
        nbr_sums = tape.neighbor_sum(H, batch)
        pairs = []
        for d, idx in enumerate(batch.degree_buckets):
            if len(idx) == 0:
                continue
            part = tape.matmul(tape.gather_rows(H, idx), tape.param(self.w_self[d]))
            if d > 0:
                nb = tape.matmul(tape.gather_rows(nbr_sums, idx), tape.param(self.w_nb[d]))
                part = tape.add(part, nb)
            pairs.append((idx, tape.add(part, tape.param(self.bias[d]))))
        return tape.scatter_rows(pairs, batch.node_count)


class SuperNodeConv:
    """S'(g) = W_self . S(g) + sum over genuine nodes of W_nb . H(i) + b.

    One weight set, no degree buckets: the super node sees every node of its
    graph.  H is never modified (directed edge), only the new S is returned.
    """

    def __init__(self, name, f_node, f_super_in, f_super_out, rng):
        self.name = name
        self.f_node = f_node
        self.w_self = Parameter(f"{name}/W_self", glorot(rng, f_super_in, f_super_out))
        self.w_nb = Parameter(f"{name}/W_nb", glorot(rng, f_node, f_super_out))
        self.bias = Parameter(f"{name}/b", np.zeros(f_super_out))

    def parameters(self):
        return [self.w_self, self.w_nb, self.bias]

    def forward(self, tape, batch, H, S):
        if S.value.shape[0] != batch.graph_count:
            raise SizeMismatch(
                f"{self.name}: super state rows {S.value.shape[0]} vs "
                f"{batch.graph_count} graphs"
            )
        agg = tape.segment_sum(H, batch.graph_offsets)
        out = tape.add(
            tape.matmul(S, tape.param(self.w_self)),
            tape.matmul(agg, tape.param(self.w_nb)),
        )
        return tape.add(out, tape.param(self.bias))


def graph_pool(tape, batch, H):
    """Elementwise max over each genuine node's closed neighbourhood.

    Shape-preserving; the super node is excluded by construction (it is not
    a row of H and is never anyone's neighbour).
    """
    return tape.closed_max(H, batch)


class NodeBatchNorm:
    """Batch norm over the node axis: every node row in the batch is one
    sample, regardless of which graph owns it.  Applied in the same form to
    the super-node state (rows = graphs)."""

    momentum = 0.9
    epsilon = 1e-5

    def __init__(self, name, channels):
        self.name = name
        self.gamma = Parameter(f"{name}/gamma", np.ones(channels))
        self.beta = Parameter(f"{name}/beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, tape, X, training, update_running=True):
        if training:
            if X.value.shape[0] < 1:
                raise EmptyBatch(f"{self.name}: no rows to normalize")
            mu = tape.mean0(X)
            centered = tape.sub(X, mu)
            var = tape.mean0(tape.mul(centered, centered))
            inv = tape.power(tape.add_scalar(var, self.epsilon), -0.5)
            normed = tape.mul(centered, inv)
            if update_running:
                m = self.momentum
                self.running_mean = m * self.running_mean + (1.0 - m) * mu.value
                self.running_var = m * self.running_var + (1.0 - m) * var.value
        else:
            inv = tape.const(1.0 / np.sqrt(self.running_var + self.epsilon))
            normed = tape.mul(tape.sub(X, tape.const(self.running_mean)), inv)
        return tape.add(tape.mul(normed, tape.param(self.gamma)), tape.param(self.beta))


class Dense:
    def __init__(self, name, f_in, f_out, rng, w_name="W", b_name="b"):
        self.name = name
        self.weight = Parameter(f"{name}/{w_name}", glorot(rng, f_in, f_out))
        self.bias = Parameter(f"{name}/{b_name}", np.zeros(f_out))

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, tape, X):
        return tape.add(tape.matmul(X, tape.param(self.weight)), tape.param(self.bias))
