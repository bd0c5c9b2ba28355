"""The full network: three convolution blocks (graph conv + super-node conv
+ ReLU + batch norm), two pooling layers between them, and a two-layer
classifier fed exclusively by the super-node vector.

Block 3 updates only the super node: genuine-node features computed there
would never reach the classifier, so they are not computed at all.  ReLU
comes before batch norm inside every block.

Checkpoints are a self-describing binary: magic ``MGV1``, a length-prefixed
UTF-8 key=value header (config + ordered array manifest), then raw
little-endian float64 blocks in manifest order.  Loading then saving again
reproduces the payload byte for byte.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import chem
from .diff import Tape
from .errors import CorruptPayload, InvalidConfig, VersionMismatch
from .graph import init_super_nodes
from .layers import Dense, GraphConv, NodeBatchNorm, SuperNodeConv, graph_pool

CHECKPOINT_MAGIC = b"MGV1"
CHECKPOINT_FORMAT = 1
TASK_KINDS = ("classification", "regression")


@dataclass
class ModelConfig:
    task_count: int
    task_kind: str
    node_width: int = 64
    super_width: int = 128
    classifier_hidden: int = 128
    seed: int = 0
    task_names: tuple = ()

    def validate(self):
        if self.task_count < 1:
            raise InvalidConfig(f"task_count must be >= 1, got {self.task_count}")
        if self.task_kind not in TASK_KINDS:
            raise InvalidConfig(f"task_kind must be one of {TASK_KINDS}")
        if min(self.node_width, self.super_width, self.classifier_hidden) <= 0:
            raise InvalidConfig("all widths must be positive")
        if self.super_width <= self.node_width:
            raise InvalidConfig(
                "super_width must exceed node_width (the graph-level feature "
                "is a longer vector than the node feature)"
            )
        if self.seed < 0:
            raise InvalidConfig("seed must be unsigned")
        if self.task_names and len(self.task_names) != self.task_count:
            raise InvalidConfig("task_names length must equal task_count")


class Model:
    def __init__(self, config):
        config.validate()
        self.config = config
        nw, sw = config.node_width, config.super_width
        f_in = chem.FEATURE_WIDTH
        rng = np.random.Generator(np.random.PCG64(config.seed))

        self.gc1 = GraphConv("gc1", f_in, nw, rng)
        self.super1 = SuperNodeConv("super1", f_in, sw, sw, rng)
        self.bn1n = NodeBatchNorm("bn1n", nw)
        self.bn1s = NodeBatchNorm("bn1s", sw)
        self.gc2 = GraphConv("gc2", nw, nw, rng)
        self.super2 = SuperNodeConv("super2", nw, sw, sw, rng)
        self.bn2n = NodeBatchNorm("bn2n", nw)
        self.bn2s = NodeBatchNorm("bn2s", sw)
        self.super3 = SuperNodeConv("super3", nw, sw, sw, rng)
        self.bn3s = NodeBatchNorm("bn3s", sw)
        self.clf1 = Dense("clf", sw, config.classifier_hidden, rng,
                          w_name="W1", b_name="b1")
        self.clf2 = Dense("clf", config.classifier_hidden, config.task_count, rng,
                          w_name="W2", b_name="b2")

        # regression target normalization (identity until fit sets it)
        self.target_mean = np.zeros(config.task_count)
        self.target_std = np.ones(config.task_count)

    # --- parameter/state plumbing ---

    def parameters(self):
        out = []
        for layer in (
            self.gc1, self.super1, self.bn1n, self.bn1s,
            self.gc2, self.super2, self.bn2n, self.bn2s,
            self.super3, self.bn3s, self.clf1, self.clf2,
        ):
            out += layer.parameters()
        return out

    def bn_layers(self):
        return [self.bn1n, self.bn1s, self.bn2n, self.bn2s, self.bn3s]

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def state_arrays(self):
        """Ordered (name, array) pairs covering everything a checkpoint stores."""
        out = [(p.name, p.value) for p in self.parameters()]
        for bn in self.bn_layers():
            out.append((f"{bn.name}/running_mean", bn.running_mean))
            out.append((f"{bn.name}/running_var", bn.running_var))
        out.append(("stats/target_mean", self.target_mean))
        out.append(("stats/target_std", self.target_std))
        return out

    # --- forward ---

    def forward(self, tape, batch, features, training, update_stats=None):
        """Per-graph outputs, shape (graph_count, task_count).

        Classification outputs are raw logits; regression outputs live in
        normalized-target space.  `update_stats` defaults to `training` and
        exists so gradient checking can run the training-mode graph without
        mutating batch-norm running statistics.
        """
        if features.shape[1] != chem.FEATURE_WIDTH:
            raise InvalidConfig(
                f"feature width {features.shape[1]} != {chem.FEATURE_WIDTH}"
            )
        if update_stats is None:
            update_stats = training
        t, up = training, update_stats

        H0 = tape.const(features)
        S0 = tape.const(init_super_nodes(batch, self.config.super_width))

        H1 = self.bn1n.forward(tape, tape.relu(self.gc1.forward(tape, batch, H0)), t, up)
        S1 = self.bn1s.forward(tape, tape.relu(self.super1.forward(tape, batch, H0, S0)), t, up)
        H1 = graph_pool(tape, batch, H1)

        H2 = self.bn2n.forward(tape, tape.relu(self.gc2.forward(tape, batch, H1)), t, up)
        S2 = self.bn2s.forward(tape, tape.relu(self.super2.forward(tape, batch, H1, S1)), t, up)
        H2 = graph_pool(tape, batch, H2)

        S3 = self.bn3s.forward(tape, tape.relu(self.super3.forward(tape, batch, H2, S2)), t, up)

        hidden = tape.tanh(self.clf1.forward(tape, S3))
        return self.clf2.forward(tape, hidden)

    def predict(self, batch, features):
        """Eval-mode forward on a throwaway tape; returns a plain array."""
        tape = Tape()
        return self.forward(tape, batch, features, training=False).value.copy()


def build_model(config):
    """Construct the network with seeded uniform [-s, s] init, s from
    sqrt(6 / (fan_in + fan_out)); biases zero."""
    return Model(config)


# --- checkpoint io ---

def save_checkpoint(model, path):
    cfg = model.config
    arrays = model.state_arrays()
    manifest = ";".join(f"{name}:{','.join(str(d) for d in a.shape)}" for name, a in arrays)
    header_lines = [
        f"format={CHECKPOINT_FORMAT}",
        f"task_count={cfg.task_count}",
        f"task_kind={cfg.task_kind}",
        f"node_width={cfg.node_width}",
        f"super_width={cfg.super_width}",
        f"classifier_hidden={cfg.classifier_hidden}",
        f"seed={cfg.seed}",
        f"task_names={','.join(cfg.task_names)}",
        f"arrays={manifest}",
    ]
    header = "\n".join(header_lines).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptPayload("bad magic bytes")
    if len(blob) < 8:
        raise CorruptPayload("truncated header length")
    (header_len,) = struct.unpack("<I", blob[4:8])
    header_end = 8 + header_len
    if len(blob) < header_end:
        raise CorruptPayload("truncated header")
    fields = {}
    for line in blob[8:header_end].decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        fields[key] = value
    if fields.get("format") != str(CHECKPOINT_FORMAT):
        raise VersionMismatch(f"format {fields.get('format')!r} != {CHECKPOINT_FORMAT}")
    try:
        config = ModelConfig(
            task_count=int(fields["task_count"]),
            task_kind=fields["task_kind"],
            node_width=int(fields["node_width"]),
            super_width=int(fields["super_width"]),
            classifier_hidden=int(fields["classifier_hidden"]),
            seed=int(fields["seed"]),
            task_names=tuple(t for t in fields.get("task_names", "").split(",") if t),
        )
        manifest = []
        for item in fields["arrays"].split(";"):
            name, _, shape_text = item.partition(":")
            shape = tuple(int(d) for d in shape_text.split(",") if d)
            manifest.append((name, shape))
    except (KeyError, ValueError) as exc:
        raise CorruptPayload(f"malformed header: {exc}") from exc

    model = build_model(config)
    expected = {name: a for name, a in model.state_arrays()}
    if [m[0] for m in manifest] != list(expected):
        raise CorruptPayload("array manifest does not match the model architecture")

    offset = header_end
    for name, shape in manifest:
        target = expected[name]
        if tuple(shape) != target.shape:
            raise CorruptPayload(f"{name}: shape {shape} != expected {target.shape}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CorruptPayload(f"{name}: payload truncated")
        target[...] = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise CorruptPayload(f"{len(blob) - offset} trailing bytes")
    return model
