"""Dataset ingestion, label masking, target normalization, and splits.

The scaffold split groups molecules by a graph-theoretic scaffold: strip
degree-1 atoms until only rings and the linkers between them remain, then
fingerprint the remainder with a Weisfeiler-Leman colour-refinement hash
(element + aromatic flag as initial colours).  Acyclic molecules all share
the sentinel key "ACYCLIC".  Whole scaffold groups are assigned to one
subset each, largest groups first, so no scaffold spans two subsets.
"""

import csv
import logging
from dataclasses import dataclass, field
from hashlib import blake2b

import numpy as np

from .chem import parse_smiles, sanitize_smiles
from .errors import (
    EmptyDataset,
    MissingColumn,
    MolegraphError,
    TooFewRows,
    ZeroVariance,
)
from .losses import TaskLabels

log = logging.getLogger(__name__)

ACYCLIC_KEY = "ACYCLIC"
WL_ROUNDS = 3


@dataclass
class DataRow:
    smiles: str
    graph: object
    y: np.ndarray
    mask: np.ndarray


@dataclass
class Dataset:
    rows: list
    task_names: tuple
    task_kind: str
    dropped: list = field(default_factory=list)  # (file_row, smiles, reason)

    def __len__(self):
        return len(self.rows)

    @property
    def kept(self):
        return len(self.rows)

    def labels(self):
        y = np.stack([r.y for r in self.rows])
        mask = np.stack([r.mask for r in self.rows])
        return TaskLabels(y, mask)

    def subset(self, indices):
        return Dataset(
            rows=[self.rows[i] for i in indices],
            task_names=self.task_names,
            task_kind=self.task_kind,
        )


@dataclass
class SplitSpec:
    method: str = "index"
    fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def validate(self):
        if self.method not in ("index", "random", "scaffold"):
            raise MolegraphError(f"unknown split method {self.method!r}")
        if len(self.fractions) != 3 or min(self.fractions) <= 0:
            raise MolegraphError("fractions must be three positive numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise MolegraphError(f"fractions sum to {sum(self.fractions)}, expected 1.0")


def load_csv(path, smiles_column="smiles", task_columns=(), task_kind="classification"):
    """Load a header CSV into a Dataset; unparseable SMILES rows are dropped
    (with a logged reason), empty or non-numeric label cells are masked out.
    """
    task_columns = list(task_columns)
    rows = []
    dropped = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [smiles_column, *task_columns]:
            if col not in header:
                raise MissingColumn(f"column {col!r} not in header {header}")
        for file_row, rec in enumerate(reader):
            raw = rec[smiles_column]
            try:
                graph = parse_smiles(sanitize_smiles(raw))
            except MolegraphError as exc:
                dropped.append((file_row, raw, f"{type(exc).__name__}: {exc}"))
                log.info("dropping row %d (%r): %s", file_row, raw, exc)
                continue
            y = np.zeros(len(task_columns))
            mask = np.zeros(len(task_columns))
            for ti, col in enumerate(task_columns):
                value = _parse_label(rec[col], task_kind)
                if value is not None:
                    y[ti] = value
                    mask[ti] = 1.0
            rows.append(DataRow(smiles=raw.strip(), graph=graph, y=y, mask=mask))
    if not rows:
        raise EmptyDataset(f"no usable rows in {path}")
    return Dataset(rows=rows, task_names=tuple(task_columns), task_kind=task_kind, dropped=dropped)


def _parse_label(cell, task_kind):
    cell = (cell or "").strip()
    if not cell:
        return None
    try:
        value = float(cell)
    except ValueError:
        log.info("unparseable label cell %r treated as missing", cell)
        return None
    if np.isnan(value):
        return None
    if task_kind == "classification" and value not in (0.0, 1.0):
        log.info("non-binary classification label %r treated as missing", cell)
        return None
    return value


def split(dataset, spec):
    """Partition into (train, valid, test) Datasets per the split spec."""
    spec.validate()
    n = len(dataset)
    if n < 10:
        raise TooFewRows(f"need >= 10 rows to split, got {n}")
    n_valid = int(n * spec.fractions[1])
    n_test = int(n * spec.fractions[2])
    n_train = n - n_valid - n_test  # floor at the boundaries, remainder to train

    if spec.method == "index":
        order = np.arange(n)
    elif spec.method == "random":
        order = np.random.Generator(np.random.PCG64(spec.seed)).permutation(n)
    else:
        return _scaffold_split(dataset, n_train, n_valid)

    train = order[:n_train]
    valid = order[n_train : n_train + n_valid]
    test = order[n_train + n_valid :]
    return dataset.subset(train), dataset.subset(valid), dataset.subset(test)


def _scaffold_split(dataset, n_train, n_valid):
    groups = {}
    for i, row in enumerate(dataset.rows):
        groups.setdefault(scaffold_key(row.graph), []).append(i)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))

    train, valid, test = [], [], []
    for _, members in ordered:
        if len(train) < n_train:
            train.extend(members)
        elif len(valid) < n_valid:
            valid.extend(members)
        else:
            test.extend(members)
    if not valid or not test:
        log.warning(
            "FallbackWarning: scaffold groups too coarse; splitting the largest group"
        )
        merged = train + valid + test
        n = len(merged)
        n_v = max(1, int(n * 0.1))
        train, valid, test = merged[: n - 2 * n_v], merged[n - 2 * n_v : n - n_v], merged[n - n_v :]
    return (
        dataset.subset(sorted(train)),
        dataset.subset(sorted(valid)),
        dataset.subset(sorted(test)),
    )


def scaffold_key(graph):
    """Ring-and-linker scaffold fingerprint, relabeling-invariant."""
    alive = set(range(graph.n_atoms))
    adj = {i: set(graph.neighbors(i)) for i in alive}
    while True:
        leaves = [i for i in alive if len(adj[i]) <= 1]
        if not leaves or len(leaves) == len(alive):
            if len(leaves) == len(alive):
                alive = set()
            break
        for i in leaves:
            for j in adj[i]:
                adj[j].discard(i)
            adj[i] = set()
            alive.discard(i)
    if not alive:
        return ACYCLIC_KEY
    nodes = sorted(alive)
    colors = {
        i: f"{graph.atoms[i].element}|{int(graph.atoms[i].aromatic)}" for i in nodes
    }
    edges = [(i, j) for i in nodes for j in adj[i] if i < j]
    return wl_graph_hash(nodes, edges, colors)


def wl_graph_hash(nodes, edges, colors, rounds=WL_ROUNDS):
    """Weisfeiler-Leman colour refinement hash over an explicit node/edge list.

    `colors` maps node -> initial colour string.  Isomorphic graphs with
    matching colours hash identically regardless of node labels.
    """
    adj = {i: [] for i in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    colors = dict(colors)
    for _ in range(rounds):
        colors = {
            i: _hash_text(colors[i] + "|" + ",".join(sorted(colors[j] for j in adj[i])))
            for i in nodes
        }
    summary = f"n{len(nodes)}e{len(edges)}:" + ",".join(sorted(colors.values()))
    return _hash_text(summary)


def _hash_text(text):
    return blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


def normalize_targets(train, *others):
    """Z-score labels with train-split statistics (population std).

    Returns (mean, std, train', others'...) — transformed copies; masked
    entries transform like the rest but stay masked.
    """
    if train.task_kind != "regression":
        raise MolegraphError("target normalization applies to regression datasets")
    labels = train.labels()
    t = len(train.task_names)
    mean = np.zeros(t)
    std = np.zeros(t)
    for ti in range(t):
        present = labels.mask[:, ti] == 1.0
        values = labels.y[present, ti]
        if values.size == 0:
            raise ZeroVariance(f"task {ti} has no labels on the training split")
        mean[ti] = values.mean()
        std[ti] = values.std()  # population
        if std[ti] == 0.0:
            raise ZeroVariance(f"task {ti} has zero variance on the training split")

    def transform(ds):
        rows = [
            DataRow(r.smiles, r.graph, (r.y - mean) / std, r.mask.copy()) for r in ds.rows
        ]
        return Dataset(rows=rows, task_names=ds.task_names, task_kind=ds.task_kind)

    return (mean, std, transform(train), *[transform(d) for d in others])


def denormalize(values, mean, std):
    return values * std + mean
