"""Training loop: Adam with bias correction, seeded shuffling into
fixed-size graph minibatches, early stopping on the validation metric, and
evaluation over a dataset.

Everything is deterministic given (seed, config, data): shuffling comes
from one seeded generator, reductions have fixed order, and the best-epoch
snapshot is restored at the end, so repeated runs produce bit-identical
models.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .chem import featurize
from .data import denormalize
from .diff import Tape, backward
from .errors import DegenerateLabels, MolegraphError, NonFiniteGradient
from .graph import build_batch
from .losses import FocalLossConfig, TaskLabels, cross_entropy, focal_loss, mse_loss
from .metrics import EvalReport, mae, pearson_r2, rmse, roc_auc

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    loss: str = "ce"  # ce | focal:<gamma> | mse
    seed: int = 0
    early_stop_patience: int = 10

    def validate(self):
        if min(self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_epsilon) < 0:
            raise MolegraphError("rates must be non-negative")
        if self.batch_size < 1 or self.epochs < 0 or self.early_stop_patience < 1:
            raise MolegraphError("batch_size >= 1, epochs >= 0, patience >= 1 required")
        parse_loss(self.loss)


def parse_loss(text):
    """'ce', 'mse', or 'focal:<gamma>' (bare 'focal' means gamma = 2)."""
    if text in ("ce", "mse"):
        return text, None
    if text == "focal":
        return "focal", 2.0
    if text.startswith("focal:"):
        return "focal", float(text.split(":", 1)[1])
    raise MolegraphError(f"unknown loss {text!r}")


@dataclass
class AdamState:
    t: int = 0
    moments: dict = field(default_factory=dict)  # name -> [m, v]


def adam_step(params, state, cfg):
    """One Adam update from the accumulated `.grad` of each parameter."""
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for p in params:
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in {p.name}")
        if p.name not in state.moments:
            state.moments[p.name] = [np.zeros_like(p.value), np.zeros_like(p.value)]
        m, v = state.moments[p.name]
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * (g * g)
        p.value -= cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + cfg.adam_epsilon)


def _batch_rows(rows):
    graphs = [r.graph for r in rows]
    feats = [featurize(g) for g in graphs]
    batch, packed = build_batch(graphs, feats)
    y = np.stack([r.y for r in rows])
    mask = np.stack([r.mask for r in rows])
    return batch, packed, TaskLabels(y, mask)


def _loss_node(tape, out, labels, loss_kind, gamma):
    if loss_kind == "ce":
        return cross_entropy(tape, out, labels)
    if loss_kind == "focal":
        return focal_loss(tape, out, labels, FocalLossConfig(gamma))
    return mse_loss(tape, out, labels)


def fit(model, train_ds, valid_ds, cfg):
    """Train; returns history rows [{epoch, train_loss, valid_metric}, ...].

    The model ends at the parameters of the best validation epoch (highest
    metric for classification, lowest RMSE for regression).
    """
    cfg.validate()
    loss_kind, gamma = parse_loss(cfg.loss)
    if (loss_kind == "mse") != (train_ds.task_kind == "regression"):
        raise MolegraphError(
            f"loss {cfg.loss!r} incompatible with task kind {train_ds.task_kind!r}"
        )
    params = model.parameters()
    state = AdamState()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    higher_better = train_ds.task_kind == "classification"
    best = None  # (metric, epoch, params snapshot, bn snapshot)
    history = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_ds))
        total_loss, total_graphs = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            rows = [train_ds.rows[i] for i in order[start : start + cfg.batch_size]]
            if not any(r.mask.any() for r in rows):
                continue  # no supervision in this batch
            batch, packed, labels = _batch_rows(rows)
            tape = Tape()
            out = model.forward(tape, batch, packed, training=True)
            loss = _loss_node(tape, out, labels, loss_kind, gamma)
            model.zero_grads()
            backward(tape, loss)
            adam_step(params, state, cfg)
            total_loss += float(loss.value) * len(rows)
            total_graphs += len(rows)

        train_loss = total_loss / max(total_graphs, 1)
        valid_metric = _validation_metric(model, valid_ds)
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "valid_metric": valid_metric}
        )
        log.info("epoch %d: train_loss=%.5f valid=%.5f", epoch, train_loss, valid_metric)

        improved = (
            best is None
            or (higher_better and valid_metric > best[0])
            or (not higher_better and valid_metric < best[0])
        )
        if improved:
            best = (valid_metric, epoch, _snapshot(model))
        elif epoch - best[1] >= cfg.early_stop_patience:
            log.info("early stop at epoch %d (best epoch %d)", epoch, best[1])
            break

    if best is not None:
        _restore(model, best[2])
    return history


def _validation_metric(model, dataset):
    report = evaluate(model, dataset, split_name="valid")
    try:
        return report.mean("auc" if dataset.task_kind == "classification" else "rmse")
    except DegenerateLabels:
        return 0.5 if dataset.task_kind == "classification" else float("inf")


def _snapshot(model):
    arrays = {name: a.copy() for name, a in model.state_arrays()}
    return arrays


def _restore(model, snapshot):
    for name, a in model.state_arrays():
        a[...] = snapshot[name]


def predict_dataset(model, dataset, batch_size=128):
    """Eval-mode outputs over a dataset in row order: (n_rows, task_count).

    Classification: sigmoid probabilities.  Regression: de-normalized to
    original target units with the model's stored statistics.
    """
    outs = []
    for start in range(0, len(dataset), batch_size):
        rows = dataset.rows[start : start + batch_size]
        batch, packed, _ = _batch_rows(rows)
        outs.append(model.predict(batch, packed))
    raw = np.concatenate(outs, axis=0)
    if dataset.task_kind == "classification":
        return 1.0 / (1.0 + np.exp(-raw))
    return denormalize(raw, model.target_mean, model.target_std)


def evaluate(model, dataset, split_name="eval", batch_size=128):
    """EvalReport over a dataset; masked labels are excluded per task.

    Regression labels are assumed to live in the model's normalized space
    (as produced by normalize_targets) and are mapped back to original
    units, matching the de-normalized predictions.
    """
    preds = predict_dataset(model, dataset, batch_size=batch_size)
    labels = dataset.labels()
    per_task, counts, degenerate = {}, {}, []
    for ti, task in enumerate(dataset.task_names):
        present = labels.mask[:, ti] == 1.0
        truth = labels.y[present, ti]
        scores = preds[present, ti]
        counts[task] = int(present.sum())
        if dataset.task_kind == "classification":
            try:
                per_task[task] = {"auc": roc_auc(scores, truth)}
            except DegenerateLabels:
                per_task[task] = {"auc": float("nan")}
                degenerate.append(task)
        else:
            truth = denormalize(truth, model.target_mean[ti], model.target_std[ti])
            try:
                per_task[task] = {
                    "r2": pearson_r2(scores, truth),
                    "rmse": rmse(scores, truth),
                    "mae": mae(scores, truth),
                }
            except (DegenerateLabels, MolegraphError):
                per_task[task] = {"r2": float("nan"), "rmse": float("nan"), "mae": float("nan")}
                degenerate.append(task)
    return EvalReport(
        split=split_name,
        task_kind=dataset.task_kind,
        per_task=per_task,
        counts=counts,
        degenerate=degenerate,
    )
