"""Evaluation metrics: ROC-AUC for classification, squared Pearson
correlation / RMSE / MAE for regression, plus the per-task report.

roc_auc uses the rank (Mann-Whitney) formulation with average ranks on
ties, which equals the pairwise count with ties worth one half: the
numerator stays a sum of halves of integers, so the result is exact.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantTruth, DegenerateLabels, TooFewPoints


def roc_auc(scores, labels):
    """Probability a random positive outranks a random negative; ties 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos == 0 or neg == 0:
        raise DegenerateLabels(f"need both classes, got {pos} positives / {neg} negatives")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))  # average 1-based rank
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)


def pearson_r2(pred, truth):
    """Squared Pearson correlation; affine-invariant, in [0, 1]."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.size < 2:
        raise TooFewPoints("need at least 2 points")
    ty = truth - truth.mean()
    if not np.any(ty):
        raise ConstantTruth("ground truth is constant")
    tx = pred - pred.mean()
    denom = (tx * tx).sum() * (ty * ty).sum()
    if denom == 0.0:  # constant predictions: no correlation
        return 0.0
    cov = (tx * ty).sum()
    return float(cov * cov / denom)


def rmse(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.size < 1:
        raise TooFewPoints("need at least 1 point")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.size < 1:
        raise TooFewPoints("need at least 1 point")
    return float(np.mean(np.abs(pred - truth)))


@dataclass
class EvalReport:
    """Per-task metric values with a task mean over non-degenerate tasks."""

    split: str
    task_kind: str
    per_task: dict          # task name -> {metric: value}
    counts: dict            # task name -> active sample count
    degenerate: list = field(default_factory=list)

    @property
    def metric_names(self):
        return ("auc",) if self.task_kind == "classification" else ("r2", "rmse", "mae")

    def mean(self, metric=None):
        metric = metric or self.metric_names[0]
        vals = [m[metric] for t, m in self.per_task.items() if t not in self.degenerate]
        if not vals:
            raise DegenerateLabels(f"no task has a valid {metric}")
        return float(np.mean(vals))

    def to_csv(self):
        buf = io.StringIO()
        buf.write("task,metric,value,n\n")
        for task, ms in self.per_task.items():
            for metric in self.metric_names:
                value = ms.get(metric)
                text = "" if value is None else f"{value:.6f}"
                buf.write(f"{task},{metric},{text},{self.counts[task]}\n")
        for metric in self.metric_names:
            try:
                buf.write(f"__mean__,{metric},{self.mean(metric):.6f},\n")
            except DegenerateLabels:
                pass
        return buf.getvalue()

    def __str__(self):
        lines = [f"[{self.split}] per-task metrics ({self.task_kind}):"]
        for task, ms in self.per_task.items():
            flag = "  (degenerate, excluded from mean)" if task in self.degenerate else ""
            vals = "  ".join(
                f"{metric}={ms[metric]:.4f}" for metric in self.metric_names if metric in ms
            )
            lines.append(f"  {task:<18} {vals}  n={self.counts[task]}{flag}")
        try:
            head = self.metric_names[0]
            lines.append(f"  mean {head} = {self.mean(head):.4f}")
        except DegenerateLabels:
            lines.append("  mean unavailable (all tasks degenerate)")
        return "\n".join(lines)
