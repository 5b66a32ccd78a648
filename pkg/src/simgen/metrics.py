"""Classification and regression metrics for the surrogate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, derive_matrix

THRESHOLD = 0.5


class MetricError(ValueError):
    pass


@dataclass
class Metrics:
    tp: int | None = None
    tn: int | None = None
    fp: int | None = None
    fn: int | None = None
    roc_auc: float | None = None
    macro_f1: float | None = None
    accuracy: float | None = None
    r2: float | None = None
    mse: float | None = None
    rmse: float | None = None
    mae: float | None = None
    # Messages for metrics that could not be computed (e.g. AUC on one class).
    errors: tuple = ()

    @property
    def confusion(self):
        return self.tp, self.tn, self.fp, self.fn

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if v is not None and k != "errors"}
        if self.errors:
            out["errors"] = list(self.errors)
        if self.tp is not None:
            out["confusion"] = {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}
            for k in ("tp", "tn", "fp", "fn"):
                out.pop(k)
        return out


def roc_auc(y, scores) -> float:
    """Mann-Whitney rank statistic; tied scores count one half."""
    y = np.asarray(y, dtype=float)
    s = np.asarray(scores, dtype=float)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC-AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def confusion_metrics(tp: int, tn: int, fp: int, fn: int) -> tuple[float, float]:
    """(macro F1, accuracy) from a binary confusion matrix."""
    f1_pos = f1_from_counts(tp, fp, fn)
    # the negative class sees tn as its true positives, fn as its false positives
    f1_neg = f1_from_counts(tn, fn, fp)
    return 0.5 * (f1_pos + f1_neg), (tp + tn) / (tp + tn + fp + fn)


def binary_metrics(y, scores, threshold: float = THRESHOLD) -> Metrics:
    y = np.asarray(y, dtype=float)
    s = np.asarray(scores, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise MetricError("binary metrics need 0/1 outcomes")
    pred = s >= threshold
    truth = y == 1
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    macro_f1, acc = confusion_metrics(tp, tn, fp, fn)
    m = Metrics(tp=tp, tn=tn, fp=fp, fn=fn, macro_f1=macro_f1, accuracy=acc)
    try:
        m.roc_auc = roc_auc(y, s)
    except MetricError as exc:
        m.errors = (str(exc),)
    return m


def regression_metrics(y, pred) -> Metrics:
    y = np.asarray(y, dtype=float)
    p = np.asarray(pred, dtype=float)
    if y.size == 0:
        raise MetricError("regression metrics need at least one row")
    resid = y - p
    mse = float(np.mean(resid ** 2))
    m = Metrics(mse=mse, rmse=math.sqrt(mse), mae=float(np.mean(np.abs(resid))))
    # compare values directly: the mean of identical floats need not equal them
    if np.any(y != y[0]):
        m.r2 = 1.0 - float(np.sum(resid ** 2)) / float(np.sum((y - y.mean()) ** 2))
    else:
        m.errors = ("R^2 undefined: zero target variance",)
    return m


def _features(model, ds: Dataset):
    return ds.rows if ds.featurized else derive_matrix(model.space, ds.rows)


def evaluate_binary(model, ds: Dataset) -> Metrics:
    return binary_metrics(ds.outcomes, model.predict(_features(model, ds)))


def evaluate_regression(model, ds: Dataset) -> Metrics:
    return regression_metrics(ds.outcomes, model.predict(_features(model, ds)))


def evaluate(model, ds: Dataset) -> Metrics:
    return evaluate_binary(model, ds) if model.task == "binary" else evaluate_regression(model, ds)
