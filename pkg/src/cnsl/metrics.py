"""Classification metrics for seed prediction."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass
class PredictionRecord:
    scores: np.ndarray
    predicted: np.ndarray
    truth: np.ndarray
    wall_time_train: float = 0.0
    wall_time_infer: float = 0.0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.predicted = np.asarray(self.predicted, dtype=float)
        self.truth = np.asarray(self.truth, dtype=float)
        if not (self.scores.shape == self.predicted.shape == self.truth.shape):
            raise ValueError("scores, predicted and truth must have equal shapes")
        if not np.isfinite(self.scores).all():
            raise ValueError("scores must be finite")


@dataclass
class MetricsRow:
    PR: float
    RE: float
    F1: float
    AUC: float | None
    PR_at_100: float
    dataset: str = ""
    method: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def precision_recall_f1(predicted, truth) -> tuple[float, float, float]:
    p = np.asarray(predicted) > 0
    t = np.asarray(truth) > 0
    tp = float(np.sum(p & t))
    pr = tp / p.sum() if p.sum() else 0.0
    re = tp / t.sum() if t.sum() else 0.0
    f1 = 2 * pr * re / (pr + re) if pr + re > 0 else 0.0
    return pr, re, f1


def roc_auc(scores, truth) -> float | None:
    """Mann-Whitney AUC with average ranks for ties; None if truth is one-class."""
    scores = np.asarray(scores, dtype=float)
    t = np.asarray(truth) > 0
    n_pos, n_neg = int(t.sum()), int((~t).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average ranks
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def precision_at_k(scores, truth, k: int = 100) -> float:
    scores = np.asarray(scores, dtype=float)
    t = np.asarray(truth) > 0
    k = min(k, scores.size)
    if k == 0:
        return 0.0
    order = np.lexsort((np.arange(scores.size), -scores))
    return float(t[order[:k]].mean())


def compute_metrics(record: PredictionRecord, dataset: str = "", method: str = "") -> MetricsRow:
    pr, re, f1 = precision_recall_f1(record.predicted, record.truth)
    return MetricsRow(pr, re, f1, roc_auc(record.scores, record.truth),
                      precision_at_k(record.scores, record.truth, 100), dataset, method)


def average_rows(rows: list[MetricsRow], dataset: str = "", method: str = "") -> tuple[MetricsRow, dict]:
    """Mean row over test cases plus per-metric standard deviations.

    F1 of the mean row is recomputed from the mean PR and RE so the row
    satisfies the F1 identity; the per-case mean F1 is kept in the spread dict.
    """
    def stat(key):
        vals = [getattr(r, key) for r in rows if getattr(r, key) is not None]
        return (float(np.mean(vals)), float(np.std(vals))) if vals else (None, None)
    pr, pr_sd = stat("PR")
    re, re_sd = stat("RE")
    f1_case, f1_sd = stat("F1")
    auc, auc_sd = stat("AUC")
    p100, p100_sd = stat("PR_at_100")
    f1 = 2 * pr * re / (pr + re) if pr is not None and pr + re > 0 else 0.0
    row = MetricsRow(pr or 0.0, re or 0.0, f1, auc, p100 or 0.0, dataset, method)
    spread = {"PR_sd": pr_sd, "RE_sd": re_sd, "F1_sd": f1_sd, "F1_case_mean": f1_case,
              "AUC_sd": auc_sd, "PR_at_100_sd": p100_sd, "n_cases": len(rows)}
    return row, spread
