"""Baseline performance metrics (Brier, binned calibration errors, AUC, accuracy)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .binning import EqualMassBinning, estimate_calibration_curve, fit_equal_mass_bins
from .errors import EmptyDataset, SingleClass


@dataclass(frozen=True)
class MetricsReport:
    brier: float
    ece: float
    mce: float
    rmsce: float
    cl: float
    auc: float
    accuracy: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in asdict(self).items()}


def brier(ds) -> float:
    if ds.n == 0:
        raise EmptyDataset()
    return float(np.mean((ds.scores - ds.labels) ** 2))


def binned_calibration_metrics(ds, b: EqualMassBinning):
    """``(ece, mce, cl, rmsce)`` from the per-bin gaps ``|c_hat - mean score|``."""
    curve = estimate_calibration_curve(ds, b)
    live = curve.mass > 0
    w = curve.mass[live] / curve.mass.sum()
    gap = np.abs(curve.mean_label[live] - curve.mean_score[live])
    ece = float(np.sum(w * gap))
    mce = float(np.max(gap))
    cl = float(np.sum(w * gap ** 2))
    return ece, mce, cl, math.sqrt(cl)


def auc(ds) -> float:
    """Mann-Whitney statistic; tied positive/negative pairs count one half."""
    y = ds.labels
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    _, inverse, counts = np.unique(ds.scores, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    # average 1-based rank of each tie block
    upper = np.cumsum(counts)
    avg_rank = upper - (counts - 1) / 2.0
    rank_sum = float(np.sum(avg_rank[inverse][y == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(ds, t: float = 0.5) -> float:
    if ds.n == 0:
        raise EmptyDataset()
    return float(np.mean((ds.scores >= t).astype(np.int8) == ds.labels))


def baseline_metrics(ds, b: EqualMassBinning | None = None, t: float = 0.5,
                     n_bins: int = 15) -> MetricsReport:
    if b is None:
        b = fit_equal_mass_bins(ds.scores, n_bins)
    ece, mce, cl, rmsce = binned_calibration_metrics(ds, b)
    try:
        a = auc(ds)
    except SingleClass:
        a = float("nan")
    return MetricsReport(brier(ds), ece, mce, rmsce, cl, a, accuracy(ds, t))
