"""Equal-mass score binning and histogram estimates of the calibration curve."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, EmptyInput, NonPositiveBins


@dataclass(frozen=True, eq=False)
class EqualMassBinning:
    """Bins ``[edges[k], edges[k+1])``, the last one closed.

    Outer edges are 0 and 1 so membership covers the whole unit interval.
    Inner edges are observed scores, which keeps every tie block inside a
    single bin. The last bin may collapse to the single point 1.0 when a tie
    block sits there.
    """

    edges: np.ndarray

    @property
    def n_bins(self) -> int:
        return int(self.edges.shape[0] - 1)

    def assign(self, scores) -> np.ndarray:
        s = np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)
        return np.searchsorted(self.edges[1:-1], s, side="right")

    def same_as(self, other: "EqualMassBinning") -> bool:
        return self.edges.shape == other.edges.shape and bool(np.all(self.edges == other.edges))

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist()}

    @classmethod
    def from_dict(cls, obj) -> "EqualMassBinning":
        return cls(np.asarray(obj["edges"], dtype=float))


def _snap_to_tie_edge(sorted_scores, r):
    """Move cut rank ``r`` to the nearer edge of the tie block it falls in."""
    if sorted_scores[r - 1] != sorted_scores[r]:
        return r
    value = sorted_scores[r]
    lo = int(np.searchsorted(sorted_scores, value, side="left"))
    hi = int(np.searchsorted(sorted_scores, value, side="right"))
    return lo if r - lo <= hi - r else hi


def fit_equal_mass_bins(scores, n_bins: int = 15) -> EqualMassBinning:
    s = np.sort(np.asarray(scores, dtype=float).reshape(-1))
    n = s.shape[0]
    if n == 0:
        raise EmptyInput("cannot fit bins on an empty score list")
    if n_bins < 1:
        raise NonPositiveBins(f"n_bins must be positive, got {n_bins}")
    cuts = []
    for k in range(1, n_bins):
        r = (k * n) // n_bins
        if r <= 0 or r >= n:
            continue
        r = _snap_to_tie_edge(s, r)
        if 0 < r < n and (not cuts or r > cuts[-1]):
            cuts.append(r)
    edges = np.concatenate([[0.0], s[cuts], [1.0]])
    return EqualMassBinning(edges)


@dataclass(frozen=True, eq=False)
class CalibrationCurveEstimate:
    """Per-bin sample count, mean score and mean label (NaN when empty)."""

    binning: EqualMassBinning
    mass: np.ndarray
    mean_score: np.ndarray
    mean_label: np.ndarray

    @property
    def n(self) -> int:
        return int(self.mass.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.mass / self.mass.sum()

    @property
    def nonempty(self) -> np.ndarray:
        return self.mass > 0

    def rows(self):
        edges = self.binning.edges
        for k in range(self.binning.n_bins):
            yield {
                "bin": k, "lo": float(edges[k]), "hi": float(edges[k + 1]),
                "mass": int(self.mass[k]),
                "mean_score": _num(self.mean_score[k]),
                "mean_label": _num(self.mean_label[k]),
            }


def _num(x):
    x = float(x)
    return None if np.isnan(x) else x


def _bin_means(values, bins, n_bins):
    counts = np.bincount(bins, minlength=n_bins)
    sums = np.bincount(bins, weights=values, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return counts, means


def estimate_calibration_curve(ds, b: EqualMassBinning) -> CalibrationCurveEstimate:
    if ds.n == 0:
        raise EmptyDataset()
    bins = b.assign(ds.scores)
    counts, mean_label = _bin_means(ds.labels.astype(float), bins, b.n_bins)
    _, mean_score = _bin_means(ds.scores, bins, b.n_bins)
    return CalibrationCurveEstimate(b, counts.astype(np.int64), mean_score, mean_label)


def write_bins_csv(curve: CalibrationCurveEstimate, path) -> None:
    cols = ["bin", "lo", "hi", "mass", "mean_score", "mean_label"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in curve.rows():
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
