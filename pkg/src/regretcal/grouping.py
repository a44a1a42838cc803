"""Feature-space regions inside score bins: grouping loss and GLAR.

Each score bin gets its own small classification tree grown on one fold;
region means and the grouping-loss estimate come from a disjoint fold. GLAR
replaces a score by the mean label of its (bin, region) cell, GLAT moves the
threshold instead of the score.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

import numpy as np

from .binning import EqualMassBinning
from .errors import BinningMismatch, EmptyRegion, FoldOverlap, NoFeatures
from .recalibration import StepMap, isotonic_fit, map_from_dict
from .regret import rgl_bin

MIN_LEAF = 10
_MIN_GAIN = 1e-12


# -- trees -------------------------------------------------------------------

def _gini_total(n, pos):
    """Sum over samples of the Gini impurity: n * 2 p (1 - p)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, 2.0 * pos * (n - pos) / np.maximum(n, 1), 0.0)


def _best_split(X, y, min_leaf):
    n, d = X.shape
    if n < 2 * min_leaf:
        return None
    parent = float(_gini_total(np.array(n), np.array(y.sum())))
    best = None
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        left_n = np.arange(1, n)
        left_pos = np.cumsum(ys)[:-1]
        total = _gini_total(left_n, left_pos) + _gini_total(n - left_n, ys.sum() - left_pos)
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (n - left_n >= min_leaf)
        if not valid.any():
            continue
        gains = np.where(valid, parent - total, -np.inf)
        i = int(np.argmax(gains))
        gain = float(gains[i])
        if gain > _MIN_GAIN and (best is None or gain > best[0]):
            lo, hi = xs[i], xs[i + 1]
            thr = 0.5 * (lo + hi)
            if thr >= hi:
                thr = lo
            best = (gain, j, float(thr))
    return best


@dataclass(frozen=True, eq=False)
class Tree:
    """Axis-aligned binary tree; ``x[feature] <= threshold`` goes left.

    ``nodes`` rows are ``(feature, threshold, left, right, leaf)`` with
    ``leaf = -1`` on internal nodes and ``feature = -1`` on leaves.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.leaf >= 0).sum())

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                break
            idx = np.flatnonzero(internal)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
        return self.leaf[node]

    def conditions(self):
        """Box conditions per leaf, as lists of ``(feature, op, threshold)``."""
        out = {}

        def walk(k, path):
            if self.feature[k] < 0:
                out[int(self.leaf[k])] = path
                return
            f, t = int(self.feature[k]), float(self.threshold[k])
            walk(int(self.left[k]), path + [(f, "<=", t)])
            walk(int(self.right[k]), path + [(f, ">", t)])

        walk(0, [])
        return [out[k] for k in sorted(out)]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "leaf": self.leaf.tolist()}

    @classmethod
    def from_dict(cls, obj) -> "Tree":
        return cls(np.asarray(obj["feature"], dtype=np.int64),
                   np.asarray(obj["threshold"], dtype=float),
                   np.asarray(obj["left"], dtype=np.int64),
                   np.asarray(obj["right"], dtype=np.int64),
                   np.asarray(obj["leaf"], dtype=np.int64))

    @classmethod
    def stump(cls) -> "Tree":
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([0]))


def grow_tree(X, y, max_leaves: int, min_leaf: int = MIN_LEAF) -> Tree:
    """Best-first Gini tree with at most ``max_leaves`` leaves."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    nodes = [{"idx": np.arange(X.shape[0]), "feature": -1, "threshold": 0.0,
              "left": -1, "right": -1}]
    frontier = {0: _best_split(X, y, min_leaf)}
    n_leaves = 1
    while n_leaves < max_leaves:
        cands = [(s[0], k) for k, s in frontier.items() if s is not None]
        if not cands:
            break
        # highest gain first, oldest node on ties
        _, k = max(cands, key=lambda c: (c[0], -c[1]))
        _, j, thr = frontier.pop(k)
        idx = nodes[k]["idx"]
        go_left = X[idx, j] <= thr
        for side, sub in (("left", idx[go_left]), ("right", idx[~go_left])):
            nodes.append({"idx": sub, "feature": -1, "threshold": 0.0, "left": -1, "right": -1})
            nodes[k][side] = len(nodes) - 1
            frontier[len(nodes) - 1] = _best_split(X[sub], y[sub], min_leaf)
        nodes[k]["feature"], nodes[k]["threshold"] = j, thr
        n_leaves += 1
    leaf = np.full(len(nodes), -1, dtype=np.int64)
    counter = 0

    def number(k):
        nonlocal counter
        if nodes[k]["feature"] < 0:
            leaf[k] = counter
            counter += 1
        else:
            number(nodes[k]["left"])
            number(nodes[k]["right"])

    number(0)
    return Tree(np.array([nd["feature"] for nd in nodes], dtype=np.int64),
                np.array([nd["threshold"] for nd in nodes], dtype=float),
                np.array([nd["left"] for nd in nodes], dtype=np.int64),
                np.array([nd["right"] for nd in nodes], dtype=np.int64),
                leaf)


# -- partitions --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegionPartition:
    """One tree per score bin plus bookkeeping for the honest-fold check."""

    binning: EqualMassBinning
    trees: List[Tree]
    fit_ids: np.ndarray
    fit_mass: np.ndarray
    fit_mean_label: List[np.ndarray]
    max_leaves: int
    min_leaf: int

    def n_regions(self) -> np.ndarray:
        return np.array([t.n_leaves for t in self.trees])

    def regions(self, bins, features) -> np.ndarray:
        out = np.zeros(bins.shape[0], dtype=np.int64)
        for k in np.unique(bins):
            sel = bins == k
            out[sel] = self.trees[k].apply(features[sel])
        return out

    def to_dict(self) -> dict:
        return {"binning": self.binning.to_dict(),
                "trees": [t.to_dict() for t in self.trees],
                "max_leaves": self.max_leaves, "min_leaf": self.min_leaf}


def fit_partition(ds_fit, b: EqualMassBinning, max_leaves: int = 5,
                  min_leaf: int = MIN_LEAF) -> RegionPartition:
    if ds_fit.feature_dim == 0:
        raise NoFeatures()
    if max_leaves < 1:
        raise ValueError("max_leaves must be positive")
    bins = b.assign(ds_fit.scores)
    trees, masses, means = [], [], []
    for k in range(b.n_bins):
        sel = np.flatnonzero(bins == k)
        X, y = ds_fit.features[sel], ds_fit.labels[sel].astype(float)
        tree = grow_tree(X, y, max_leaves, min_leaf) if sel.size else Tree.stump()
        trees.append(tree)
        reg = tree.apply(X) if sel.size else np.zeros(0, dtype=np.int64)
        cnt = np.bincount(reg, minlength=tree.n_leaves)
        masses.append(cnt)
        with np.errstate(invalid="ignore", divide="ignore"):
            means.append(np.bincount(reg, weights=y, minlength=tree.n_leaves) / cnt)
    return RegionPartition(b, trees, ds_fit.ids.copy(),
                           np.array([m.sum() for m in masses]), means, max_leaves, min_leaf)


# -- grouping loss -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GroupingLossEstimate:
    """Per-bin grouping-loss estimates from the estimation fold.

    ``region_means[k][r]`` is NaN for regions that received no estimation
    samples; such regions carry no mass in the estimate.
    """

    binning: EqualMassBinning
    gl_hat: np.ndarray
    gl_raw: np.ndarray
    c_hat: np.ndarray
    mass: np.ndarray
    region_mass: List[np.ndarray]
    region_means: List[np.ndarray]
    debiased: bool = True
    available: bool = True

    @property
    def n_regions_used(self) -> np.ndarray:
        return np.array([int((m > 0).sum()) for m in self.region_mass])

    @classmethod
    def unavailable(cls, curve) -> "GroupingLossEstimate":
        """Zero estimate for datasets without features (GL not estimable)."""
        k = curve.binning.n_bins
        return cls(curve.binning, np.zeros(k), np.zeros(k), curve.mean_label.copy(),
                   curve.mass.copy(), [np.array([m]) for m in curve.mass],
                   [np.array([c]) for c in curve.mean_label], True, False)


def estimate_gl(ds_estimate, b: EqualMassBinning, part: RegionPartition, *,
                debias: bool = True, strict: bool = False) -> GroupingLossEstimate:
    """Debiased between-region variance of mean labels inside each bin.

    ``strict=True`` raises :class:`EmptyRegion` when a fitted region gets no
    estimation samples instead of dropping it.
    """
    if not part.binning.same_as(b):
        raise BinningMismatch("partition was fitted on a different binning")
    if ds_estimate.feature_dim == 0:
        raise NoFeatures()
    overlap = np.intersect1d(part.fit_ids, ds_estimate.ids)
    if overlap.size:
        raise FoldOverlap(f"{overlap.size} samples were used both to fit the partition "
                          "and to estimate the grouping loss")
    bins = b.assign(ds_estimate.scores)
    k_bins = b.n_bins
    gl_hat = np.full(k_bins, np.nan)
    gl_raw = np.full(k_bins, np.nan)
    c_hat = np.full(k_bins, np.nan)
    mass = np.zeros(k_bins, dtype=np.int64)
    region_mass, region_means = [], []
    y_all = ds_estimate.labels.astype(float)
    for k in range(k_bins):
        sel = np.flatnonzero(bins == k)
        tree = part.trees[k]
        reg = tree.apply(ds_estimate.features[sel])
        y = y_all[sel]
        n_r = np.bincount(reg, minlength=tree.n_leaves)
        with np.errstate(invalid="ignore", divide="ignore"):
            m_r = np.bincount(reg, weights=y, minlength=tree.n_leaves) / n_r
        region_mass.append(n_r)
        region_means.append(m_r)
        mass[k] = sel.size
        if sel.size == 0:
            continue
        if strict and (n_r == 0).any():
            raise EmptyRegion(f"bin {k} has regions without estimation samples")
        nz = n_r > 0
        w = n_r[nz] / sel.size
        c = float(y.mean())
        explained = float(np.sum(w * (m_r[nz] - c) ** 2))
        correction = float(np.sum(w * m_r[nz] * (1.0 - m_r[nz]) / n_r[nz])) if debias else 0.0
        c_hat[k] = c
        gl_raw[k] = explained - correction
        gl_hat[k] = min(max(explained - correction, 0.0), 0.25)
    return GroupingLossEstimate(b, gl_hat, gl_raw, c_hat, mass, region_mass, region_means, debias)


# -- GLAR ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GlarMap:
    """Cell-mean correction with an isotonic fallback.

    A bin is corrected only when the estimated grouping regret, overall and
    in that bin, exceeds ``gate``.
    """

    binning: EqualMassBinning
    trees: List[Tree]
    region_means: List[np.ndarray]
    active: np.ndarray
    fallback: StepMap
    gate: float
    t_star: float
    u_delta: float
    rgl_bins: np.ndarray
    rgl_total: float

    @property
    def gate_open(self) -> bool:
        return bool(self.active.any())

    def predict_dataset(self, ds) -> np.ndarray:
        return self.predict(ds.scores, ds.features if ds.feature_dim else None)

    def predict(self, scores, features=None) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        out = np.asarray(self.fallback(scores), dtype=float).copy()
        if not self.active.any():
            return out
        bins = self.binning.assign(scores)
        hot = self.active[bins]
        if not hot.any():
            return out
        if features is None or np.asarray(features).shape[-1] == 0:
            raise NoFeatures("GLAR correction is active for these scores but no features were given")
        features = np.asarray(features, dtype=float)
        for k in np.unique(bins[hot]):
            sel = np.flatnonzero(bins == k)
            means = self.region_means[k][self.trees[k].apply(features[sel])]
            ok = ~np.isnan(means)
            out[sel[ok]] = means[ok]
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "glar",
            "binning": self.binning.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
            "region_means": [[None if np.isnan(v) else float(v) for v in m]
                             for m in self.region_means],
            "active": self.active.tolist(),
            "fallback": self.fallback.to_dict(),
            "gate": self.gate, "t_star": self.t_star, "u_delta": self.u_delta,
            "rgl_bins": [None if np.isnan(v) else float(v) for v in self.rgl_bins],
            "rgl_total": self.rgl_total,
        }

    @classmethod
    def from_dict(cls, obj) -> "GlarMap":
        def arr(values):
            return np.array([np.nan if v is None else v for v in values], dtype=float)

        return cls(EqualMassBinning.from_dict(obj["binning"]),
                   [Tree.from_dict(t) for t in obj["trees"]],
                   [arr(m) for m in obj["region_means"]],
                   np.asarray(obj["active"], dtype=bool),
                   map_from_dict(obj["fallback"]),
                   float(obj["gate"]), float(obj["t_star"]), float(obj["u_delta"]),
                   arr(obj["rgl_bins"]), float(obj["rgl_total"]))


def glar_fit(ds_fit1, ds_fit2, b: EqualMassBinning, t_star: float, *,
             max_leaves: int = 5, gate: float = 0.02, u_delta: Optional[float] = None,
             min_leaf: int = MIN_LEAF) -> GlarMap:
    """Fit GLAR: regions on ``ds_fit1``, region means and gating on ``ds_fit2``.

    ``u_delta`` scales the grouping-regret estimate compared with ``gate``;
    it defaults to ``1 / t_star``, the scale of the ``[[1, 0], [0, 1/t* - 1]]``
    utility family. The isotonic fallback is fitted on both folds.
    """
    if u_delta is None:
        u_delta = 1.0 / t_star
    part = fit_partition(ds_fit1, b, max_leaves, min_leaf)
    gl = estimate_gl(ds_fit2, b, part)
    both = ds_fit1.concat(ds_fit2)
    fallback = isotonic_fit(both.scores, both.labels)
    nonempty = gl.mass > 0
    rgl = np.full(b.n_bins, np.nan)
    rgl[nonempty] = rgl_bin(gl.c_hat[nonempty], gl.gl_hat[nonempty], t_star, u_delta)
    total = float(np.sum(rgl[nonempty] * gl.mass[nonempty]) / gl.mass.sum())
    active = np.zeros(b.n_bins, dtype=bool)
    if total > gate:
        active[nonempty] = rgl[nonempty] > gate
    return GlarMap(b, part.trees, gl.region_means, active, fallback, float(gate),
                   float(t_star), float(u_delta), rgl, total)


def glar_apply(m: GlarMap, sample) -> float:
    feats = None if sample.features is None else np.asarray([sample.features], dtype=float)
    return float(m.predict(np.array([sample.score]), feats)[0])


def glat_threshold(m: GlarMap, sample, t_star: Optional[float] = None) -> float:
    """Per-sample threshold ``t* - (f_P(x) - f(x))`` on the raw score."""
    t = m.t_star if t_star is None else t_star
    return t - (glar_apply(m, sample) - sample.score)


def glat_decide(score: float, corrected: float, t_star: float) -> int:
    """``1{score >= t* - (corrected - score)}`` evaluated in exact arithmetic.

    Rounding the threshold to a float can flip decisions for cells whose
    corrected probability sits exactly on ``t*``; rational arithmetic keeps
    the rule identical to thresholding the corrected probability.
    """
    s, c, t = Fraction(score), Fraction(corrected), Fraction(t_star)
    return int(s >= t - (c - s))
