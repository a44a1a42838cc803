"""Score-to-probability recalibration maps and threshold adjustment."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .binning import fit_equal_mass_bins
from .errors import (
    EmptyInput,
    IncompatibleMap,
    LengthMismatch,
    NoFeatures,
    NonConvergenceWarning,
    NotMonotone,
    SingleClass,
)

#: Returned by :func:`adjust_threshold` when the curve never reaches t*.
#: ``score >= NEVER`` is false for every score in [0, 1].
NEVER = math.nextafter(1.0, 2.0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _check_xy(scores, labels):
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    if s.shape[0] == 0:
        raise EmptyInput()
    return s, y


# -- step maps ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StepMap:
    """Right-continuous step function: ``values[i]`` on ``[knots[i], knots[i+1])``.

    Scores below the first knot take the first value.
    """

    knots: np.ndarray
    values: np.ndarray
    kind: str = "isotonic"

    def __call__(self, scores):
        s = np.asarray(scores, dtype=float)
        idx = np.searchsorted(self.knots, s, side="right") - 1
        return self.values[np.clip(idx, 0, self.values.shape[0] - 1)]

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "knots": self.knots.tolist(), "values": self.values.tolist()}


#: ``MonotoneStepMap`` is a :class:`StepMap` whose values are nondecreasing.
MonotoneStepMap = StepMap


def _pava(y, w):
    """Weighted pool-adjacent-violators for a nondecreasing fit."""
    n = y.shape[0]
    level = np.empty(n)
    weight = np.empty(n)
    size = np.empty(n, dtype=np.int64)
    top = -1
    for i in range(n):
        top += 1
        level[top], weight[top], size[top] = y[i], w[i], 1
        while top > 0 and level[top - 1] > level[top]:
            wsum = weight[top - 1] + weight[top]
            level[top - 1] = (level[top - 1] * weight[top - 1] + level[top] * weight[top]) / wsum
            weight[top - 1] = wsum
            size[top - 1] += size[top]
            top -= 1
    return np.repeat(level[: top + 1], size[: top + 1])


def isotonic_fit(scores, labels) -> StepMap:
    """Least-squares nondecreasing map from scores to labels.

    Tied scores are pooled first (a map must give them a single value), then
    PAVA runs on the distinct scores weighted by their multiplicity.
    """
    s, y = _check_xy(scores, labels)
    knots, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    means = np.bincount(inverse, weights=y) / counts
    values = np.clip(_pava(means, counts.astype(float)), 0.0, 1.0)
    return StepMap(knots, values, "isotonic")


def histogram_binning_fit(scores, labels, n_bins: int = 15) -> StepMap:
    s, y = _check_xy(scores, labels)
    b = fit_equal_mass_bins(s, n_bins)
    idx = b.assign(s)
    counts = np.bincount(idx, minlength=b.n_bins)
    sums = np.bincount(idx, weights=y, minlength=b.n_bins)
    keep = counts > 0
    knots = b.edges[:-1][keep]
    knots[0] = 0.0
    return StepMap(knots, sums[keep] / counts[keep], "histogram")


def adjust_threshold(curve: StepMap, t_star: float) -> float:
    """Smallest score at which a nondecreasing curve reaches ``t_star``.

    Thresholding raw scores there reproduces the decisions of the recalibrated
    scores at ``t_star``. Returns :data:`NEVER` (just above 1) if the curve
    stays below ``t_star``.
    """
    if not curve.monotone:
        raise NotMonotone("threshold adjustment needs a nondecreasing calibration curve")
    hits = np.flatnonzero(curve.values >= t_star)
    if hits.size == 0:
        return NEVER
    i = int(hits[0])
    if i == 0:
        return 0.0
    return float(curve.knots[i])


# -- Platt scaling -----------------------------------------------------------

@dataclass(frozen=True)
class SigmoidMap:
    slope: float
    intercept: float
    converged: bool = True
    iterations: int = 0

    def __call__(self, scores):
        return _sigmoid(self.slope * np.asarray(scores, dtype=float) + self.intercept)

    def to_dict(self) -> dict:
        return {"kind": "platt", "slope": self.slope, "intercept": self.intercept,
                "converged": self.converged, "iterations": self.iterations}


def _loglik(z, y):
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def _newton_logistic(X, y, penalty, max_iter=100, tol=1e-8, stop_on_grad=True):
    """Maximise the (optionally ridge-penalised) Bernoulli log-likelihood.

    ``penalty`` holds one ridge coefficient per column of ``X``. Steps are
    halved until the objective improves. ``tol`` bounds the gradient norm per
    sample, so the stopping rule does not tighten as ``n`` grows.
    """
    theta = np.zeros(X.shape[1])
    tol = tol * X.shape[0]

    def objective(th):
        return _loglik(X @ th, y) - 0.5 * float(np.sum(penalty * th * th))

    current = objective(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(X @ theta)
        grad = X.T @ (y - p) - penalty * theta
        if stop_on_grad and np.linalg.norm(grad) < tol:
            converged = True
            it -= 1
            break
        hess = (X * (p * (1.0 - p))[:, None]).T @ X + np.diag(penalty)
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        scale = 1.0
        for _ in range(60):
            cand = theta + scale * step
            value = objective(cand)
            if value >= current:
                break
            scale *= 0.5
        else:
            break
        theta, current = cand, value
    else:
        p = _sigmoid(X @ theta)
        grad = X.T @ (y - p) - penalty * theta
        converged = stop_on_grad and bool(np.linalg.norm(grad) < tol)
    return theta, converged, it


def _separable(s, y):
    # Constant scores carry no slope information; the fit is then flat, not divergent.
    if s.min() == s.max():
        return False
    s0, s1 = s[y == 0], s[y == 1]
    return s0.max() <= s1.min() or s1.max() <= s0.min()


def platt_fit(scores, labels, max_iter: int = 100) -> SigmoidMap:
    """Fit ``sigmoid(a * s + b)`` to raw {0, 1} targets by Newton's method.

    On linearly separable scores the likelihood has no maximiser; the slope
    then grows until the iteration cap and a :class:`NonConvergenceWarning`
    is issued with the last iterate returned.
    """
    s, y = _check_xy(scores, labels)
    if y.min() == y.max():
        raise SingleClass()
    separable = _separable(s, y)
    X = np.column_stack([s, np.ones_like(s)])
    theta, converged, it = _newton_logistic(
        X, y, np.zeros(2), max_iter=max_iter, stop_on_grad=not separable)
    if not converged:
        warnings.warn(
            f"Platt scaling did not converge in {max_iter} iterations"
            + (" (scores perfectly separate the labels)" if separable else ""),
            NonConvergenceWarning, stacklevel=2)
    return SigmoidMap(float(theta[0]), float(theta[1]), converged, it)


# -- logistic refit on features ----------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearLogitModel:
    weights: np.ndarray
    bias: float
    l2: float = 1.0
    converged: bool = True

    def predict(self, features):
        F = np.asarray(features, dtype=float)
        if F.ndim == 1:
            F = F.reshape(1, -1)
        if F.shape[1] != self.weights.shape[0]:
            raise IncompatibleMap(
                f"model expects {self.weights.shape[0]} features, got {F.shape[1]}")
        return _sigmoid(F @ self.weights + self.bias)

    def to_dict(self) -> dict:
        return {"kind": "linear", "weights": self.weights.tolist(), "bias": self.bias,
                "l2": self.l2, "converged": self.converged}


def logistic_refit(features, labels, l2: float = 1.0, max_iter: int = 100) -> LinearLogitModel:
    """L2-penalised logistic regression of labels on features.

    The intercept is not penalised. Objective: log-likelihood minus
    ``l2 / 2 * ||w||^2``.
    """
    F = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if F.ndim != 2 or F.shape[1] == 0:
        raise NoFeatures()
    if F.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{F.shape[0]} feature rows vs {y.shape[0]} labels")
    if y.shape[0] == 0:
        raise EmptyInput()
    if y.min() == y.max():
        raise SingleClass()
    X = np.column_stack([F, np.ones(F.shape[0])])
    penalty = np.r_[np.full(F.shape[1], float(l2)), 0.0]
    theta, converged, _ = _newton_logistic(X, y, penalty, max_iter=max_iter)
    if not converged:
        warnings.warn("logistic refit did not converge", NonConvergenceWarning, stacklevel=2)
    return LinearLogitModel(theta[:-1].copy(), float(theta[-1]), float(l2), converged)


# -- application and serialisation -------------------------------------------

def predict(fitted, ds) -> np.ndarray:
    """Corrected probabilities for every sample of ``ds``."""
    if isinstance(fitted, (StepMap, SigmoidMap)):
        out = fitted(ds.scores)
    elif isinstance(fitted, LinearLogitModel):
        if ds.feature_dim == 0:
            raise IncompatibleMap("a linear logit model needs a dataset with features")
        out = fitted.predict(ds.features)
    elif hasattr(fitted, "predict_dataset"):
        out = fitted.predict_dataset(ds)
    else:
        raise IncompatibleMap(f"cannot apply {type(fitted).__name__}")
    return np.clip(np.asarray(out, dtype=float), 0.0, 1.0)


def apply(fitted, ds):
    """Copy of ``ds`` with scores replaced by the map's output."""
    return ds.with_scores(predict(fitted, ds))


def map_to_dict(fitted) -> dict:
    return fitted.to_dict()


def map_from_dict(obj: dict):
    kind = obj.get("kind")
    if kind in ("isotonic", "histogram"):
        return StepMap(np.asarray(obj["knots"], dtype=float),
                       np.asarray(obj["values"], dtype=float), kind)
    if kind == "platt":
        return SigmoidMap(float(obj["slope"]), float(obj["intercept"]),
                          bool(obj.get("converged", True)), int(obj.get("iterations", 0)))
    if kind == "linear":
        return LinearLogitModel(np.asarray(obj["weights"], dtype=float), float(obj["bias"]),
                                float(obj.get("l2", 1.0)), bool(obj.get("converged", True)))
    if kind == "glar":
        from .grouping import GlarMap
        return GlarMap.from_dict(obj)
    raise IncompatibleMap(f"unknown map kind {kind!r}")
