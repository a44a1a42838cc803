"""Utility matrices, threshold rules and expected utility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateUtility, EmptyDataset, ThresholdAtBoundary, ThresholdOutOfRange


@dataclass(frozen=True)
class UtilityMatrix:
    """Payoffs ``u[i][j]`` for deciding ``i`` when the outcome is ``j``."""

    u00: float
    u01: float
    u10: float
    u11: float

    def __post_init__(self):
        optimal_threshold(self)

    @classmethod
    def from_rows(cls, rows) -> "UtilityMatrix":
        (a, b), (c, d) = rows
        return cls(float(a), float(b), float(c), float(d))

    @classmethod
    def parse(cls, text: str) -> "UtilityMatrix":
        """Parse ``"u00,u01,u10,u11"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise DegenerateUtility(f"expected 4 comma-separated payoffs, got {text!r}")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError:
            raise DegenerateUtility(f"non-numeric payoff in {text!r}") from None

    @property
    def u_delta(self) -> float:
        return self.u00 - self.u10 + self.u11 - self.u01

    @property
    def t_star(self) -> float:
        return (self.u00 - self.u10) / self.u_delta

    def as_array(self) -> np.ndarray:
        return np.array([[self.u00, self.u01], [self.u10, self.u11]])

    def to_dict(self) -> dict:
        return {"u00": self.u00, "u01": self.u01, "u10": self.u10, "u11": self.u11,
                "u_delta": self.u_delta, "t_star": self.t_star}


def optimal_threshold(u: UtilityMatrix) -> float:
    u_delta = u.u00 - u.u10 + u.u11 - u.u01
    if not u_delta > 0:
        raise DegenerateUtility(f"u_delta = {u_delta} must be positive")
    t = (u.u00 - u.u10) / u_delta
    if not 0.0 <= t <= 1.0:
        raise ThresholdOutOfRange(f"optimal threshold {t} is outside [0, 1]")
    return t


def utility_matrix_from_tstar(t_star: float) -> UtilityMatrix:
    """The ``[[1, 0], [0, 1/t* - 1]]`` family whose optimal threshold is ``t_star``."""
    if not 0.0 < t_star < 1.0:
        raise ThresholdAtBoundary(f"t* = {t_star} must lie strictly inside (0, 1)")
    return UtilityMatrix(1.0, 0.0, 0.0, 1.0 / t_star - 1.0)


@dataclass(frozen=True)
class ThresholdRule:
    t: float

    def __post_init__(self):
        # values above 1 are allowed: they encode the constant-0 rule
        if not self.t >= 0.0:
            raise ThresholdOutOfRange(f"threshold {self.t} is invalid")

    def decide(self, scores):
        return decide(scores, self.t)


def decide(scores, t):
    """``1{score >= t}``; ``t`` may be a scalar or per-sample array."""
    return (np.asarray(scores) >= t).astype(np.int8)


def empirical_eu(ds, u: UtilityMatrix, rule) -> float:
    """Average realised payoff of ``rule`` over the samples of ``ds``.

    ``rule`` is a :class:`ThresholdRule`, a scalar threshold, or an array of
    precomputed 0/1 decisions.
    """
    if ds.n == 0:
        raise EmptyDataset()
    if isinstance(rule, ThresholdRule):
        d = rule.decide(ds.scores)
    elif np.ndim(rule) == 0:
        d = decide(ds.scores, float(rule))
    else:
        d = np.asarray(rule).astype(np.int8)
    payoff = u.as_array()[d, ds.labels]
    return float(np.mean(payoff))


def pointwise_eu_exact(true_prob, u: UtilityMatrix, decision):
    """Expected payoff of ``decision`` when ``P(Y=1|x) = true_prob``.

    Uses the threshold form ``U_delta * d * (f* - t*) + f* u01 + (1 - f*) u00``.
    """
    f = np.asarray(true_prob, dtype=float)
    d = np.asarray(decision)
    return u.u_delta * d * (f - u.t_star) + f * u.u01 + (1.0 - f) * u.u00


def pointwise_eu_direct(true_prob, u: UtilityMatrix, decision):
    f = np.asarray(true_prob, dtype=float)
    d = np.asarray(decision).astype(int)
    table = u.as_array()
    return f * table[d, 1] + (1.0 - f) * table[d, 0]
