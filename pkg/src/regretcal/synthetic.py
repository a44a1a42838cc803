"""Finite discrete joint distributions with known true probabilities.

An oracle is a list of atoms ``(mass, f*, f, x)``: the atom is drawn with
probability ``mass``, its label is Bernoulli(``f*``), the classifier outputs
``f`` and the feature is the integer tag ``x``. Every population quantity
(calibration curve, grouping loss, regrets, expected utilities) is a finite
weighted sum over atoms, so it can be computed exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dataset import ScoredDataset
from .decision import UtilityMatrix, pointwise_eu_exact
from .errors import InadmissibleSpec, TooManyLevels, UnsupportedThreshold

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OracleDistribution:
    z: np.ndarray
    fstar: np.ndarray
    f: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if not (self.z.shape == self.fstar.shape == self.f.shape == self.x.shape):
            raise InadmissibleSpec("atom arrays must have equal length")
        if self.z.size == 0:
            raise InadmissibleSpec("an oracle needs at least one atom")
        if np.any(self.z < 0) or abs(float(self.z.sum()) - 1.0) > MASS_TOL:
            raise InadmissibleSpec(f"atom masses must be nonnegative and sum to 1 (sum={self.z.sum()!r})")
        for name in ("fstar", "f"):
            v = getattr(self, name)
            if np.any((v < 0) | (v > 1)):
                raise InadmissibleSpec(f"{name} values must lie in [0, 1]")

    @classmethod
    def from_atoms(cls, z, fstar, f, x=None) -> "OracleDistribution":
        z = np.asarray(z, dtype=float)
        x = np.arange(z.size) if x is None else np.asarray(x)
        return cls(z, np.asarray(fstar, dtype=float), np.asarray(f, dtype=float),
                   np.asarray(x, dtype=np.int64))

    @property
    def levels(self) -> np.ndarray:
        return np.unique(self.f)

    def level_index(self) -> np.ndarray:
        return np.unique(self.f, return_inverse=True)[1].reshape(-1)

    def to_dict(self) -> dict:
        return {"atoms": [{"z": float(a), "fstar": float(b), "f": float(c), "x": int(d)}
                          for a, b, c, d in zip(self.z, self.fstar, self.f, self.x)]}

    @classmethod
    def from_dict(cls, obj) -> "OracleDistribution":
        atoms = obj["atoms"]
        return cls.from_atoms([a["z"] for a in atoms], [a["fstar"] for a in atoms],
                              [a["f"] for a in atoms],
                              [a.get("x", i) for i, a in enumerate(atoms)])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- exact population quantities ---------------------------------------------

def _group(keys):
    _, inv = np.unique(keys, return_inverse=True)
    return inv.reshape(-1)


def conditional_mean(o: OracleDistribution, values, groups) -> np.ndarray:
    """Per atom: mass-weighted mean of ``values`` over atoms sharing its group."""
    g = _group(groups)
    mass = np.bincount(g, weights=o.z)
    num = np.bincount(g, weights=o.z * np.asarray(values, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = num / mass
    return means[g]


def exact_gl(o: OracleDistribution, scores) -> float:
    """``E[Var(f* | score)]`` for any per-atom score vector."""
    c = conditional_mean(o, o.fstar, scores)
    return float(np.sum(o.z * (o.fstar - c) ** 2))


def exact_eu(o: OracleDistribution, u: UtilityMatrix, decisions) -> float:
    return float(np.sum(o.z * pointwise_eu_exact(o.fstar, u, np.asarray(decisions))))


def recalibrated_scores(o: OracleDistribution) -> np.ndarray:
    """``c(f(x))`` per atom."""
    return conditional_mean(o, o.fstar, o.f)


def glar_scores(o: OracleDistribution, regions) -> np.ndarray:
    """Exact GLAR output ``E[Y | f(X), region(X)]`` per atom."""
    keys = np.stack([_group(o.f), _group(regions)], axis=1)
    cell = np.unique(keys, axis=0, return_inverse=True)[1].reshape(-1)
    return conditional_mean(o, o.fstar, cell)


def calibration_gap(o: OracleDistribution, scores) -> float:
    """``max_v |E[f* | score = v] - v|`` over levels with positive mass."""
    scores = np.asarray(scores, dtype=float)
    c = conditional_mean(o, o.fstar, scores)
    live = o.z > 0
    return float(np.max(np.abs(c[live] - scores[live]))) if live.any() else 0.0


class OracleBinStats(NamedTuple):
    p: np.ndarray
    mass: np.ndarray
    c: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray
    w: np.ndarray
    gl: np.ndarray


def exact_stats(o: OracleDistribution, t_star: float) -> OracleBinStats:
    """Per score level: mean, split means around ``t_star``, weight above, variance."""
    levels, g = np.unique(o.f, return_inverse=True)
    g = g.reshape(-1)
    k = levels.size
    mass = np.bincount(g, weights=o.z, minlength=k)
    above = o.fstar >= t_star
    m_plus = np.bincount(g, weights=o.z * above, minlength=k)
    m_minus = mass - m_plus
    s_all = np.bincount(g, weights=o.z * o.fstar, minlength=k)
    s_plus = np.bincount(g, weights=o.z * o.fstar * above, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = s_all / mass
        c_plus = np.where(m_plus > 0, s_plus / m_plus, np.nan)
        c_minus = np.where(m_minus > 0, (s_all - s_plus) / m_minus, np.nan)
        w = m_plus / mass
        gl = np.bincount(g, weights=o.z * (o.fstar - c[g]) ** 2, minlength=k) / mass
    return OracleBinStats(levels, mass, c, c_plus, c_minus, w, gl)


class ExactRegrets(NamedTuple):
    p: np.ndarray
    mass: np.ndarray
    rcl: np.ndarray
    rgl: np.ndarray
    r: np.ndarray
    rcl_closed: np.ndarray
    rgl_closed: np.ndarray
    rgl_reformulated: np.ndarray
    eu_naive: float
    eu_recalibrated: float
    eu_oracle: float
    t: float
    t_star: float
    u_delta: float

    @property
    def rcl_total(self) -> float:
        return float(np.sum(self.mass * self.rcl))

    @property
    def rgl_total(self) -> float:
        return float(np.sum(self.mass * self.rgl))

    @property
    def r_total(self) -> float:
        return float(np.sum(self.mass * self.r))

    def to_dict(self) -> dict:
        def clean(a):
            return [None if np.isnan(v) else float(v) for v in np.asarray(a, dtype=float)]

        return {
            "t": self.t, "t_star": self.t_star, "u_delta": self.u_delta,
            "rcl": self.rcl_total, "rgl": self.rgl_total, "r": self.r_total,
            "eu_naive": self.eu_naive, "eu_recalibrated": self.eu_recalibrated,
            "eu_oracle": self.eu_oracle,
            "levels": {"p": clean(self.p), "mass": clean(self.mass), "rcl": clean(self.rcl),
                       "rgl": clean(self.rgl), "r": clean(self.r)},
        }


def exact_regrets(o: OracleDistribution, u: UtilityMatrix, t: float | None = None) -> ExactRegrets:
    """Exact conditional regrets of ``1{f >= t}`` per score level.

    ``rcl``, ``rgl`` and ``r`` are differences of exact conditional expected
    utilities. The ``*_closed`` and ``rgl_reformulated`` arrays are the
    closed forms, kept separate so they can be checked against the
    differences.
    """
    t_star, ud = u.t_star, u.u_delta
    t = t_star if t is None else float(t)
    st = exact_stats(o, t_star)
    g = np.unique(o.f, return_inverse=True)[1].reshape(-1)
    k = st.p.size
    c_atom = st.c[g]
    d_naive = (o.f >= t).astype(int)
    d_recal = (c_atom >= t_star).astype(int)
    d_oracle = (o.fstar >= t_star).astype(int)

    def cond_eu(d):
        return np.bincount(g, weights=o.z * pointwise_eu_exact(o.fstar, u, d), minlength=k) / st.mass

    eu_n, eu_c, eu_o = cond_eu(d_naive), cond_eu(d_recal), cond_eu(d_oracle)
    disagree = (st.c >= t_star) != (st.p >= t)
    rcl_closed = np.where(disagree, ud * np.abs(st.c - t_star), 0.0)
    rgl_closed = ud * np.bincount(
        g, weights=o.z * (d_oracle - d_recal) * (o.fstar - t_star), minlength=k) / st.mass
    inside = (st.w > 0) & (st.w < 1)
    with np.errstate(invalid="ignore"):
        reform = ud * (st.w * (st.c_plus - t_star) - (st.c >= t_star) * (st.c - t_star))
    rgl_reform = np.where(inside, reform, 0.0)
    return ExactRegrets(
        st.p, st.mass, eu_c - eu_n, eu_o - eu_c, eu_o - eu_n, rcl_closed, rgl_closed, rgl_reform,
        float(np.sum(st.mass * eu_n)), float(np.sum(st.mass * eu_c)),
        float(np.sum(st.mass * eu_o)), t, t_star, ud)


# -- tightness constructions -------------------------------------------------

class TightnessSpec(NamedTuple):
    c: float
    v: float
    t: float
    bound: str = "lower"

    def check(self):
        c, v, t = self.c, self.v, self.t
        if not 0.0 <= c <= 1.0:
            raise InadmissibleSpec(f"mean c = {c} must lie in [0, 1]")
        if not 0.0 < t < 1.0:
            raise InadmissibleSpec(f"threshold t = {t} must lie in (0, 1)")
        if v < 0 or v > c * (1.0 - c) + 1e-15:
            raise InadmissibleSpec(
                f"variance v = {v} is not admissible for mean {c}: need 0 <= v <= c(1-c) = {c * (1 - c)}")
        if self.bound not in ("lower", "upper"):
            raise InadmissibleSpec(f"bound must be 'lower' or 'upper', got {self.bound!r}")


def _oracle_from_weights(values, weights, score):
    weights = np.where(np.abs(weights) < 1e-15, 0.0, np.asarray(weights, dtype=float))
    if np.any(weights < 0):
        raise InadmissibleSpec(f"construction produced negative weights {weights}")
    keep = weights > 0
    z = weights[keep] / weights[keep].sum()
    fstar = np.clip(np.asarray(values, dtype=float)[keep], 0.0, 1.0)
    return OracleDistribution.from_atoms(z, fstar, np.full(z.size, score),
                                         np.flatnonzero(keep))


def lower_tight_case(c, v, t) -> int:
    vmin = c * (t - c) if c < t else (1.0 - c) * (c - t)
    if v < vmin:
        return 1 if c < t else 2
    return 3 if c < t else 4


def build_lb_tight(spec: TightnessSpec, score: float | None = None) -> OracleDistribution:
    """Single-level oracle with mean ``c``, variance ``v`` and grouping regret at the lower bound.

    Atoms sit on {0, c, t} or {t, c, 1} when ``v`` is below the zero-regret
    variance, and on {0, t, 1} otherwise.
    """
    spec.check()
    if spec.bound != "lower":
        raise InadmissibleSpec("build_lb_tight needs a lower-bound spec")
    c, v, t = spec.c, min(spec.v, spec.c * (1.0 - spec.c)), spec.t
    vmin = c * (t - c) if c < t else (1.0 - c) * (c - t)
    case = lower_tight_case(c, v, t)
    if case == 1:
        wc = 1.0 - v / vmin
        wt = (c / t) * (v / vmin)
        values, weights = [0.0, c, t], [1.0 - wc - wt, wc, wt]
    elif case == 2:
        wc = 1.0 - v / vmin
        w1 = (c - t) / (1.0 - t) * (v / vmin)
        values, weights = [t, c, 1.0], [1.0 - wc - w1, wc, w1]
    elif case == 3:
        w1 = (v - vmin) / (1.0 - t)
        wt = (c - w1) / t
        values, weights = [0.0, t, 1.0], [1.0 - wt - w1, wt, w1]
    else:
        w0 = (v - vmin) / t
        wt = (1.0 - c - w0) / (1.0 - t)
        values, weights = [0.0, t, 1.0], [w0, wt, 1.0 - wt - w0]
    return _oracle_from_weights(values, weights, c if score is None else score)


def build_ub_tight(spec: TightnessSpec, score: float | None = None) -> OracleDistribution:
    """Two-point oracle whose grouping regret equals the upper bound (``t = 1/2`` only).

    The atom on the far side of the threshold from ``c`` carries weight
    ``w = (1 - |a| / sqrt(a^2 + v)) / 2`` with ``a = c - t``.
    """
    spec.check()
    if spec.bound != "upper":
        raise InadmissibleSpec("build_ub_tight needs an upper-bound spec")
    if spec.t != 0.5:
        raise UnsupportedThreshold(f"upper-bound tightness is only constructed for t = 1/2, got {spec.t}")
    c, v, t = spec.c, min(spec.v, spec.c * (1.0 - spec.c)), spec.t
    score = c if score is None else score
    a = c - t
    if v == 0.0:
        return _oracle_from_weights([c], [1.0], score)
    w = 0.5 * (1.0 - abs(a) / math.sqrt(a * a + v))
    near = math.sqrt(v * w / (1.0 - w))
    far = math.sqrt(v * (1.0 - w) / w)
    if c < t:
        values, weights = [c - near, c + far], [1.0 - w, w]
    else:
        values, weights = [c - far, c + near], [w, 1.0 - w]
    return _oracle_from_weights(values, weights, score)


# -- brute force ---------------------------------------------------------------

class BestRule(NamedTuple):
    eu: float
    decisions: np.ndarray
    levels: np.ndarray


def brute_force_best_rule(o: OracleDistribution, u: UtilityMatrix, max_levels: int = 20) -> BestRule:
    """Best expected utility over every map from score levels to {0, 1}."""
    levels, g = np.unique(o.f, return_inverse=True)
    g = g.reshape(-1)
    k = levels.size
    if k > max_levels:
        raise TooManyLevels(f"{k} score levels exceed the enumeration limit {max_levels}")
    a0 = np.bincount(g, weights=o.z * pointwise_eu_exact(o.fstar, u, 0), minlength=k)
    a1 = np.bincount(g, weights=o.z * pointwise_eu_exact(o.fstar, u, 1), minlength=k)
    base, gain = float(a0.sum()), a1 - a0
    best_eu, best_mask = -np.inf, 0
    bits = np.arange(k, dtype=np.int64)
    chunk = 1 << 16
    for start in range(0, 1 << k, chunk):
        masks = np.arange(start, min(start + chunk, 1 << k), dtype=np.int64)
        decisions = (masks[:, None] >> bits) & 1
        eus = base + decisions @ gain
        i = int(np.argmax(eus))
        if eus[i] > best_eu:
            best_eu, best_mask = float(eus[i]), int(masks[i])
    return BestRule(best_eu, (best_mask >> bits) & 1, levels)


# -- generators and sampling -------------------------------------------------

def sample(o: OracleDistribution, n: int, seed: int = 0) -> ScoredDataset:
    """Draw ``n`` i.i.d. samples; the atom tag becomes a 1-D feature."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    atoms = rng.choice(o.z.size, size=n, p=o.z / o.z.sum())
    labels = (rng.random(n) < o.fstar[atoms]).astype(np.int8)
    return ScoredDataset.from_arrays(o.f[atoms], labels, o.x[atoms].astype(float).reshape(n, 1))


def random_oracle(seed: int, n_levels: int, atoms_per_level: int, *,
                  monotone: bool = False) -> OracleDistribution:
    """Random oracle with distinct score levels and random true probabilities.

    ``monotone=True`` orders the levels so the calibration curve is
    nondecreasing in the score.
    """
    if n_levels < 1 or atoms_per_level < 1:
        raise ValueError("n_levels and atoms_per_level must be at least 1")
    rng = np.random.default_rng(seed)
    level_mass = rng.dirichlet(np.ones(n_levels))
    scores = np.sort(rng.choice(np.arange(1, 1000), size=n_levels, replace=False) / 1000.0)
    fstar = rng.random((n_levels, atoms_per_level))
    within = rng.dirichlet(np.ones(atoms_per_level), size=n_levels)
    if monotone:
        c = np.sum(within * fstar, axis=1)
        order = np.argsort(c, kind="stable")
        fstar, within, level_mass = fstar[order], within[order], level_mass[order]
    z = (level_mass[:, None] * within).reshape(-1)
    z = z / z.sum()
    f = np.repeat(scores, atoms_per_level)
    return OracleDistribution.from_atoms(z, fstar.reshape(-1), f, np.arange(z.size))
