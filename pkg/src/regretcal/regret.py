"""Calibration regret, grouping-regret bounds and their plug-in estimates."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple

import numpy as np

from .errors import BinningMismatch


def v_min(c_hat, t_star):
    """Largest grouping loss compatible with zero grouping regret."""
    c = np.asarray(c_hat, dtype=float)
    out = np.where(c >= t_star, (1.0 - c) * (c - t_star), c * (t_star - c))
    return out if out.ndim else float(out)


def v_max(c_hat):
    c = np.asarray(c_hat, dtype=float)
    out = c * (1.0 - c)
    return out if out.ndim else float(out)


def rcl_bin(c_hat, score_decision, t_star, u_delta):
    """``u_delta * |c - t*|`` where the score's decision disagrees with ``1{c >= t*}``."""
    c = np.asarray(c_hat, dtype=float)
    disagree = (c >= t_star).astype(int) != np.asarray(score_decision).astype(int)
    out = np.where(disagree, u_delta * np.abs(c - t_star), 0.0)
    return out if out.ndim else float(out)


def lgl_bin(c_hat, gl_hat, t_star, u_delta):
    out = u_delta * np.maximum(np.asarray(gl_hat, dtype=float) - v_min(c_hat, t_star), 0.0)
    return out if np.ndim(out) else float(out)


def ugl_bin(c_hat, gl_hat, t_star, u_delta):
    a = np.abs(np.asarray(c_hat, dtype=float) - t_star)
    gl = np.maximum(np.asarray(gl_hat, dtype=float), 0.0)
    # sqrt(gl + a^2) - a, rewritten to avoid cancellation for small gl
    denom = np.sqrt(gl + a * a) + a
    out = np.where(denom > 0, 0.5 * u_delta * gl / np.where(denom > 0, denom, 1.0), 0.0)
    return out if np.ndim(out) else float(out)


def rgl_bin(c_hat, gl_hat, t_star, u_delta):
    """Midpoint of the grouping-regret bounds."""
    return 0.5 * (lgl_bin(c_hat, gl_hat, t_star, u_delta) + ugl_bin(c_hat, gl_hat, t_star, u_delta))


@dataclass(frozen=True)
class BinRegret:
    bin: int
    lo: float
    hi: float
    mass: int
    mass_fraction: float
    mean_score: float
    c_hat: float
    gl_hat: float
    v_min: float
    v_max: float
    rcl_hat: float
    lgl_hat: float
    ugl_hat: float
    rgl_hat: float
    r_hat: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and np.isnan(v) else v)
                for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class RegretReport:
    bins: List[BinRegret]
    rcl_hat: float
    lgl_hat: float
    ugl_hat: float
    rgl_hat: float
    r_hat: float
    t_star: float
    threshold: float
    u_delta: float
    n: int
    gl_available: bool = True

    def to_dict(self) -> dict:
        return {
            "t_star": self.t_star, "threshold": self.threshold, "u_delta": self.u_delta,
            "n": self.n, "gl_available": self.gl_available,
            "rcl_hat": self.rcl_hat, "lgl_hat": self.lgl_hat, "ugl_hat": self.ugl_hat,
            "rgl_hat": self.rgl_hat, "r_hat": self.r_hat,
            "bins": [b.to_dict() for b in self.bins],
        }


def regret_report(ds_eval, gl, curve, u, t=None) -> RegretReport:
    """Plug-in regret estimates per bin and their mass-weighted totals.

    Inside a bin the calibration-regret term averages each sample's own
    disagreement ``1{s_i >= t} != 1{c_hat >= t*}``, which matters when a bin
    straddles ``t``. ``curve`` must come from ``ds_eval``.
    """
    if not gl.binning.same_as(curve.binning):
        raise BinningMismatch("grouping-loss estimate and calibration curve use different bins")
    t_star, u_delta = u.t_star, u.u_delta
    t = t_star if t is None else float(t)
    b = curve.binning
    bins = b.assign(ds_eval.scores)
    if np.bincount(bins, minlength=b.n_bins).tolist() != curve.mass.tolist():
        raise BinningMismatch("calibration curve was not estimated on ds_eval")
    c = curve.mean_label
    n = int(curve.mass.sum())
    rows = []
    tot = dict(rcl=0.0, lgl=0.0, ugl=0.0, rgl=0.0)
    for k in range(b.n_bins):
        m = int(curve.mass[k])
        if m == 0:
            rows.append(BinRegret(k, float(b.edges[k]), float(b.edges[k + 1]), 0, 0.0,
                                  *([float("nan")] * 10)))
            continue
        ck = float(c[k])
        glk = float(gl.gl_hat[k]) if not np.isnan(gl.gl_hat[k]) else 0.0
        dec = ds_eval.scores[bins == k] >= t
        rcl = float(np.mean(rcl_bin(ck, dec, t_star, u_delta)))
        lgl = lgl_bin(ck, glk, t_star, u_delta)
        ugl = ugl_bin(ck, glk, t_star, u_delta)
        rgl = 0.5 * (lgl + ugl)
        frac = m / n
        rows.append(BinRegret(k, float(b.edges[k]), float(b.edges[k + 1]), m, frac,
                              float(curve.mean_score[k]), ck, glk, v_min(ck, t_star),
                              v_max(ck), rcl, lgl, ugl, rgl, rcl + rgl))
        tot["rcl"] += frac * rcl
        tot["lgl"] += frac * lgl
        tot["ugl"] += frac * ugl
        tot["rgl"] += frac * rgl
    return RegretReport(rows, tot["rcl"], tot["lgl"], tot["ugl"], tot["rgl"],
                        tot["rcl"] + tot["rgl"], t_star, t, u_delta, n,
                        bool(getattr(gl, "available", True)))


REGRET_COLUMNS = ["t_star", "gl_hat", "v_min", "v_max", "rcl_hat", "lgl_hat",
                  "ugl_hat", "rgl_hat", "r_hat"]


def write_regret_csv(reports, path) -> None:
    """Long-format per-bin table, one row per (t*, bin)."""
    cols = ["bin", "lo", "hi", "mass", "mean_score", "mean_label"] + REGRET_COLUMNS
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rep in reports:
            for b in rep.bins:
                vals = [b.bin, b.lo, b.hi, b.mass, b.mean_score, b.c_hat, rep.t_star,
                        b.gl_hat, b.v_min, b.v_max, b.rcl_hat, b.lgl_hat, b.ugl_hat,
                        b.rgl_hat, b.r_hat]
                writer.writerow(["" if isinstance(v, float) and np.isnan(v)
                                 else repr(v) if isinstance(v, float) else v for v in vals])


def zero_rcl_all_t_check(curve, tol: float = 1e-12) -> np.ndarray:
    """Per nonempty bin: is ``c_hat == mean score`` (no t* yields calibration regret)?

    Empty bins report True.
    """
    gap = np.abs(curve.mean_label - curve.mean_score)
    return np.where(curve.mass > 0, gap <= tol, True)


class Verdict(str, enum.Enum):
    NOT_SUBOPTIMAL = "not_suboptimal"
    RECALIBRATE = "recalibrate"
    ADVANCED_POST_TRAINING = "advanced_post_training"


class Advice(NamedTuple):
    verdict: Verdict
    rationale: str
    r_hat: float
    rcl_hat: float
    rgl_hat: float
    gate: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "rationale": self.rationale,
                "r_hat": self.r_hat, "rcl_hat": self.rcl_hat, "rgl_hat": self.rgl_hat,
                "gate": self.gate}


def advise(report: RegretReport, gate: float = 0.02) -> Advice:
    r, rcl, rgl = report.r_hat, report.rcl_hat, report.rgl_hat
    if r <= gate:
        verdict = Verdict.NOT_SUBOPTIMAL
        why = f"estimated regret {r:.4g} <= gate {gate:g}"
    elif rgl <= gate:
        verdict = Verdict.RECALIBRATE
        why = (f"estimated regret {r:.4g} > gate {gate:g}, grouping part {rgl:.4g} <= gate: "
               "mostly miscalibration")
    else:
        verdict = Verdict.ADVANCED_POST_TRAINING
        why = f"grouping regret {rgl:.4g} > gate {gate:g}: recalibration alone cannot remove it"
    return Advice(verdict, why, r, rcl, rgl, gate)
