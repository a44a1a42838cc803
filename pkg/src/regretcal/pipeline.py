"""End-to-end runs behind the command-line interface.

Everything here is deterministic given the configuration and seed: splits
come from seeded generators and parallel sweeps reassemble their results in
submission order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .binning import CalibrationCurveEstimate, EqualMassBinning, estimate_calibration_curve, fit_equal_mass_bins
from .dataset import Schema, ScoredDataset, SplitSpec, split
from .decision import UtilityMatrix, empirical_eu, utility_matrix_from_tstar
from .errors import ConfigError, InadmissibleSpec, NoFeatures
from .grouping import GroupingLossEstimate, estimate_gl, fit_partition, glar_fit
from .metrics import MetricsReport, baseline_metrics
from .recalibration import (
    adjust_threshold,
    histogram_binning_fit,
    isotonic_fit,
    logistic_refit,
    platt_fit,
    predict,
)
from .regret import RegretReport, regret_report
from .synthetic import (
    OracleDistribution,
    TightnessSpec,
    build_lb_tight,
    build_ub_tight,
    exact_regrets,
    random_oracle,
    sample,
)

SCHEMA_VERSION = 1
TSTAR_GRID = (0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99)
METHODS = ("isotonic", "platt", "histogram", "threshold", "glar", "logistic")


@dataclass(frozen=True)
class RunConfig:
    """Validated settings shared by every command."""

    input: Optional[str] = None
    split: SplitSpec = SplitSpec()
    bins: int = 15
    max_leaves: int = 5
    gate: float = 0.02
    tstars: tuple = TSTAR_GRID
    utility: Optional[UtilityMatrix] = None
    out: str = "."
    seed: int = 0
    schema: Schema = Schema()

    def validate(self) -> "RunConfig":
        if self.bins < 1:
            raise ConfigError(f"--bins must be positive, got {self.bins}")
        if self.max_leaves < 1:
            raise ConfigError(f"--max-leaves must be positive, got {self.max_leaves}")
        if not (self.gate >= 0.0 and math.isfinite(self.gate)):
            raise ConfigError(f"--glar-gate must be a nonnegative number, got {self.gate}")
        if self.utility is None:
            if not self.tstars:
                raise ConfigError("at least one t* is required")
            for t in self.tstars:
                utility_matrix_from_tstar(t)
        self.split.validate()
        return self

    def utilities(self) -> List[UtilityMatrix]:
        if self.utility is not None:
            return [self.utility]
        return [utility_matrix_from_tstar(t) for t in self.tstars]

    def to_dict(self) -> dict:
        return {
            "input": self.input,
            "split": {"fractions": list(self.split.fractions), "seed": self.split.seed,
                      "honest": self.split.honest},
            "bins": self.bins, "max_leaves": self.max_leaves, "glar_gate": self.gate,
            "tstar": None if self.utility is not None else list(self.tstars),
            "utility": None if self.utility is None else self.utility.to_dict(),
            "out": self.out, "seed": self.seed,
            "schema": self.schema._asdict(),
        }


# -- assessment ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Assessment:
    """Binning, calibration curve and grouping-loss estimate of one dataset.

    With features, the partition is grown on one half and the curve, grouping
    loss and regret are estimated on the other (``eval_ds``). Without features
    the curve uses all samples and the grouping loss is reported unavailable.
    """

    binning: EqualMassBinning
    curve: CalibrationCurveEstimate
    gl: GroupingLossEstimate
    eval_ds: ScoredDataset

    def report(self, u: UtilityMatrix, t: Optional[float] = None) -> RegretReport:
        return regret_report(self.eval_ds, self.gl, self.curve, u, t)

    def metrics(self) -> MetricsReport:
        return baseline_metrics(self.eval_ds, self.binning)


def assess(ds: ScoredDataset, *, bins: int = 15, max_leaves: int = 5,
           seed: int = 0) -> Assessment:
    b = fit_equal_mass_bins(ds.scores, bins)
    if ds.feature_dim == 0:
        curve = estimate_calibration_curve(ds, b)
        return Assessment(b, curve, GroupingLossEstimate.unavailable(curve), ds)
    fold1, fold2 = split(ds, SplitSpec((0.5, 0.5), seed))
    part = fit_partition(fold1, b, max_leaves)
    gl = estimate_gl(fold2, b, part)
    return Assessment(b, estimate_calibration_curve(fold2, b), gl, fold2)


def report_payload(ds: ScoredDataset, cfg: RunConfig) -> dict:
    a = assess(ds, bins=cfg.bins, max_leaves=cfg.max_leaves, seed=cfg.seed)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "n": ds.n,
        "n_eval": a.eval_ds.n,
        "gl_available": a.gl.available,
        "binning": a.binning.to_dict(),
        "baseline_metrics": a.metrics().to_dict(),
        "reports": [a.report(u).to_dict() | {"utility": u.to_dict()} for u in cfg.utilities()],
    }, a


# -- post-training -------------------------------------------------------------

def _stacked(ds: ScoredDataset) -> np.ndarray:
    """Logistic-refit design: logit of the score next to the features."""
    s = np.clip(ds.scores, 1e-6, 1 - 1e-6)
    return np.column_stack([np.log(s / (1 - s)), ds.features])


@dataclass(frozen=True, eq=False)
class MethodResult:
    t_star: float
    u_delta: float
    eu_before: float
    eu_after: float
    corrected: np.ndarray
    decisions: np.ndarray
    threshold: float

    @property
    def gain(self) -> float:
        return self.eu_after - self.eu_before


def fit_and_apply(method: str, train: ScoredDataset, test: ScoredDataset,
                  utilities: Sequence[UtilityMatrix], *, bins: int = 15, max_leaves: int = 5,
                  gate: float = 0.02, seed: int = 0) -> List[MethodResult]:
    """Fit ``method`` on ``train`` and score its utility gain on ``test``."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in ("glar", "logistic") and train.feature_dim == 0:
        raise NoFeatures(f"method {method} needs feature columns")
    shared = None
    if method == "isotonic" or method == "threshold":
        shared = isotonic_fit(train.scores, train.labels)
    elif method == "platt":
        shared = platt_fit(train.scores, train.labels)
    elif method == "histogram":
        shared = histogram_binning_fit(train.scores, train.labels, bins)
    elif method == "logistic":
        model = logistic_refit(_stacked(train), train.labels)
        corrected_all = np.clip(model.predict(_stacked(test)), 0.0, 1.0)
    if method == "glar":
        fit1, fit2 = split(train, SplitSpec((0.5, 0.5), seed))
        glar_bins = fit_equal_mass_bins(train.scores, bins)

    results = []
    for u in utilities:
        t_star = u.t_star
        threshold = t_star
        if method == "threshold":
            corrected = test.scores.copy()
            threshold = adjust_threshold(shared, t_star)
            decisions = (test.scores >= threshold).astype(np.int8)
        else:
            if method == "logistic":
                corrected = corrected_all
            elif method == "glar":
                m = glar_fit(fit1, fit2, glar_bins, t_star, max_leaves=max_leaves,
                             gate=gate, u_delta=u.u_delta)
                corrected = predict(m, test)
            else:
                corrected = predict(shared, test)
            decisions = (corrected >= t_star).astype(np.int8)
        results.append(MethodResult(
            t_star, u.u_delta, empirical_eu(test, u, t_star), empirical_eu(test, u, decisions),
            corrected, decisions, float(threshold)))
    return results


def posttrain(ds: ScoredDataset, cfg: RunConfig, method: str):
    """Train on one half, compare regret and utility before and after on the other.

    Returns ``(payload, test, results)``: the JSON summary, the held-out half
    and the per-t* :class:`MethodResult` list.
    """
    train, test = split(ds, SplitSpec((0.5, 0.5), cfg.seed))
    utilities = cfg.utilities()
    results = fit_and_apply(method, train, test, utilities, bins=cfg.bins,
                            max_leaves=cfg.max_leaves, gate=cfg.gate, seed=cfg.seed)
    before = assess(test, bins=cfg.bins, max_leaves=cfg.max_leaves, seed=cfg.seed)
    entries = []
    for u, res in zip(utilities, results):
        if method == "threshold":
            after_report = before.report(u, res.threshold)
        else:
            after = assess(test.with_scores(res.corrected), bins=cfg.bins,
                           max_leaves=cfg.max_leaves, seed=cfg.seed)
            after_report = after.report(u)
        entries.append({
            "t_star": res.t_star, "u_delta": res.u_delta, "threshold": res.threshold,
            "eu_before": res.eu_before, "eu_after": res.eu_after, "gain": res.gain,
            "before": before.report(u).to_dict(), "after": after_report.to_dict(),
        })
    return {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "method": method,
            "n_train": train.n, "n_test": test.n, "results": entries}, test, results


# -- simulation ----------------------------------------------------------------

def unit_utility(t_star: float) -> UtilityMatrix:
    """``[[t*, 0], [0, 1 - t*]]``: threshold ``t*`` with ``u_delta = 1``."""
    return UtilityMatrix(float(t_star), 0.0, 0.0, 1.0 - float(t_star))


def oracle_from_spec(spec: dict):
    """Oracle and utility described by a simulate spec.

    Kinds: ``lower_tight`` / ``upper_tight`` (keys c, v, t, optional score),
    ``random`` (n_levels, atoms_per_level, seed, monotone) and ``atoms``
    (an explicit atom list). ``utility`` ([u00, u01, u10, u11]) or ``t_star``
    select the utility; tight specs default to ``u_delta = 1`` at their t.
    """
    if not isinstance(spec, dict):
        raise InadmissibleSpec("a simulate spec must be a JSON object")
    kind = spec.get("kind")
    t_default = 0.5
    try:
        if kind in ("lower_tight", "upper_tight"):
            ts = TightnessSpec(float(spec["c"]), float(spec["v"]), float(spec["t"]),
                               "lower" if kind == "lower_tight" else "upper")
            builder = build_lb_tight if kind == "lower_tight" else build_ub_tight
            o = builder(ts, spec.get("score"))
            t_default = ts.t
        elif kind == "random":
            o = random_oracle(int(spec.get("seed", 0)), int(spec.get("n_levels", 5)),
                              int(spec.get("atoms_per_level", 2)),
                              monotone=bool(spec.get("monotone", False)))
        elif kind == "atoms":
            o = OracleDistribution.from_dict(spec)
        else:
            raise InadmissibleSpec(f"unknown simulate spec kind {kind!r}")
    except KeyError as exc:
        raise InadmissibleSpec(f"simulate spec is missing key {exc.args[0]!r}") from None
    if "utility" in spec:
        u = UtilityMatrix(*[float(v) for v in spec["utility"]])
    else:
        u = unit_utility(float(spec.get("t_star", t_default)))
    return o, u


def simulate(spec: dict, n: int, seed: int):
    o, u = oracle_from_spec(spec)
    exact = exact_regrets(o, u)
    ds = sample(o, n, seed)
    payload = {"schema_version": SCHEMA_VERSION, "spec": spec, "n": n, "seed": seed,
               "utility": u.to_dict(), "exact": exact.to_dict()}
    return ds, o, payload


# -- sweep ---------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def suite_oracle(seed: int, n_levels: int = 30, *, max_slope_log: float = 1.1,
                 max_shift: float = 1.0, max_group: float = 1.5) -> OracleDistribution:
    """Score levels with injected miscalibration and a binary hidden group.

    ``f* = sigmoid(a * logit(p) + b + beta * (2g - 1))`` with random ``a``,
    ``b`` and ``beta``; the group bit ``g`` is the atom's feature.
    """
    rng = np.random.default_rng(seed)
    a = math.exp(rng.uniform(-max_slope_log, max_slope_log))
    b = rng.uniform(-max_shift, max_shift)
    beta = rng.uniform(0.0, max_group) if rng.random() < 0.7 else 0.0
    p = (np.arange(n_levels) + 0.5) / n_levels
    logit = np.log(p / (1 - p))
    level_mass = rng.dirichlet(np.full(n_levels, 5.0))
    g = np.tile([0, 1], n_levels)
    f = np.repeat(p, 2)
    fstar = _sigmoid(np.repeat(a * logit + b, 2) + beta * (2 * g - 1))
    z = np.repeat(level_mass / 2.0, 2)
    return OracleDistribution.from_atoms(z / z.sum(), fstar, f, g)


SUITE_ESTIMATORS = ("rcl_hat", "rgl_hat", "r_hat", "ece", "brier", "cl")
SUITE_METHODS = ("isotonic", "glar", "logistic")


def expand_suite(suite: dict) -> List[dict]:
    """List of run descriptions from a suite spec.

    Either ``runs`` (explicit list of ``{seed, t_star}``) or ``n_runs`` with a
    base ``seed`` and a ``t_star`` pool cycled through in order.
    """
    if not isinstance(suite, dict):
        raise ConfigError("a sweep suite must be a JSON object")
    n = int(suite.get("n", 20000))
    if n < 8:
        raise ConfigError("suite sample size n must be at least 8")
    if "runs" in suite:
        runs = [dict(r) for r in suite["runs"]]
    else:
        k = int(suite.get("n_runs", 0))
        pool = list(suite.get("t_star", [0.1, 0.25, 0.5, 0.75, 0.9]))
        if k and not pool:
            raise ConfigError("suite t_star pool is empty")
        base = int(suite.get("seed", 0))
        runs = [{"seed": base + i, "t_star": pool[i % len(pool)]} for i in range(k)]
    if not runs:
        raise ConfigError("sweep suite contains no runs")
    methods = tuple(suite.get("methods", SUITE_METHODS))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r} in suite")
    out = []
    for i, r in enumerate(runs):
        if "seed" not in r or "t_star" not in r:
            raise ConfigError(f"suite run {i} needs seed and t_star")
        utility_matrix_from_tstar(float(r["t_star"]))
        out.append({"run": i, "seed": int(r["seed"]), "t_star": float(r["t_star"]),
                    "n": int(r.get("n", n)), "n_levels": int(r.get("n_levels", suite.get("n_levels", 30))),
                    "methods": methods})
    return out


def run_suite_entry(run: dict, bins: int = 15, max_leaves: int = 5, gate: float = 0.02) -> dict:
    o = suite_oracle(run["seed"], run["n_levels"])
    ds = sample(o, run["n"], run["seed"])
    u = utility_matrix_from_tstar(run["t_star"])
    train, test = split(ds, SplitSpec((0.5, 0.5), run["seed"]))
    a = assess(test, bins=bins, max_leaves=max_leaves, seed=run["seed"])
    rep = a.report(u)
    met = a.metrics()
    exact = exact_regrets(o, u)
    row = {"run": run["run"], "seed": run["seed"], "t_star": run["t_star"], "u_delta": u.u_delta,
           "rcl_hat": rep.rcl_hat, "rgl_hat": rep.rgl_hat, "r_hat": rep.r_hat,
           "ece": met.ece, "brier": met.brier, "cl": met.cl,
           "rcl_exact": exact.rcl_total, "rgl_exact": exact.rgl_total}
    for m in run["methods"]:
        res = fit_and_apply(m, train, test, [u], bins=bins, max_leaves=max_leaves,
                            gate=gate, seed=run["seed"])[0]
        row[f"gain_{m}"] = res.gain
    return row


def worker_count(n_tasks: int) -> int:
    raw = os.environ.get("REGRETCAL_THREADS")
    if raw is None or raw == "":
        limit = os.cpu_count() or 1
    else:
        try:
            limit = int(raw)
        except ValueError:
            raise ConfigError(f"REGRETCAL_THREADS must be an integer, got {raw!r}") from None
        if limit < 1:
            raise ConfigError("REGRETCAL_THREADS must be at least 1")
    return max(1, min(limit, n_tasks))


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.std(x) == 0 or np.std(y) == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


@dataclass
class SweepResult:
    rows: List[Dict[str, float]]
    methods: tuple
    table: List[Dict[str, object]] = field(default_factory=list)


def sweep(suite: dict, cfg: RunConfig) -> SweepResult:
    runs = expand_suite(suite)
    workers = worker_count(len(runs))
    args = [(r, cfg.bins, cfg.max_leaves, cfg.gate) for r in runs]
    if workers == 1:
        rows = [run_suite_entry(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_suite_entry, *zip(*args)))
    methods = runs[0]["methods"]
    table = []
    for est in SUITE_ESTIMATORS:
        for m in methods:
            r = pearson_r([row[est] for row in rows], [row[f"gain_{m}"] for row in rows])
            table.append({"estimator": est, "method": m, "pearson_r": r,
                          "r2": r * r if not math.isnan(r) else float("nan"), "n_runs": len(rows)})
    return SweepResult(rows, methods, table)
