"""Acceptance gate: one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed at the end of the session (and immediately with ``-s``).
"""

import json
import time

import numpy as np
import pytest

from oracles import brute_force_isotonic, pairwise_auc
from regretcal.binning import estimate_calibration_curve, fit_equal_mass_bins
from regretcal.cli import main
from regretcal.dataset import ScoredDataset, SplitSpec, split
from regretcal.decision import UtilityMatrix
from regretcal.grouping import GroupingLossEstimate, estimate_gl, fit_partition, glar_fit, glat_decide
from regretcal.metrics import auc
from regretcal.pipeline import RunConfig, sweep
from regretcal.recalibration import StepMap, adjust_threshold, isotonic_fit
from regretcal.regret import lgl_bin, regret_report, ugl_bin
from regretcal.synthetic import (
    OracleDistribution,
    TightnessSpec,
    brute_force_best_rule,
    build_lb_tight,
    build_ub_tight,
    calibration_gap,
    conditional_mean,
    exact_eu,
    exact_gl,
    exact_regrets,
    exact_stats,
    glar_scores,
    lower_tight_case,
    random_oracle,
    recalibrated_scores,
    sample,
)

RESULTS = {}


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def random_utility(rng):
    """Random t* and u_delta: ``[[k t*, 0], [0, k (1 - t*)]]`` has u_delta = k."""
    t = rng.uniform(0.02, 0.98)
    k = float(np.exp(rng.uniform(np.log(0.1), np.log(20.0))))
    return UtilityMatrix(k * t, 0.0, 0.0, k * (1.0 - t))


def oracle_suite(n, seed, max_levels=8, max_atoms=5, monotone=False):
    rng = np.random.default_rng(seed)
    for i in range(n):
        o = random_oracle(seed * 100_000 + i, int(rng.integers(1, max_levels + 1)),
                          int(rng.integers(1, max_atoms + 1)), monotone=monotone)
        yield o, random_utility(rng)


# -- 1 ---------------------------------------------------------------------------

def test_criterion_01_bound_sandwich():
    start = time.perf_counter()
    worst, bins = 0.0, 0
    for o, u in oracle_suite(600, 1):
        st = exact_stats(o, u.t_star)
        ex = exact_regrets(o, u)
        lo = lgl_bin(st.c, st.gl, u.t_star, u.u_delta)
        hi = ugl_bin(st.c, st.gl, u.t_star, u.u_delta)
        worst = max(worst, float(np.max(lo - ex.rgl)), float(np.max(ex.rgl - hi)))
        bins += st.p.size
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    record(1, "bound sandwich L <= R_GL <= U", ok,
           f"600 oracles, {bins} bins, worst violation {worst:.2e} (tol 1e-9), {elapsed:.2f}s (< 10s)")


# -- 2 ---------------------------------------------------------------------------

def test_criterion_02_tightness():
    start = time.perf_counter()
    worst, cases, n = 0.0, set(), 0
    for t in (0.2, 0.5, 0.7):
        for c in np.linspace(0.05, 0.95, 19):
            vmax = c * (1 - c)
            for frac in np.linspace(0.0, 1.0, 11):
                v = frac * vmax
                o = build_lb_tight(TightnessSpec(c, v, t))
                u = UtilityMatrix(t, 0.0, 0.0, 1.0 - t)
                gap = abs(exact_regrets(o, u).rgl_total - lgl_bin(c, v, t, 1.0))
                worst = max(worst, gap)
                cases.add(("lower", lower_tight_case(c, v, t)))
                n += 1
    for c in np.linspace(0.05, 0.95, 19):
        for frac in np.linspace(0.0, 1.0, 11):
            v = frac * c * (1 - c)
            o = build_ub_tight(TightnessSpec(c, v, 0.5, "upper"))
            u = UtilityMatrix(0.5, 0.0, 0.0, 0.5)
            worst = max(worst, abs(exact_regrets(o, u).rgl_total - ugl_bin(c, v, 0.5, 1.0)))
            cases.add(("upper", "c<t" if c < 0.5 else "c>=t"))
            n += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and len(cases) == 6 and elapsed < 5
    record(2, "tightness attainment", ok,
           f"{n} constructions, {len(cases)}/6 cases covered, worst gap {worst:.2e} (tol 1e-9), "
           f"{elapsed:.2f}s (< 5s)")


# -- 3 ---------------------------------------------------------------------------

def test_criterion_03_prop1_optimality():
    worst = -np.inf
    for o, u in oracle_suite(200, 3, max_levels=12, max_atoms=3):
        best = brute_force_best_rule(o, u)
        worst = max(worst, best.eu - exact_regrets(o, u).eu_recalibrated)
    ok = worst <= 1e-9
    record(3, "recalibrated rule is optimal among level-set rules", ok,
           f"200 oracles (<= 12 levels), max(best EU - EU(c o f, t*)) = {worst:.2e} (tol 1e-9)")


# -- 4 ---------------------------------------------------------------------------

def _suites():
    yield from oracle_suite(300, 4)
    yield from oracle_suite(100, 5, monotone=True)
    rng = np.random.default_rng(6)
    for _ in range(100):
        c = rng.uniform(0.02, 0.98)
        v = rng.uniform(0, c * (1 - c))
        t = rng.uniform(0.05, 0.95)
        yield build_lb_tight(TightnessSpec(c, v, t), rng.uniform(0, 1)), UtilityMatrix(t, 0, 0, 1 - t)
        c = rng.uniform(0.02, 0.98)
        v = rng.uniform(0, c * (1 - c))
        yield build_ub_tight(TightnessSpec(c, v, 0.5, "upper"), rng.uniform(0, 1)), random_utility(rng)


def test_criterion_04_decomposition_and_ranking():
    worst_dec = worst_rank = worst_closed = 0.0
    n = 0
    rng = np.random.default_rng(7)
    for o, u in _suites():
        for t in (None, float(rng.uniform(0, 1))):
            ex = exact_regrets(o, u, t)
            worst_dec = max(worst_dec, float(np.max(np.abs(ex.r - (ex.rcl + ex.rgl)))))
            worst_dec = max(worst_dec, abs(ex.r_total - (ex.eu_oracle - ex.eu_naive)))
            worst_rank = max(worst_rank, ex.eu_naive - ex.eu_recalibrated,
                             ex.eu_recalibrated - ex.eu_oracle)
            worst_closed = max(worst_closed,
                               float(np.max(np.abs(ex.rcl - ex.rcl_closed))),
                               float(np.max(np.abs(ex.rgl - ex.rgl_closed))),
                               float(np.max(np.abs(ex.rgl - ex.rgl_reformulated))))
            n += 1
    ok = max(worst_dec, worst_rank, worst_closed) <= 1e-12
    record(4, "decomposition exactness and ranking", ok,
           f"{n} (oracle, t) pairs, |R - (R_CL + R_GL)| <= {worst_dec:.1e}, "
           f"ranking violation {max(worst_rank, 0.0):.1e}, closed forms {worst_closed:.1e} (tol 1e-12)")


# -- 5 ---------------------------------------------------------------------------

def test_criterion_05_duality():
    mismatches, atoms = 0, 0
    for o, u in oracle_suite(100, 8, monotone=True):
        st = exact_stats(o, u.t_star)
        t_f = adjust_threshold(StepMap(st.p, st.c), u.t_star)
        c_atom = recalibrated_scores(o)
        mismatches += int(np.sum((o.f >= t_f) != (c_atom >= u.t_star)))
        atoms += o.z.size
    ok = mismatches == 0
    record(5, "adjusted threshold reproduces recalibrated decisions", ok,
           f"100 monotone oracles, {mismatches} disagreements over {atoms} atoms")


# -- 6 ---------------------------------------------------------------------------

def test_criterion_06_glar_properties():
    worst_cal = worst_id = 0.0
    chain_fail = glat_fail = 0
    rng = np.random.default_rng(9)
    for i in range(200):
        o = random_oracle(900_000 + i, int(rng.integers(1, 6)), int(rng.integers(4, 9)))
        u = random_utility(rng)
        fine = o.x % 4
        coarse = fine // 2
        f_p2 = glar_scores(o, fine)
        f_p1 = glar_scores(o, coarse)
        worst_cal = max(worst_cal, calibration_gap(o, f_p2), calibration_gap(o, f_p1))
        between = float(np.sum(o.z * (f_p2 - conditional_mean(o, f_p2, o.f)) ** 2))
        worst_id = max(worst_id, abs(exact_gl(o, o.f) - exact_gl(o, f_p2) - between))
        t = u.t_star
        chain = [exact_eu(o, u, o.f >= t), exact_eu(o, u, recalibrated_scores(o) >= t),
                 exact_eu(o, u, f_p1 >= t), exact_eu(o, u, f_p2 >= t), exact_eu(o, u, o.fstar >= t)]
        chain_fail += int(any(b < a - 1e-12 for a, b in zip(chain, chain[1:])))
        glat = np.array([glat_decide(s, c, t) for s, c in zip(o.f, f_p2)])
        glat_fail += int(np.sum(glat != (f_p2 >= t)))
    # fitted maps: GLAT on the raw score equals GLAR thresholded at t*
    two = OracleDistribution.from_atoms([0.25] * 4, [0.1, 0.7, 0.3, 0.9], [0.4, 0.4, 0.6, 0.6])
    ds = sample(two, 8000, 1)
    f1, f2 = split(ds, SplitSpec((0.5, 0.5), 0))
    b = fit_equal_mass_bins(ds.scores, 15)
    m = glar_fit(f1, f2, b, 0.5, u_delta=1.0)
    corrected = m.predict_dataset(ds)
    fitted_fail = sum(glat_decide(s, c, 0.5) != int(c >= 0.5) for s, c in zip(ds.scores, corrected))
    ok = worst_cal <= 1e-12 and worst_id <= 1e-12 and chain_fail == 0 and glat_fail == 0 \
        and fitted_fail == 0 and m.gate_open
    record(6, "GLAR calibration, GL identity, EU chain, GLAT duality", ok,
           f"200 oracles, calibration gap {worst_cal:.1e}, GL identity {worst_id:.1e} (tol 1e-12), "
           f"chain violations {chain_fail}, GLAT mismatches {glat_fail + fitted_fail}")


# -- 7 and 8 ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def suite_result():
    start = time.perf_counter()
    res = sweep({"n_runs": 60, "n": 20000, "seed": 0}, RunConfig())
    return res, time.perf_counter() - start


def _r2(res, est, method):
    return next(r["r2"] for r in res.table if r["estimator"] == est and r["method"] == method)


def test_criterion_07_rcl_vs_isotonic_gain(suite_result):
    res, elapsed = suite_result
    r2 = _r2(res, "rcl_hat", "isotonic")
    ece = _r2(res, "ece", "isotonic")
    ok = r2 >= 0.75 and elapsed < 120
    record(7, "r2(R_CL_hat, isotonic gain)", ok,
           f"r2 = {r2:.3f} (>= 0.75; ECE contrast r2 = {ece:.3f}), 60 runs at n = 20000, "
           f"{elapsed:.1f}s (< 120s)")


def test_criterion_08_r_vs_refit_gain(suite_result):
    res, _ = suite_result
    g = _r2(res, "r_hat", "glar")
    lg = _r2(res, "r_hat", "logistic")
    ok = g >= 0.6 and lg >= 0.6
    record(8, "r2(R_hat, GLAR / logistic gain)", ok,
           f"GLAR r2 = {g:.3f}, logistic r2 = {lg:.3f} (>= 0.6 each)")


# -- 9 ---------------------------------------------------------------------------

def test_criterion_09_estimator_consistency():
    miscal = OracleDistribution.from_atoms([0.2, 0.8], [0.7, 0.8], [0.4, 0.8])
    u = UtilityMatrix(1, 0, 0, 1)
    exact = exact_regrets(miscal, u).rcl_total
    hits = 0
    for seed in range(50):
        ds = sample(miscal, 20000, seed)
        b = fit_equal_mass_bins(ds.scores, 15)
        curve = estimate_calibration_curve(ds, b)
        rep = regret_report(ds, GroupingLossEstimate.unavailable(curve), curve, u)
        hits += abs(rep.rcl_hat - exact) <= 0.02
    # three score bins, each holding two equal-mass regions at c -/+ 0.3
    levels = [0.2, 0.5, 0.8]
    centres = [0.35, 0.5, 0.65]
    z = np.full(6, 1 / 6)
    fstar = np.ravel([[c - 0.3, c + 0.3] for c in centres])
    grouped = OracleDistribution.from_atoms(z, fstar, np.repeat(levels, 2))
    gl_exact = exact_gl(grouped, grouped.f)  # 0.09 in every bin
    gl_hits = 0
    for seed in range(50):
        ds = sample(grouped, 30000, seed)
        b = fit_equal_mass_bins(ds.scores, 15)
        f1, f2 = split(ds, SplitSpec((0.5, 0.5), seed))
        gl = estimate_gl(f2, b, fit_partition(f1, b))
        live = gl.mass > 0
        gl_hits += bool(np.all(np.abs(gl.gl_hat[live] - 0.09) <= 0.02))
    ok = hits >= 48 and gl_hits >= 48 and abs(gl_exact - 0.09) < 1e-12
    record(9, "estimator consistency", ok,
           f"R_CL_hat within 0.02 of exact {exact:.2f} in {hits}/50 runs; "
           f"gl_hat within 0.02 of 0.09 in {gl_hits}/50 runs (need >= 95%)")


# -- 10 --------------------------------------------------------------------------

def test_criterion_10_pava_and_auc_oracles():
    rng = np.random.default_rng(10)
    worst_iso = worst_auc = 0.0
    for _ in range(300):
        n = int(rng.integers(1, 9))
        s = rng.integers(0, 6, n) / 5
        y = rng.integers(0, 2, n).astype(float)
        worst_iso = max(worst_iso, float(np.max(np.abs(isotonic_fit(s, y)(s) - brute_force_isotonic(s, y)))))
    for _ in range(300):
        n = int(rng.integers(2, 201))
        s = rng.integers(0, 20, n) / 19
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        worst_auc = max(worst_auc, abs(auc(ScoredDataset.from_arrays(s, y)) - pairwise_auc(s, y)))
    ok = worst_iso <= 1e-9 and worst_auc <= 1e-9
    record(10, "PAVA and AUC oracle equivalence", ok,
           f"300 PAVA cases (n <= 8) max diff {worst_iso:.1e}; 300 AUC cases (n <= 200) "
           f"max diff {worst_auc:.1e} (tol 1e-9)")


# -- 11 --------------------------------------------------------------------------

def _snapshot(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_criterion_11_cli_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("REGRETCAL_THREADS", "2")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "atoms", "t_star": 0.5, "atoms": [
        {"z": 0.25, "fstar": 0.1, "f": 0.4, "x": 0}, {"z": 0.25, "fstar": 0.7, "f": 0.4, "x": 1},
        {"z": 0.25, "fstar": 0.3, "f": 0.6, "x": 2}, {"z": 0.25, "fstar": 0.9, "f": 0.6, "x": 3}]}))
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"n_runs": 4, "n": 2000, "seed": 3}))
    out = tmp_path / "out"
    data = str(out / "sim" / "data.csv")
    commands = [
        ["simulate", "--spec", str(spec), "--n", "3000", "--seed", "5", "--out", str(out / "sim")],
        ["report", "--input", data, "--seed", "5", "--out", str(out / "report")],
        ["advise", "--input", data, "--seed", "5", "--out", str(out / "advise")],
        ["sweep", "--suite", str(suite), "--out", str(out / "sweep")],
    ] + [["posttrain", "--input", data, "--method", m, "--seed", "5", "--tstar", "0.25,0.5",
          "--out", str(out / f"pt_{m}")]
         for m in ("isotonic", "platt", "histogram", "threshold", "glar", "logistic")]

    def run_all():
        stdout = []
        for cmd in commands:
            code = main(cmd)
            stdout.append((code, capsys.readouterr().out))
        return stdout, _snapshot(out)

    first_out, first = run_all()
    second_out, second = run_all()
    differing = sorted(k for k in first if first[k] != second.get(k))
    codes = [c for c, _ in first_out]
    ok = not differing and first_out == second_out and all(c == 0 for c in codes) and len(first) >= 20
    record(11, "CLI determinism", ok,
           f"{len(commands)} commands, {len(first)} files, {len(differing)} differ on rerun, exit codes {set(codes)}")
