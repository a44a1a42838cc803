"""Command-line interface: ``regretcal {report,posttrain,simulate,advise,sweep}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .binning import write_bins_csv
from .dataset import Schema, SplitSpec, load, save_csv
from .decision import UtilityMatrix
from .errors import ConfigError, DataError, NumericalError, RegretcalError
from .pipeline import (
    METHODS,
    TSTAR_GRID,
    RunConfig,
    posttrain,
    report_payload,
    simulate,
    sweep,
)
from .regret import Verdict, advise

_SEVERITY = [Verdict.NOT_SUBOPTIMAL, Verdict.RECALIBRATE, Verdict.ADVANCED_POST_TRAINING]


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _parse_tstars(text):
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"--tstar must be a comma-separated list of numbers, got {text!r}") from None
    if not values:
        raise ConfigError("--tstar is empty")
    return values


def _parse_utility(text):
    try:
        return UtilityMatrix.parse(text)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"--utility must be four numbers u00,u01,u10,u11, got {text!r}") from None


def _config(args, needs_input=True) -> RunConfig:
    if needs_input and not args.input:
        raise ConfigError("--input is required")
    utility = _parse_utility(args.utility) if args.utility else None
    tstars = _parse_tstars(args.tstar) if args.tstar else TSTAR_GRID
    cfg = RunConfig(
        input=args.input, split=SplitSpec((0.5, 0.5), args.seed), bins=args.bins,
        max_leaves=args.max_leaves, gate=args.glar_gate, tstars=tstars, utility=utility,
        out=args.out, seed=args.seed,
        schema=Schema(args.score_col, args.label_col, args.feature_prefix))
    return cfg.validate()


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_input(cfg):
    try:
        return load(cfg.input, cfg.schema)
    except FileNotFoundError:
        raise DataError(f"input file not found: {cfg.input}") from None


# -- commands ----------------------------------------------------------------

def cmd_report(args) -> int:
    from .plots import regret_svg, reliability_svg

    cfg = _config(args)
    ds = _load_input(cfg)
    payload, a = report_payload(ds, cfg)
    out = _out_dir(cfg)
    _write_json(out / "report.json", payload)
    write_bins_csv(a.curve, out / "bins.csv")
    reports = [a.report(u) for u in cfg.utilities()]
    reliability_svg(a.curve, [r.t_star for r in reports], out / "reliability.svg")
    regret_svg(reports, out / "regret.svg")
    print(f"wrote report.json, bins.csv, reliability.svg, regret.svg to {out}")
    return 0


def cmd_posttrain(args) -> int:
    cfg = _config(args)
    ds = _load_input(cfg)
    payload, test, results = posttrain(ds, cfg, args.method)
    out = _out_dir(cfg)
    _write_json(out / "reports.json", payload)
    with (out / "corrected.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["id", "y", "score"]
        for r in results:
            head += [f"corrected_{r.t_star!r}", f"decision_{r.t_star!r}"]
        w.writerow(head)
        for i in range(test.n):
            row = [int(test.ids[i]), int(test.labels[i]), repr(float(test.scores[i]))]
            for r in results:
                row += [repr(float(r.corrected[i])), int(r.decisions[i])]
            w.writerow(row)
    with (out / "gain.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "t_star", "threshold", "eu_before", "eu_after", "gain"])
        for r in results:
            w.writerow([args.method] + [_fmt(v) for v in
                                        (r.t_star, r.threshold, r.eu_before, r.eu_after, r.gain)])
    for r in results:
        print(f"t*={r.t_star:g} gain={r.gain:+.6f}")
    return 0


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be at least 1, got {args.n}")
    try:
        spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"spec file not found: {args.spec}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec file is not valid JSON: {exc}") from None
    ds, oracle, payload = simulate(spec, args.n, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out / "data.csv")
    oracle.save(out / "oracle.json")
    _write_json(out / "exact.json", payload)
    ex = payload["exact"]
    print(f"exact rcl={ex['rcl']:.6g} rgl={ex['rgl']:.6g} r={ex['r']:.6g}")
    return 0


def cmd_advise(args) -> int:
    cfg = _config(args)
    ds = _load_input(cfg)
    payload, a = report_payload(ds, cfg)
    advice = [advise(a.report(u), cfg.gate) for u in cfg.utilities()]
    tstars = [u.t_star for u in cfg.utilities()]
    worst = max(range(len(advice)),
                key=lambda i: (_SEVERITY.index(advice[i].verdict), advice[i].r_hat))
    verdict = advice[worst].verdict
    out = _out_dir(cfg)
    _write_json(out / "advice.json", {
        "schema_version": payload["schema_version"], "config": payload["config"],
        "verdict": verdict.value,
        "per_tstar": [dict(ad.to_dict(), t_star=t) for t, ad in zip(tstars, advice)],
    })
    print(f"{verdict.value}: t*={tstars[worst]:g}, {advice[worst].rationale}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args, needs_input=False)
    try:
        suite = json.loads(Path(args.suite).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"suite file not found: {args.suite}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"suite file is not valid JSON: {exc}") from None
    res = sweep(suite, cfg)
    out = _out_dir(cfg)
    with (out / "correlations.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "method", "pearson_r", "r2", "n_runs"])
        for row in res.table:
            w.writerow([_fmt(row[k]) for k in ("estimator", "method", "pearson_r", "r2", "n_runs")])
    with (out / "scatter.csv").open("w", newline="", encoding="utf-8") as fh:
        cols = list(res.rows[0].keys())
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in res.rows:
            w.writerow([_fmt(row[c]) for c in cols])
    for row in res.table:
        if row["estimator"] in ("rcl_hat", "r_hat", "ece"):
            print(f"r2({row['estimator']}, {row['method']} gain) = {row['r2']:.3f}")
    return 0


# -- parser ------------------------------------------------------------------

def _common(p, input_required=True):
    p.add_argument("--input", required=False, help="scored dataset (CSV or JSONL)")
    p.add_argument("--bins", type=int, default=15, help="equal-mass score bins (default 15)")
    p.add_argument("--max-leaves", type=int, default=5, help="regions per bin (default 5)")
    p.add_argument("--glar-gate", type=float, default=0.02, help="GLAR regret gate r (default 0.02)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tstar", help="comma-separated optimal thresholds (default: 11-value grid)")
    g.add_argument("--utility", help="utility matrix as u00,u01,u10,u11")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--score-col", default="score")
    p.add_argument("--label-col", default="y")
    p.add_argument("--feature-prefix", default="f")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regretcal",
                                     description="Decision regret of probabilistic classifiers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("report", help="regret report with tables and plots")
    _common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("posttrain", help="fit a correction and measure its utility gain")
    _common(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.set_defaults(func=cmd_posttrain)

    p = sub.add_parser("simulate", help="sample from a synthetic oracle with exact regrets")
    p.add_argument("--spec", required=True, help="JSON oracle spec")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("advise", help="verdict from the model evaluation procedure")
    _common(p)
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("sweep", help="correlate regret estimates with post-training gains")
    _common(p)
    p.add_argument("--suite", required=True, help="JSON suite spec")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RegretcalError as exc:
        print(f"regretcal: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ArithmeticError as exc:
        print(f"regretcal: numerical error: {exc}", file=sys.stderr)
        return NumericalError.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
