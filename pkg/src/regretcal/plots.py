"""Static SVG figures: reliability diagram and regret bounds."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed element ids, no timestamp and text kept as text: reruns give identical bytes.
_RC = {"svg.hashsalt": "regretcal", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def reliability_svg(curve, tstars, path) -> None:
    """Calibration curve per bin with the diagonal and one line per t*."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.plot([0, 1], [0, 1], color="0.6", lw=1, ls="--", label="calibrated")
        live = curve.mass > 0
        ax.plot(curve.mean_score[live], curve.mean_label[live], marker="o", ms=4,
                color="C0", label="calibration curve")
        for t in tstars:
            ax.axhline(t, color="C3", lw=0.6, alpha=0.5)
        if len(tstars):
            ax.plot([], [], color="C3", lw=0.6, label="t*")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("mean score in bin")
        ax.set_ylabel("mean outcome in bin")
        ax.legend(loc="upper left", fontsize=8)
        fig.tight_layout()
        _save(fig, path)


def regret_svg(reports, path) -> None:
    """Per-bin grouping-regret bands for one t* and totals across t*.

    The left panel uses the report whose t* is closest to 1/2.
    """
    with plt.rc_context(_RC):
        fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
        focus = min(reports, key=lambda r: abs(r.t_star - 0.5))
        rows = [b for b in focus.bins if b.mass > 0]
        x = np.array([b.mean_score for b in rows])
        lo = np.array([b.lgl_hat for b in rows])
        hi = np.array([b.ugl_hat for b in rows])
        rcl = np.array([b.rcl_hat for b in rows])
        left.fill_between(x, lo, hi, step="mid", color="C1", alpha=0.35, label="grouping regret bounds")
        left.plot(x, rcl, drawstyle="steps-mid", color="C0", label="calibration regret")
        left.set_xlabel("mean score in bin")
        left.set_ylabel("regret")
        left.set_title(f"per bin, t* = {focus.t_star:g}", fontsize=9)
        left.legend(fontsize=8)

        ts = np.array([r.t_star for r in reports])
        order = np.argsort(ts)
        ts = ts[order]
        right.fill_between(ts, [reports[i].lgl_hat for i in order],
                           [reports[i].ugl_hat for i in order], color="C1", alpha=0.35,
                           label="grouping regret bounds")
        right.plot(ts, [reports[i].rcl_hat for i in order], marker="o", ms=3, color="C0",
                   label="calibration regret")
        right.plot(ts, [reports[i].r_hat for i in order], marker="s", ms=3, color="k",
                   label="total estimate")
        right.set_xlabel("t*")
        right.set_title("totals", fontsize=9)
        right.legend(fontsize=8)
        fig.tight_layout()
        _save(fig, path)
