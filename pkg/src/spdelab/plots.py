"""Figure rendering for convergence reports.

One log-log panel per metric: estimates against the approximation index with
error bars, the fitted slope as a guide line, and the verdict in the title.
Rendering is head-less and byte-stable: fixed dpi, fixed metadata, no
timestamps.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def convergence_figure_bytes(report) -> bytes:
    """Render the report's per-metric panels to PNG bytes."""
    metrics = sorted({row.metric for row in report.rows})
    fig, axes = plt.subplots(
        1, max(len(metrics), 1), figsize=(4.6 * max(len(metrics), 1), 3.6), squeeze=False
    )
    for ax, metric in zip(axes[0], metrics):
        rows = [row for row in report.rows if row.metric == metric]
        ns = np.array([row.n for row in rows], dtype=float)
        est = np.array([row.estimate for row in rows])
        err = np.array([row.std_error for row in rows])
        positive = est > 0
        ax.errorbar(ns[positive], est[positive], yerr=err[positive],
                    fmt="o-", capsize=3, lw=1.2, ms=4)
        if np.any(~positive):
            floor = max(est[positive].min() * 1e-3, 1e-300) if np.any(positive) else 1e-16
            ax.plot(ns[~positive], np.full((~positive).sum(), floor), "v", ms=5,
                    label="exact zero")
            ax.legend(fontsize=8)
        fit = report.fits.get(metric)
        if fit is not None and np.isfinite(fit.slope) and np.any(positive):
            anchor = est[positive][0]
            guide = anchor * (ns / ns[positive][0]) ** fit.slope
            ax.plot(ns, guide, "--", color="gray", lw=1.0)
            title = f"{metric}\nslope {fit.slope:.2f}, {fit.verdict}"
        else:
            verdict = report.fits[metric].verdict if metric in report.fits else "?"
            title = f"{metric}\n{verdict}"
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("approximation index n")
        ax.set_ylabel("estimate")
        ax.set_title(title, fontsize=9)
        ax.grid(True, which="both", alpha=0.3)
    fig.suptitle(f"mode: {report.mode}   seed: {report.seed}", fontsize=9)
    fig.tight_layout()
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", dpi=120, metadata={"Software": "spdelab"})
    plt.close(fig)
    return buffer.getvalue()
