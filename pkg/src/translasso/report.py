"""Delimited output and figure rendering for experiment results.

CSV files are written with full-precision floats (``repr`` of the Python
float, which round-trips exactly), a mandatory header row, and no locale
dependence, so byte-identical reruns are guaranteed for identical inputs.
Figures are rendered with the Agg backend next to the delimited output;
they are a convenience view of the same data, never the primary artifact.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .simulate import ExperimentConfig, PerfSummary, ReplicationResult

__all__ = [
    "fmt",
    "write_results_csv",
    "write_summary_csv",
    "write_histogram_csv",
    "write_estimate_csv",
    "write_path_csv",
    "write_coverage_csv",
    "render_histogram",
    "render_loss_curves",
]


def fmt(value) -> str:
    """Full-precision, locale-independent scalar formatting."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _writer(path: Path):
    return open(path, "w", newline="", encoding="utf-8")


def write_results_csv(path, cfg: ExperimentConfig, results: list[ReplicationResult]) -> None:
    """One row per (replication, estimator, lambda or (lambda1, lambda2)).

    The boundary lambda2 = 0 rows are the stage-1 fits replicated into the
    two-step sweep.  Columns: loss_x, loss_z, loss_beta.
    """
    grid = cfg.grid
    n_grid = grid.shape[0]
    with _writer(Path(path)) as f:
        w = csv.writer(f)
        w.writerow(
            ["rep_index", "estimator", "lambda1", "lambda2", "loss_x", "loss_z", "loss_beta"]
        )
        for r in results:
            for i, lam in enumerate(grid):
                lx, lz, lb = r.lasso_losses[i]
                w.writerow([r.rep_index, "lasso", fmt(lam), "", fmt(lx), fmt(lz), fmt(lb)])
            for i1, lam1 in enumerate(grid):
                for i2 in range(n_grid + 1):
                    lam2 = grid[i2] if i2 < n_grid else 0.0
                    lx, lz, lb = r.tl_losses[i1, i2]
                    w.writerow(
                        [
                            r.rep_index,
                            "transductive_lasso",
                            fmt(lam1),
                            fmt(lam2),
                            fmt(lx),
                            fmt(lz),
                            fmt(lb),
                        ]
                    )


def write_summary_csv(
    path, cfg: ExperimentConfig, summaries: dict[str, PerfSummary]
) -> None:
    beta_id = cfg.label or "custom"
    with _writer(Path(path)) as f:
        w = csv.writer(f)
        w.writerow(
            ["metric", "me", "q3", "n", "m", "p", "rho", "sigma",
             "beta_star_id", "replications", "seed"]
        )
        for metric, s in summaries.items():
            w.writerow(
                [
                    metric,
                    fmt(s.me),
                    fmt(s.q3),
                    cfg.n,
                    cfg.m,
                    cfg.p,
                    fmt(cfg.rho),
                    fmt(cfg.sigma),
                    beta_id,
                    cfg.replications,
                    cfg.seed,
                ]
            )


def write_histogram_csv(path, summary: PerfSummary) -> None:
    with _writer(Path(path)) as f:
        w = csv.writer(f)
        w.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in zip(
            summary.bin_edges[:-1], summary.bin_edges[1:], summary.bin_counts
        ):
            w.writerow([fmt(left), fmt(right), fmt(count)])


def write_estimate_csv(path, beta: np.ndarray) -> None:
    with _writer(Path(path)) as f:
        w = csv.writer(f)
        w.writerow(["coordinate", "beta"])
        for j, b in enumerate(beta):
            w.writerow([j, fmt(b)])


def write_path_csv(path, grid: np.ndarray, betas: np.ndarray) -> None:
    """One row per (lambda, coordinate)."""
    with _writer(Path(path)) as f:
        w = csv.writer(f)
        w.writerow(["lambda", "coordinate", "beta"])
        for lam, row in zip(grid, betas):
            for j, b in enumerate(row):
                w.writerow([fmt(lam), j, fmt(b)])


def write_coverage_csv(path, rows: list[dict]) -> None:
    """Coverage rows: claim, bound, trials, successes, empirical, nominal,
    margin, passed, plus free-form detail."""
    with _writer(Path(path)) as f:
        w = csv.writer(f)
        w.writerow(
            ["claim", "bound", "trials", "successes", "empirical", "nominal", "margin", "passed", "detail"]
        )
        for r in rows:
            w.writerow(
                [
                    r["claim"],
                    r.get("bound", ""),
                    r["trials"],
                    r["successes"],
                    fmt(r["empirical"]),
                    fmt(r["nominal"]),
                    fmt(r["margin"]),
                    fmt(r["passed"]),
                    r.get("detail", ""),
                ]
            )


def render_histogram(path, summary: PerfSummary, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    widths = np.diff(summary.bin_edges)
    ax.bar(
        summary.bin_edges[:-1],
        summary.bin_counts,
        width=widths,
        align="edge",
        color="#6699cc",
        edgecolor="black",
        linewidth=0.5,
    )
    ax.set_xlabel(summary.metric)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def render_loss_curves(
    path,
    grid: np.ndarray,
    losses: np.ndarray,
    n: int,
    m: int,
    support_lambda: float | None = None,
    title: str = "",
) -> None:
    """Per-lambda prediction losses of the lasso path, with the minima and
    (when present) the support-recovery lambda marked."""
    fig, ax = plt.subplots(figsize=(5, 4))
    lx = losses[:, 0] / n
    lz = losses[:, 1] / m
    ax.plot(grid, lx, label="labeled prediction loss / n", color="#336699")
    ax.plot(grid, lz, label="full-design prediction loss / m", color="#cc6633")
    for vals, color in ((lx, "#336699"), (lz, "#cc6633")):
        i = int(np.argmin(vals))
        ax.plot([grid[i]], [vals[i]], "o", color=color)
    if support_lambda is not None:
        ax.axvline(support_lambda, color="gray", linestyle="--", linewidth=1,
                   label="support recovery")
    ax.set_xscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)
