"""Render a run directory into summary tables and figures.

Produces the four per-period panels a bidding run is judged by (price versus
clearing price, quantity versus realized curtailment with the incentive
bands, won deals, profit) plus the training profit curve when present, as
PNG files next to a tidy delimited summary.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .pipeline import RunMetrics, compute_metrics, read_outcome_csv

FIGURE_DPI = 130


def write_summary_table(metrics_by_tag: dict[str, RunMetrics], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tag", "periods", "success_rate", "rate_tight", "rate_loose",
                    "win_rate", "total_profit"])
        for tag, m in sorted(metrics_by_tag.items()):
            w.writerow([tag, m.periods, m.success_rate, m.rate_tight,
                        m.rate_loose, m.win_rate, m.total_profit])


def _periods(rows):
    return np.arange(1, len(rows) + 1)


def fig_bidding_price(rows, path: Path) -> None:
    x = _periods(rows)
    bid = np.array([r["bid_price"] for r in rows])
    mcp = np.array([r["mcp"] for r in rows])
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.plot(x, mcp, "r--", lw=1.2, label="clearing price")
    ax.plot(x, bid, color="tab:blue", lw=1.2, label="bid price")
    ax.set_xlabel("period")
    ax.set_ylabel("price (currency/kWh)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def fig_bidding_quantity(rows, path: Path) -> None:
    x = _periods(rows)
    q_bid = np.array([r["bid_quantity"] for r in rows])
    q_act = np.array([r["q_act"] for r in rows])
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.fill_between(x, 0.6 * q_act, 1.5 * q_act, color="thistle", alpha=0.5,
                    label="0.6-1.5 band")
    ax.fill_between(x, 0.8 * q_act, 1.2 * q_act, color="lavender", alpha=0.9,
                    label="0.8-1.2 band")
    ax.plot(x, q_act, color="purple", ls="--", lw=1.2, label="actual curtailment")
    ax.plot(x, q_bid, color="tab:orange", lw=1.2, label="bid quantity")
    ax.set_xlabel("period")
    ax.set_ylabel("quantity (kW)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def fig_win_flags(rows, path: Path) -> None:
    x = _periods(rows)
    flags = np.array([1 if (r["win"] and r["q_act"] > 0) else 0 for r in rows])
    fig, ax = plt.subplots(figsize=(9, 2.2))
    ax.stem(x, flags, basefmt=" ", linefmt="tab:green", markerfmt="go")
    ax.set_ylim(-0.1, 1.3)
    ax.set_yticks([0, 1])
    ax.set_xlabel("period")
    ax.set_ylabel("win deal")
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def fig_profit(rows, path: Path) -> None:
    x = _periods(rows)
    profit = np.array([r["profit"] for r in rows])
    fig, ax = plt.subplots(figsize=(9, 2.8))
    ax.bar(x, profit, color="tab:cyan", width=0.85)
    ax.set_xlabel("period")
    ax.set_ylabel("profit (currency)")
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def fig_profit_curve(curve_rows: list[tuple[int, float]], path: Path) -> None:
    eps = [ep for ep, _ in curve_rows]
    vals = [v for _, v in curve_rows]
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(eps, vals, color="tab:orange", lw=1.3)
    ax.set_xlabel("episode")
    ax.set_ylabel("cumulative profit (currency)")
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def read_profit_curve(path: Path) -> list[tuple[int, float]]:
    with open(path, newline="") as fh:
        return [(int(r["episode"]), float(r["cumulative_profit"]))
                for r in csv.DictReader(fh)]


def render_run(run_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Render every figure and table the run directory supports.

    Looks for outcome CSVs (``outcome.csv``, ``online_outcome.csv``,
    ``baseline_outcome.csv``) and ``profit_curve.csv``; missing pieces are
    skipped. Returns the paths written.
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    metrics_by_tag: dict[str, RunMetrics] = {}
    for name, tag in [("outcome.csv", "agents"),
                      ("online_outcome.csv", "online"),
                      ("baseline_outcome.csv", "baseline")]:
        src = run_dir / name
        if not src.exists():
            continue
        rows = read_outcome_csv(src)
        if not rows:
            continue
        metrics_by_tag[tag] = compute_metrics(rows)
        for fig_fn, stem in [(fig_bidding_price, "price"),
                             (fig_bidding_quantity, "quantity"),
                             (fig_win_flags, "win_flags"),
                             (fig_profit, "profit")]:
            path = out_dir / f"fig_{tag}_{stem}.png"
            fig_fn(rows, path)
            written.append(path)
    curve_path = run_dir / "profit_curve.csv"
    if curve_path.exists():
        curve = read_profit_curve(curve_path)
        if curve:
            path = out_dir / "fig_profit_curve.png"
            fig_profit_curve(curve, path)
            written.append(path)
    if metrics_by_tag:
        table = out_dir / "summary_table.csv"
        write_summary_table(metrics_by_tag, table)
        written.append(table)
    return written
