"""Matplotlib rendering of influence reports.

Charts are horizontal signed bars: bias-amplifying subsets point right in
red, bias-suppressing subsets point left in blue, and the folded residual
bucket is gray.  Files are written as SVG with a fixed hash salt and no
date metadata so identical runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .fif import FifReport, RankedFifs
from .interventions import InterventionRecord

POSITIVE = "#c23b22"
NEGATIVE = "#2a6f97"
RESIDUAL = "#8d8d8d"


def _bar_colors(values):
    return [RESIDUAL if label == "residual" else (POSITIVE if v >= 0 else NEGATIVE)
            for label, v in values]


def save_figure(fig, path):
    plt.rcParams["svg.hashsalt"] = "fifaudit"
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def fif_chart(report: FifReport, ranked: RankedFifs, path):
    rows = ranked.rows()
    labels = [label for label, _ in rows]
    values = [v for _, v in rows]
    height = max(2.0, 0.45 * len(rows) + 1.2)
    fig, ax = plt.subplots(figsize=(7.0, height))
    ypos = range(len(rows) - 1, -1, -1)
    ax.barh(list(ypos), values, color=_bar_colors(rows), edgecolor="black", linewidth=0.4)
    ax.set_yticks(list(ypos))
    ax.set_yticklabels(labels)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("influence on bias")
    ax.set_title(
        f"{report.metric.value.upper()} = {report.bias:.4f} "
        f"(sum of influences = {report.estimated_bias:.4f})"
    )
    ax.grid(axis="x", linestyle=":", linewidth=0.5)
    save_figure(fig, path)


def comparison_chart(record: InterventionRecord, top_n: int, path):
    from .fif import rank_and_residual

    before = dict(rank_and_residual(record.fif_before, top_n).rows())
    after = dict(rank_and_residual(record.fif_after, top_n).rows())
    named = sorted(
        (set(before) | set(after)) - {"residual"},
        key=lambda l: (-max(abs(before.get(l, 0.0)), abs(after.get(l, 0.0))), l),
    )
    labels = named + ["residual"]
    height = max(2.5, 0.6 * len(labels) + 1.2)
    fig, ax = plt.subplots(figsize=(7.5, height))
    ypos = list(range(len(labels) - 1, -1, -1))
    bw = 0.38
    ax.barh([y + bw / 2 for y in ypos], [before.get(l, 0.0) for l in labels],
            height=bw, color="#b5b5b5", edgecolor="black", linewidth=0.4, label="before")
    ax.barh([y - bw / 2 for y in ypos], [after.get(l, 0.0) for l in labels],
            height=bw, color=POSITIVE, edgecolor="black", linewidth=0.4, label="after")
    ax.set_yticks(ypos)
    ax.set_yticklabels(labels)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("influence on bias")
    ax.set_title(
        f"{record.kind}: {record.before.kind.value.upper()} "
        f"{record.before.value:.4f} -> {record.after.value:.4f}"
    )
    ax.legend(loc="best")
    ax.grid(axis="x", linestyle=":", linewidth=0.5)
    save_figure(fig, path)
