"""Report generation: delimited tables plus rendered figures.

Everything lands in one output directory: cluster risk tables, per-read
decisions, the policy/cluster consistency table, coupling matrices, and
PNG figures rendered with the non-interactive matplotlib backend.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .actions import format_time
from .clustering import ClusterRiskSummary, dataset_risk
from .coupling import save_matrix
from .features import export_features
from .pipeline import PipelineResult, ReadEvaluation
from .policy import export_consistency


def export_cluster_table(
    summaries: Sequence[ClusterRiskSummary], path, total_crv: float, total_level: str
) -> None:
    """Per-cluster risk-code percentages, cluster risk value and level,
    with a whole-dataset row at the bottom."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "cluster",
                "samples",
                "high_pct",
                "medium_pct",
                "low_pct",
                "risk_value",
                "risk_level",
            ]
        )
        for s in summaries:
            total = s.n_high + s.n_medium + s.n_low
            pct = lambda n: f"{100.0 * n / total:.2f}" if total else "0.00"
            name = "outliers" if s.index == -1 else f"cluster{s.index}"
            writer.writerow(
                [
                    name,
                    s.sample_count,
                    pct(s.n_high),
                    pct(s.n_medium),
                    pct(s.n_low),
                    f"{s.crv:.4f}",
                    s.level,
                ]
            )
        writer.writerow(
            ["dataset", sum(s.sample_count for s in summaries), "", "", "", f"{total_crv:.4f}", total_level]
        )


def export_read_decisions(reads: Sequence[ReadEvaluation], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "time",
                "device",
                "document",
                "location",
                "record_index",
                "cluster_label",
                "cluster_level",
                "cluster_decision",
                "policy_risk",
                "policy_decision",
                "decision",
            ]
        )
        for r in reads:
            writer.writerow(
                [
                    format_time(r.read.time),
                    r.read.device.token(),
                    r.read.document.token(),
                    r.read.location.token(),
                    r.read.record_index,
                    r.cluster_label,
                    r.cluster_level or "",
                    r.cluster_decision.value,
                    f"{r.breakdown.r_overall:.4f}",
                    r.breakdown.decision.value,
                    r.combined.value,
                ]
            )


# -- figures -----------------------------------------------------------------


def plot_cluster_risk(summaries: Sequence[ClusterRiskSummary], path) -> None:
    """Stacked high/medium/low percentage bars per cluster."""
    names, highs, meds, lows = [], [], [], []
    for s in summaries:
        total = s.n_high + s.n_medium + s.n_low
        if total == 0:
            continue
        names.append("outliers" if s.index == -1 else f"C{s.index}\n{s.level}")
        highs.append(100.0 * s.n_high / total)
        meds.append(100.0 * s.n_medium / total)
        lows.append(100.0 * s.n_low / total)
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 4))
    x = np.arange(len(names))
    ax.bar(x, lows, label="low", color="#4c9f70")
    ax.bar(x, meds, bottom=lows, label="medium", color="#f4a942")
    ax.bar(x, highs, bottom=np.array(lows) + np.array(meds), label="high", color="#c0392b")
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylabel("share of present feature codes (%)")
    ax.set_title("Risk-code composition per cluster")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_risk_values(summaries: Sequence[ClusterRiskSummary], path) -> None:
    """Cluster risk values sorted ascending against the level ladder."""
    pairs = sorted((s.crv, s.index) for s in summaries)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(range(len(pairs)), [p[0] for p in pairs], marker="o")
    for step in (1.0, 1.5, 2.0, 2.5, 3.0):
        ax.axhline(step, color="grey", linewidth=0.5, linestyle=":")
    ax.set_xticks(range(len(pairs)))
    ax.set_xticklabels(
        ["outliers" if p[1] == -1 else f"C{p[1]}" for p in pairs], rotation=45
    )
    ax.set_ylim(0.9, 3.1)
    ax.set_ylabel("cluster risk value")
    ax.set_title("Cluster risk values (sorted)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_decisions(reads: Sequence[ReadEvaluation], path) -> None:
    """Per-read overall policy risk, colored by the combined decision."""
    colors = {"permit": "#4c9f70", "deny": "#c0392b", "escalate": "#f4a942"}
    fig, ax = plt.subplots(figsize=(7, 4))
    for verdict in ("permit", "deny", "escalate"):
        xs = [i for i, r in enumerate(reads) if r.combined.value == verdict]
        ys = [reads[i].breakdown.r_overall for i in xs]
        if xs:
            ax.scatter(xs, ys, s=8, label=verdict, color=colors[verdict])
    ax.set_xlabel("read (chronological)")
    ax.set_ylabel("policy risk")
    ax.set_title("Per-read policy risk and combined decision")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(result: PipelineResult, out_dir) -> list[Path]:
    """Render the full report into ``out_dir`` and list what was written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def track(path):
        written.append(Path(path))
        return path

    crv, level = dataset_risk(result.cluster_vectors)
    export_cluster_table(result.summaries, track(out / "clusters.csv"), crv, level)
    export_read_decisions(result.reads, track(out / "read_decisions.csv"))
    export_consistency(result.consistency, track(out / "consistency.csv"))
    for flavor, vectors in result.vectors.items():
        export_features(vectors, track(out / f"features_{flavor.value}.csv"))
    matrices = out / "couplings"
    matrices.mkdir(exist_ok=True)
    for matrix in result.bundle.matrices.values():
        save_matrix(matrix, track(matrices / f"{matrix.name}.csv"), values="normalized")

    plot_cluster_risk(result.summaries, track(out / "cluster_risk.png"))
    plot_risk_values(result.summaries, track(out / "risk_values.png"))
    plot_decisions(result.reads, track(out / "read_decisions.png"))
    return written
