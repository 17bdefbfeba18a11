"""File outputs for a stored analysis: a delimited score table and a chart.

Both artifacts are written side by side so a reviewer can drop them into a
spreadsheet or a slide without re-running anything.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # file rendering only, no display server
import matplotlib.pyplot as plt

from .analysis import ReportAnalysis
from .prompts import CATEGORY_BY_INDEX

CATEGORY_LABELS = {
    "Governance": "Governance",
    "Strategy": "Strategy",
    "RiskManagement": "Risk Management",
    "MetricsTargets": "Metrics and Targets",
}


def write_scores_csv(analysis: ReportAnalysis, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["question", "category", "score", "analysis_words", "answer_sources"])
        for index in sorted(analysis.conformity):
            result = analysis.conformity[index]
            answer = analysis.answers.get(index)
            writer.writerow(
                [
                    index,
                    CATEGORY_LABELS[CATEGORY_BY_INDEX[index]],
                    result.score,
                    len(result.analysis.split()),
                    " ".join(str(s) for s in answer.cited_sources) if answer else "",
                ]
            )
        writer.writerow(["average", "", "" if analysis.average_score is None else analysis.average_score, "", ""])


def write_scores_figure(analysis: ReportAnalysis, path: str | Path) -> None:
    indexes = sorted(analysis.conformity)
    scores = [analysis.conformity[i].score for i in indexes]

    fig, ax = plt.subplots(figsize=(9, 4.5))
    colors = {
        "Governance": "#4c72b0",
        "Strategy": "#55a868",
        "RiskManagement": "#c44e52",
        "MetricsTargets": "#8172b3",
    }
    bar_colors = [colors[CATEGORY_BY_INDEX[i]] for i in indexes]
    ax.bar([str(i) for i in indexes], scores, color=bar_colors)
    if analysis.average_score is not None:
        ax.axhline(analysis.average_score, color="#333333", linestyle="--", linewidth=1)
        ax.annotate(
            f"average {analysis.average_score:.2f}",
            xy=(0.99, analysis.average_score),
            xycoords=("axes fraction", "data"),
            ha="right",
            va="bottom",
            fontsize=9,
        )
    ax.set_ylim(0, 100)
    ax.set_xlabel("Question")
    ax.set_ylabel("Conformity score")
    title = analysis.basic_info.company_name
    ax.set_title(f"Disclosure conformity by question ({title})" if title != "unknown" else "Disclosure conformity by question")
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in colors.values()]
    ax.legend(handles, [CATEGORY_LABELS[k] for k in colors], fontsize=8, loc="upper right", framealpha=0.9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(analysis: ReportAnalysis, out_dir: str | Path) -> tuple[Path, Path]:
    """Write scores.csv and scores.png into out_dir; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "scores.csv"
    png_path = out_dir / "scores.png"
    write_scores_csv(analysis, csv_path)
    write_scores_figure(analysis, png_path)
    return csv_path, png_path
