"""Matplotlib rendering of the report's figure data.

Renders the same data the delimited files carry: PCK threshold curves, the
ICC heatmap, and the median-error radar. Files are written next to the
tables so a report directory is self-contained.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import PckCurve  # noqa: E402
from .report import EvaluationReport  # noqa: E402

_SAVEFIG = {"dpi": 150, "bbox_inches": "tight"}


def render_pck_curves(curve: PckCurve, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    thresholds = list(curve.thresholds_mm)
    for name, fracs in curve.per_landmark.items():
        ax.plot(thresholds, [100 * f for f in fracs], marker="o", ms=3,
                lw=1.2, label=name.value)
    ax.plot(thresholds, [100 * f for f in curve.overall], color="black",
            lw=2.2, label="overall")
    ax.set_xlabel("distance threshold (mm)")
    ax.set_ylabel("keypoints within threshold (%)")
    ax.set_ylim(0, 105)
    ax.set_xticks(thresholds)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, ncol=2)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path


def render_icc_heatmap(rows: Sequence[Mapping[str, object]], path: Path) -> Path:
    pairs = sorted({(str(r["rater_a"]), str(r["rater_b"])) for r in rows})
    parameters: List[str] = []
    for row in rows:
        if row["parameter"] not in parameters:
            parameters.append(str(row["parameter"]))
    grid = np.full((len(pairs), len(parameters)), np.nan)
    lookup: Dict[tuple, Optional[float]] = {
        (str(r["rater_a"]), str(r["rater_b"]), str(r["parameter"])):
            (None if r["icc"] is None else float(r["icc"]))  # type: ignore[arg-type]
        for r in rows}
    for i, (ra, rb) in enumerate(pairs):
        for j, param in enumerate(parameters):
            value = lookup.get((ra, rb, param))
            if value is not None:
                grid[i, j] = value

    fig, ax = plt.subplots(figsize=(1.2 * len(parameters) + 2,
                                    0.8 * len(pairs) + 2))
    image = ax.imshow(grid, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(parameters)), parameters)
    ax.set_yticks(range(len(pairs)), [f"{a} vs {b}" for a, b in pairs])
    for i in range(len(pairs)):
        for j in range(len(parameters)):
            value = grid[i, j]
            text = "n/a" if math.isnan(value) else f"{value:.2f}"
            ax.text(j, i, text, ha="center", va="center", fontsize=8,
                    color="white" if (math.isnan(value) or value < 0.6)
                    else "black")
    fig.colorbar(image, ax=ax, label="ICC")
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path


def render_radar(rows: Sequence[Mapping[str, object]], path: Path) -> Path:
    sources: List[str] = []
    parameters: List[str] = []
    for row in rows:
        if row["source"] not in sources:
            sources.append(str(row["source"]))
        if row["parameter"] not in parameters:
            parameters.append(str(row["parameter"]))
    angles = [2 * math.pi * i / len(parameters) for i in range(len(parameters))]

    fig, ax = plt.subplots(figsize=(6, 6), subplot_kw={"projection": "polar"})
    for source in sources:
        values = []
        for param in parameters:
            match = [float(r["median_error"]) for r in rows  # type: ignore[arg-type]
                     if r["source"] == source and r["parameter"] == param]
            values.append(match[0] if match else 0.0)
        ax.plot(angles + angles[:1], values + values[:1], marker="o", ms=3,
                lw=1.5, label=source)
        ax.fill(angles + angles[:1], values + values[:1], alpha=0.15)
    ax.set_xticks(angles, parameters)
    ax.set_title("median absolute error by parameter")
    ax.legend(loc="upper right", bbox_to_anchor=(1.25, 1.1), fontsize=8)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return path


def render_report_figures(report: EvaluationReport, outdir: Path) -> List[Path]:
    """Render every figure the report has data for; return written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if report.pck is not None:
        written.append(render_pck_curves(report.pck, outdir / "pck_curves.png"))
    if report.icc_rows:
        written.append(render_icc_heatmap(report.icc_rows,
                                          outdir / "icc_heatmap.png"))
    if report.radar_rows:
        written.append(render_radar(report.radar_rows,
                                    outdir / "radar_medians.png"))
    return written
