"""
Export service: report / density CSVs, the per-neuron density figure and the
comparison table.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from src.models.params import TrainReport, UgmmLayerParams
from src.services import ugmm_service

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

COMPARISON_COLUMNS = ["Dataset", "Model", "Test Accuracy (%)", "Training Loss"]

SVG_WIDTH = 720
SVG_HEIGHT = 440
SVG_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def write_report_csv(report: TrainReport, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(path, index=False)
    return path


def density_table(params: UgmmLayerParams, neuron: int, grid: Sequence[float]) -> pd.DataFrame:
    """
    One row per grid point: y, each weighted component pi_k N(y; mu_k, sigma_k^2),
    and their sum.
    """
    grid = np.asarray(grid, dtype=np.float64)
    components = ugmm_service.component_densities(params, neuron, grid)
    frame = pd.DataFrame(components, columns=[f"component_{k}" for k in range(components.shape[1])])
    frame.insert(0, "y", grid)
    frame["total"] = components.sum(axis=1)
    return frame


def write_density_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def density_figure(frame: pd.DataFrame, title: str) -> go.Figure:
    """Weighted components as thin dashed lines, the mixture as a solid black line."""
    fig = go.Figure()
    for col in _component_columns(frame):
        fig.add_trace(
            go.Scatter(x=frame["y"], y=frame[col], mode="lines", name=col, line=dict(width=1.5, dash="dash"))
        )
    fig.add_trace(go.Scatter(x=frame["y"], y=frame["total"], mode="lines", name="P(y)", line=dict(color="black", width=2.5)))
    fig.update_layout(
        title=title,
        xaxis_title="y",
        yaxis_title="Density",
        template="plotly_white",
        legend=dict(orientation="h", yanchor="bottom", y=1.02),
    )
    return fig


def _component_columns(frame: pd.DataFrame) -> List[str]:
    return [col for col in frame.columns if col.startswith("component_")]


def _polyline(xs: np.ndarray, ys: np.ndarray, style: str) -> str:
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" {style} points="{points}"/>'


def density_svg(frame: pd.DataFrame, title: str, width: int = SVG_WIDTH, height: int = SVG_HEIGHT) -> str:
    """
    Standalone SVG line plot of a density table: one dashed polyline per
    weighted component and a solid black polyline for their sum.
    """
    left, right, top, bottom = 64, 16, 40, 48
    plot_w, plot_h = width - left - right, height - top - bottom

    y = frame["y"].to_numpy(dtype=np.float64)
    x_lo, x_hi = float(y.min()), float(y.max())
    if not x_hi > x_lo:
        x_hi = x_lo + 1.0
    peak = float(frame["total"].max())
    d_hi = 1.05 * peak if peak > 0.0 else 1.0

    def px(values):
        return left + (np.asarray(values, dtype=np.float64) - x_lo) / (x_hi - x_lo) * plot_w

    def py(values):
        return top + plot_h - np.asarray(values, dtype=np.float64) / d_hi * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="#444"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#444"/>',
    ]
    for value in np.linspace(x_lo, x_hi, 5):
        x = float(px(value))
        parts.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{value:.3g}</text>'
        )
    for value in np.linspace(0.0, d_hi, 5):
        y_pos = float(py(value))
        parts.append(
            f'<text x="{left - 6}" y="{y_pos + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{value:.3g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">y</text>'
    )

    xs = px(y)
    for i, col in enumerate(_component_columns(frame)):
        colour = SVG_PALETTE[i % len(SVG_PALETTE)]
        parts.append(_polyline(xs, py(frame[col]), f'stroke="{colour}" stroke-width="1.2" stroke-dasharray="6 4"'))
    parts.append(_polyline(xs, py(frame["total"]), 'stroke="black" stroke-width="2.2"'))
    parts.append(
        f'<text x="{left + plot_w - 4}" y="{top + 14}" text-anchor="end" font-family="sans-serif" font-size="12">P(y)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_density_plots(frame: pd.DataFrame, stem: PathLike, title: str) -> List[Path]:
    """
    Write `<stem>.html` (interactive plotly figure) and `<stem>.svg`.
    Returns the paths written.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    html_path = stem.with_suffix(".html")
    fig = density_figure(frame, title)
    html_path.write_text(fig.to_html(include_plotlyjs="cdn", full_html=True, div_id="density"), encoding="utf-8")

    svg_path = stem.with_suffix(".svg")
    svg_path.write_text(density_svg(frame, title), encoding="utf-8")
    log.info(f"Density plots written to {html_path} and {svg_path}")
    return [html_path, svg_path]


def comparison_table(rows: List[Dict[str, object]]) -> pd.DataFrame:
    """Rows with dataset, model, accuracy (fraction) and loss name."""
    frame = pd.DataFrame(
        [
            {
                "Dataset": row["dataset"],
                "Model": row["model"],
                "Test Accuracy (%)": f"{100.0 * float(row['accuracy']):.2f}",
                "Training Loss": row["loss"],
            }
            for row in rows
        ],
        columns=COMPARISON_COLUMNS,
    )
    return frame


def format_table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False)
