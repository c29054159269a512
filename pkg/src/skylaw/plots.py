"""Figure emission for the report path: heatmaps, curves, path overlays.

All figures are rendered headless to PNG with fixed metadata so that
identical inputs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grids import ScalarGrid3D

_SAVE_KWARGS = {"dpi": 110, "metadata": {"Software": "skylaw"}}


def save_grid_slices(
    grid: ScalarGrid3D,
    altitudes,
    out_dir: str | Path,
    stem: str,
    cmap: str = "viridis",
) -> list[Path]:
    """One heatmap per requested altitude, interpolated from the grid."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (x0, x1), (y0, y1), _ = grid.spec.bounds
    xs, ys, _ = grid.spec.axes
    written = []
    for altitude in altitudes:
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(altitude))])
        values = grid.interpolate_many(pts).reshape(len(ys), len(xs))
        fig, ax = plt.subplots(figsize=(5.0, 4.2))
        image = ax.imshow(
            values, origin="lower", extent=(x0, x1, y0, y1), cmap=cmap, aspect="equal"
        )
        fig.colorbar(image, ax=ax, shrink=0.85)
        ax.set_xlabel("easting [m]")
        ax.set_ylabel("northing [m]")
        ax.set_title(f"{stem} at {altitude:g} m")
        path = out_dir / f"{stem}_z{altitude:g}.png"
        fig.savefig(path, **_SAVE_KWARGS)
        plt.close(fig)
        written.append(path)
    return written


def save_rejection_curve(
    thresholds: np.ndarray, rates: np.ndarray, out_path: str | Path, label: str | None = None
) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.plot(thresholds, rates, lw=1.8, label=label)
    ax.set_xlabel("clearance threshold")
    ax.set_ylabel("rejection rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    if label:
        ax.legend(loc="lower right")
    fig.savefig(out_path, **_SAVE_KWARGS)
    plt.close(fig)
    return out_path


def save_path_overlay(
    paths: list[tuple[np.ndarray, float]],
    threshold: float,
    out_path: str | Path,
    bounds=None,
) -> Path:
    """Top-down path overlay, blue for score >= threshold, red below."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.0, 4.6))
    for waypoints, score in paths:
        color = "tab:blue" if score >= threshold else "tab:red"
        ax.plot(waypoints[:, 0], waypoints[:, 1], color=color, lw=1.5, alpha=0.9)
    if bounds is not None:
        (x0, x1), (y0, y1) = bounds[0], bounds[1]
        ax.set_xlim(x0, x1)
        ax.set_ylim(y0, y1)
    ax.set_xlabel("easting [m]")
    ax.set_ylabel("northing [m]")
    ax.set_aspect("equal")
    ax.set_title(f"paths (blue: clearance >= {threshold:g})")
    fig.savefig(out_path, **_SAVE_KWARGS)
    plt.close(fig)
    return out_path
