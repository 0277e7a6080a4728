"""Figures for scenario and preset runs, written to image files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, Polygon  # noqa: E402

from dhocbf.dynamics import obstacle_state_at  # noqa: E402
from dhocbf.geometry import rect_corners  # noqa: E402
from dhocbf.simulator import reference_positions  # noqa: E402

MODE_STYLE = {"hocbf": dict(color="tab:orange", ls="--"), "dhocbf": dict(color="tab:blue", ls="-")}

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "legend.fontsize": 8,
        "figure.dpi": 110,
    }
)


def _style(mode):
    return MODE_STYLE.get(mode, dict(color="tab:green", ls="-"))


def plot_distances(runs, path, title=""):
    """Minimum surface distance over time, one line per run."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for run in runs:
        t = [r.t for r in run.trace]
        d = [r.min_distance for r in run.trace]
        if all(math.isinf(v) for v in d):
            continue
        ax.plot(t, d, label=f"{run.label} {run.mode}", **_style(run.mode), lw=1.2)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("distance to obstacles [m]")
    if title:
        ax.set_title(title)
    if ax.lines:
        ax.legend(loc="best", ncol=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def _draw_obstacles(ax, scenario, times, n_ghosts=6):
    if not times:
        return
    picks = [times[int(i * (len(times) - 1) / max(n_ghosts - 1, 1))] for i in range(n_ghosts)]
    for j, t in enumerate(picks):
        alpha = 0.15 + 0.6 * j / max(n_ghosts - 1, 1)
        for p in scenario.obstacles:
            o = obstacle_state_at(p, t)
            if o.shape.kind == "rectangle":
                patch = Polygon(rect_corners(o.placed().box()), closed=True, fc="grey", ec="k", alpha=alpha, lw=0.5)
            else:
                patch = Circle(o.position, max(o.shape.radius, 0.1), fc="grey", ec="k", alpha=alpha, lw=0.5)
            ax.add_patch(patch)


def plot_trajectories(runs, path, title=""):
    """Ego paths of each run over the reference and the obstacle motion of the first run."""
    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    if runs:
        first = runs[0]
        times = [r.t for r in first.trace]
        ref = reference_positions(first.scenario, times)
        if ref is not None:
            ax.plot(ref[:, 0], ref[:, 1], color="k", lw=0.8, ls=":", label="reference")
        _draw_obstacles(ax, first.scenario, times)
    for run in runs:
        xs = [r.ego.x for r in run.trace]
        ys = [r.ego.y for r in run.trace]
        ax.plot(xs, ys, label=f"{run.label} {run.mode}", **_style(run.mode), lw=1.2)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", ncol=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def preset_figures(result, outdir):
    """Distance and trajectory figures for every scenario label of a preset run."""
    outdir = Path(outdir)
    written = []
    labels = []
    for r in result.runs:
        if r.label not in labels:
            labels.append(r.label)
    for label in labels:
        runs = [r for r in result.runs if r.label == label]
        stem = f"{result.name}_{label}"
        written.append(plot_distances(runs, outdir / f"{stem}_distance.png", f"{result.name}: {label}"))
        written.append(plot_trajectories(runs, outdir / f"{stem}_trajectory.png", f"{result.name}: {label}"))
    return written
