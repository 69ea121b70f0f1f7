"""Matplotlib rendering for the CLI report path.

Every renderer writes PNG files next to the delimited artifacts and returns
the written paths. The Agg backend is forced so runs work headless; nothing
here opens a window.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import RunConfig, RunRecord, SpiralSweepResult, SweepCell
from .landscapes import (
    NearOriginError,
    QuadraticSpec,
    SpiralSpec,
    quadratic_eval,
    spiral_eval,
)

__all__ = [
    "render_run_figures",
    "render_grid_figure",
    "render_spiral_figure",
]

_DPI = 130

_REGION_COLORS = {"aligned": "tab:green", "misaligned": "tab:red", "mixed": "tab:gray"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def _loss_figure(record: RunRecord, out_dir: Path) -> Path | None:
    rows = record.rows
    if not rows:
        return None
    steps = [r.step for r in rows]
    losses = [r.loss for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(steps, losses, lw=1.2)
    if min(losses) > 0.0:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    return _save(fig, out_dir / "loss.png")


def _scalar_loss(landscape, xy) -> float:
    if isinstance(landscape, QuadraticSpec):
        return quadratic_eval(landscape, xy)[0]
    return spiral_eval(landscape, xy)[0]


def _trajectory_figure(cfg: RunConfig, record: RunRecord, out_dir: Path) -> Path | None:
    traj = record.trajectory
    if traj is None:
        return None
    pts = np.array([[p[0].flat[0], p[0].flat[1]] for p in traj if p[0].size == 2])
    if pts.shape[0] < 2:
        return None
    land = cfg.landscape
    fig, ax = plt.subplots(figsize=(6.0, 5.2))
    if isinstance(land, (QuadraticSpec, SpiralSpec)):
        # contour window padded around the visited region
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        pad = 0.15 * float(np.max(hi - lo)) + 1e-6
        xs = np.linspace(lo[0] - pad, hi[0] + pad, 160)
        ys = np.linspace(lo[1] - pad, hi[1] + pad, 160)
        zz = np.empty((ys.size, xs.size))
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                try:
                    zz[i, j] = _scalar_loss(land, np.array([x, y]))
                except NearOriginError:
                    zz[i, j] = math.nan
        levels = 18
        ax.contour(xs, ys, zz, levels=levels, linewidths=0.5, alpha=0.6)
    ax.plot(pts[:, 0], pts[:, 1], lw=0.9, color="tab:blue")
    ax.plot(pts[0, 0], pts[0, 1], "o", color="tab:green", ms=6, label="start")
    ax.plot(pts[-1, 0], pts[-1, 1], "s", color="tab:red", ms=6, label="end")
    ax.set_xlabel("w[0]")
    ax.set_ylabel("w[1]")
    ax.set_title("trajectory")
    ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    return _save(fig, out_dir / "trajectory.png")


def _misalignment_figure(record: RunRecord, out_dir: Path) -> Path | None:
    trace = record.summary.misalignment_norm_trace
    if not trace:
        return None
    steps = [s for s, _ in trace]
    norms = [v for _, v in trace]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(steps, norms, lw=1.2, color="tab:purple")
    ax.set_xlabel("step")
    ax.set_ylabel("(1,1)-norm of rotated Hessian")
    ax.set_title("misalignment trace")
    ax.grid(True, alpha=0.3)
    return _save(fig, out_dir / "misalignment.png")


def render_run_figures(cfg: RunConfig, record: RunRecord, out_dir: str | Path) -> list[Path]:
    """Loss curve, plus trajectory and misalignment plots when available."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for maybe in (
        _loss_figure(record, out),
        _trajectory_figure(cfg, record, out),
        _misalignment_figure(record, out),
    ):
        if maybe is not None:
            written.append(maybe)
    return written


def render_grid_figure(cells: tuple[SweepCell, ...], out_dir: str | Path) -> list[Path]:
    """Horizontal bars of iterations-to-threshold (falls back to final loss)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not cells:
        return []
    labels = [
        ", ".join(f"{k}={v}" for k, v in cell.overrides) or "base" for cell in cells
    ]
    iters = [c.record.summary.iterations_to_threshold for c in cells]
    use_iters = any(v is not None for v in iters)
    if use_iters:
        values = [v if v is not None else math.nan for v in iters]
        xlabel = "iterations to threshold"
    else:
        values = [c.record.summary.final_loss for c in cells]
        xlabel = "final loss"
    height = max(2.4, 0.42 * len(cells) + 1.2)
    fig, ax = plt.subplots(figsize=(7.2, height))
    ypos = np.arange(len(cells))
    ax.barh(ypos, values, color="tab:blue", alpha=0.85)
    for y, v in zip(ypos, values):
        if math.isnan(v):
            ax.text(0, y, " not reached", va="center", fontsize=8, color="tab:red")
    ax.set_yticks(ypos)
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel(xlabel)
    ax.set_title("sweep cells")
    path = _save(fig, out / "sweep.png")
    return [path]


def render_spiral_figure(result: SpiralSweepResult, out_dir: str | Path) -> list[Path]:
    """Slowdown ratio against probe angle, colored by region label."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not result.probes:
        return []
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    for label, color in _REGION_COLORS.items():
        angles = [p.angle_deg for p in result.probes if p.label == label]
        ratios = [p.ratio for p in result.probes if p.label == label]
        if angles:
            ax.scatter(angles, ratios, s=14, color=color, alpha=0.75, label=label)
    for mean, color, name in (
        (result.aligned_mean, "tab:green", "aligned mean"),
        (result.misaligned_mean, "tab:red", "misaligned mean"),
    ):
        if mean is not None:
            ax.axhline(mean, color=color, lw=1.0, ls="--", alpha=0.8, label=name)
    ax.set_xlabel("probe angle (degrees)")
    ax.set_ylabel("slowdown ratio T_delay / T_no-delay")
    ax.set_title("delay slowdown by region")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    path = _save(fig, out / "probes.png")
    return [path]
