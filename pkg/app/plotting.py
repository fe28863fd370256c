# app/plotting.py

"""
Static SVG charts: learning curves overlaid across runs, and (x, y) paths for the 2-D tasks.
"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Stable element ids so re-plotting the same curves gives byte-identical files.
matplotlib.rcParams['svg.hashsalt'] = 'hilonet'

CURVE_METRICS = (
    ('mean_return', 'Mean evaluation return'),
    ('success_rate', 'Success rate'),
    ('mean_length', 'Mean episode length'),
)
TWO_D_ENVIRONMENTS = ('pointnav', 'cyclepattern')


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logging.info(f"Wrote {path}")
    return path


def plot_curves(curves, out_dir, prefix='curve'):
    """
    Draw one chart per metric, each overlaying every run.

    Args:
        curves (dict): Run name (legend label) -> LearningCurve.
        out_dir (str or Path): Directory receiving ``<prefix>_<metric>.svg``.

    Returns:
        list of Path: The written files, in ``CURVE_METRICS`` order.
    """
    if not curves:
        raise ValueError("plot_curves needs at least one curve")
    written = []
    for metric, title in CURVE_METRICS:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for name, curve in curves.items():
            x = [p.env_steps for p in curve.points]
            y = [getattr(p, metric) for p in curve.points]
            ax.plot(x, y, label=name, linewidth=1.2, marker='.')
        ax.set_title(title)
        ax.set_xlabel('Environment steps')
        if metric == 'success_rate':
            ax.set_ylim(-0.05, 1.05)
        ax.grid(True, alpha=0.25)
        ax.legend(loc='best', fontsize=8, frameon=False)
        fig.tight_layout()
        written.append(_save(fig, Path(out_dir) / f"{prefix}_{metric}.svg"))
    return written


def plot_trajectories(paths, out_path, title='Trajectories', markers=None, region=None):
    """
    Draw (x, y) paths taken from the first two observation components.

    Args:
        paths (list of array-like): Each of shape (T, >=2).
        out_path (str or Path): SVG destination.
        markers (array-like, optional): Points to highlight (goal or waypoints).
        region (tuple, optional): ``(center, radius)`` circle drawn around the goal.
    """
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    for path in paths:
        path = np.asarray(path, dtype=np.float64)
        ax.plot(path[:, 0], path[:, 1], linewidth=0.8, alpha=0.7)
        ax.plot(path[0, 0], path[0, 1], 'o', color='tab:green', markersize=3)
        ax.plot(path[-1, 0], path[-1, 1], 'x', color='tab:red', markersize=4)
    if markers is not None:
        markers = np.atleast_2d(np.asarray(markers, dtype=np.float64))
        ax.plot(markers[:, 0], markers[:, 1], '*', color='black', markersize=10)
    if region is not None:
        center, radius = region
        ax.add_patch(plt.Circle(tuple(center), radius, fill=False, linestyle='--', color='black'))
    ax.set_aspect('equal')
    ax.set_title(title)
    ax.set_xlabel('x')
    ax.set_ylabel('y')
    ax.grid(True, alpha=0.25)
    fig.tight_layout()
    return _save(fig, out_path)
