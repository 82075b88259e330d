"""PNG figures for pipeline runs (matplotlib, Agg backend, byte-stable output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

# no timestamp or version string in the files
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, format="png", dpi=110, metadata=_META)
    plt.close(fig)


def plot_map(grid, path, title=""):
    """Letter map as colored cells, row 1 at the bottom."""
    states = list(grid.colors)
    lut = {s: i for i, s in enumerate(states)}
    idx = np.vectorize(lut.get)(grid.cells) if grid.cells.size else np.zeros((1, 1))
    cmap = ListedColormap([np.array(grid.colors[s]) / 255.0 for s in states])
    h, w = grid.shape
    fig, ax = plt.subplots(figsize=(min(12, 2 + 0.18 * w), min(12, 2 + 0.18 * h)))
    ax.imshow(idx, cmap=cmap, vmin=-0.5, vmax=len(states) - 0.5, origin="lower",
              interpolation="nearest", extent=(0.5, w + 0.5, 0.5, h + 0.5))
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    ax.set_title(title)
    _save(fig, path)


def plot_histogram(shape, path):
    lows = [b[0] for b in shape.bins]
    widths = [b[1] - b[0] for b in shape.bins]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(lows, shape.counts, width=widths, align="edge", color="#4477aa", edgecolor="white")
    ax.set_xlabel("distance to fabric (mm)")
    ax.set_ylabel("samples")
    ax.set_title(f"shape error: mean {shape.mean:.2f}, RMS {shape.rms:.2f}, max {shape.max:.2f} mm")
    _save(fig, path)


def plot_fabric(positions, graph, target=None, path="fabric.png"):
    """Relaxed fabric edges in 3D, optionally over the target's vertices."""
    P = np.asarray(positions, float)
    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    if target is not None:
        V = target.vertices
        ax.scatter(V[:, 0], V[:, 1], V[:, 2], s=0.3, c="#bbbbbb")
    for e in graph.edges:
        a, b = P[e.a], P[e.b]
        ax.plot(*zip(a, b), lw=0.5, c="#cc6677" if e.kind == "weft" else "#117733")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    ax.set_title("relaxed fabric")
    _save(fig, path)


def plot_thread_lengths(report, path):
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5))
    a1.bar(np.arange(1, len(report["warp_error"]) + 1), report["warp_error"], color="#117733")
    a1.set_ylabel("warp error (mm)")
    a2.bar(np.arange(1, len(report["weft_error"]) + 1), report["weft_error"], color="#cc6677")
    a2.set_ylabel("weft error (mm)")
    a2.set_xlabel("warp / row index")
    a1.set_title("measured minus demanded thread length")
    fig.tight_layout()
    _save(fig, path)
