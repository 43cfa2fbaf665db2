"""Report figures written next to the JSON/TSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import FuncFormatter  # noqa: E402

from .capmetrics import METRIC_LABELS  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def _new(width=6.0, height=None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_metric_grid(report, path) -> Path:
    """Grouped bars of m@kIoU, one group per metric, one bar per threshold."""
    metrics = report.config["metrics"]
    ks = report.config["iou_thresholds"]
    fig, ax = _new()
    x = np.arange(len(metrics))
    width = 0.8 / max(1, len(ks))
    for i, k in enumerate(ks):
        vals = [report.values[m][k] for m in metrics]
        bars = ax.bar(x + (i - (len(ks) - 1) / 2) * width, vals, width, label=f"k = {k:g}")
        ax.bar_label(bars, fmt="%.3f", fontsize=7)
    ax.set_xticks(x, [METRIC_LABELS[m] for m in metrics])
    ax.set_ylabel("m@kIoU")
    ax.legend()
    return _save(fig, path)


def plot_iou_histogram(report, path, bins=20) -> Path:
    ious = [r.iou for r in report.rows if r.pred_index is not None]
    fig, ax = _new()
    ax.hist(ious, bins=bins, range=(0.0, 1.0), color="0.4")
    for k in report.config["iou_thresholds"]:
        ax.axvline(k, color="C3", lw=1, ls="--")
    ax.set_xlabel("IoU of matched prediction")
    ax.set_ylabel("GT objects")
    return _save(fig, path)


def plot_word_frequency(stats, path, top=200) -> Path:
    """Percentage share of the ``top`` most frequent words on a log axis."""
    items = stats.word_frequency[:top]
    total = sum(c for _, c in stats.word_frequency) or 1
    fig, ax = _new(width=min(30.0, max(6.0, 0.09 * len(items) + 1)), height=3.2)
    ax.bar(range(len(items)), [100.0 * c / total for _, c in items], color="C0")
    ax.set_xticks(range(len(items)), [w for w, _ in items], rotation=90, fontsize=5)
    if items:
        ax.set_yscale("log")
        plain = FuncFormatter(lambda v, _: f"{v:g}")
        ax.yaxis.set_major_formatter(plain)
        ax.yaxis.set_minor_formatter(plain)
    ax.set_ylabel("frequency (%)")
    ax.set_xlim(-0.6, max(len(items), 1) - 0.4)
    return _save(fig, path)


def plot_sentence_lengths(stats, path) -> Path:
    hist = stats.sentence_length_histogram
    fig, ax = _new()
    if hist:
        lengths = sorted(hist)
        ax.bar(lengths, [hist[n] for n in lengths], width=0.9, color="C2")
    ax.set_xlabel("caption length (tokens)")
    ax.set_ylabel("captions")
    return _save(fig, path)


def plot_bev(grid, path) -> Path:
    """Log point density in the BEV plane (x up, y to the left)."""
    fig, ax = _new(width=5.0, height=5.0)
    x0, x1 = grid.spec.x_range
    y0, y1 = grid.spec.y_range
    # rows are x and columns y; flip so forward points up and left points left
    img = np.log1p(grid.point_count.astype(float))[::-1, ::-1]
    im = ax.imshow(img, extent=(y1, y0, x0, x1), cmap="viridis", aspect="equal")
    ax.set_xlabel("y (m)")
    ax.set_ylabel("x (m)")
    fig.colorbar(im, ax=ax, label="log(1 + points)")
    return _save(fig, path)
