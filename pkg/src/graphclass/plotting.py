"""Report figures.  Rendered off-screen with the Agg canvas; PNGs carry no
timestamp or version metadata so identical inputs give identical files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

GOLDEN = (np.sqrt(5) - 1.0) / 2.0
WIDTH = 6.0
COLORS = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"]

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}


def _figure(height_ratio: float = GOLDEN, width: float = WIDTH):
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width, WIDTH * height_ratio), dpi=100)
        FigureCanvasAgg(fig)
        ax = fig.add_subplot(1, 1, 1)
    return fig, ax


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def _cell_label(lo: int, hi: int, last: bool) -> str:
    if last:
        return f"{lo}+"
    return str(lo) if lo == hi else f"{lo}-{hi}"


def plot_gof(result, path, title: str = "") -> Path:
    """Observed vs expected counts per chi-squared cell."""
    fig, ax = _figure()
    k = len(result.observed)
    x = np.arange(k)
    ax.bar(x - 0.2, result.observed, width=0.4, color=COLORS[0], label="observed")
    ax.bar(x + 0.2, result.expected, width=0.4, color=COLORS[1], label="expected")
    ax.set_xticks(x)
    ax.set_xticklabels([_cell_label(int(lo), int(hi), i == k - 1)
                        for i, (lo, hi) in enumerate(zip(result.lower, result.upper))], rotation=45)
    ax.set_xlabel("degree")
    ax.set_ylabel("nodes")
    if result.inconclusive:
        verdict = "inconclusive"
    else:
        verdict = f"T={result.statistic:.2f}, dof={result.dof}, p={result.p_value:.3g}"
    ax.set_title(f"{title}  ({verdict})" if title else verdict)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_discrepancies(labels, terms: dict[str, np.ndarray], titles: dict[str, str], path, title: str = "") -> Path:
    """Stacked bars of the discrepancy terms for a few candidate labels."""
    fig, ax = _figure(width=1.5 * WIDTH)
    x = np.arange(len(labels))
    bottom = np.zeros(len(labels))
    for c, (name, values) in enumerate(terms.items()):
        v = np.where(np.isfinite(values), values, np.nan)
        ax.bar(x, v, bottom=bottom, color=COLORS[c % len(COLORS)], label=titles.get(name, name))
        bottom = bottom + np.nan_to_num(v)
    ax.set_xticks(x)
    ax.set_xticklabels([str(lab) for lab in labels])
    ax.set_xlabel("label")
    ax.set_ylabel("discrepancy")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, loc="upper left", bbox_to_anchor=(1.0, 1.0))
    return _save(fig, path)


def plot_confusion(C: np.ndarray, path, title: str = "") -> Path:
    fig, ax = _figure(height_ratio=0.85)
    im = ax.imshow(C, cmap="Blues", interpolation="nearest")
    fig.colorbar(im, ax=ax, fraction=0.046)
    K = C.shape[0]
    if K <= 20:
        ticks = np.arange(K)
        ax.set_xticks(ticks)
        ax.set_yticks(ticks)
        ax.set_xticklabels([str(i + 1) for i in ticks])
        ax.set_yticklabels([str(i + 1) for i in ticks])
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_iterations(scores, changed, path, metric: str = "macro_f1", best: int | None = None) -> Path:
    """Validation score per iteration with the changed-node fraction on a twin axis."""
    fig, ax = _figure()
    t = np.arange(len(scores))
    ax.plot(t, scores, marker="o", color=COLORS[0], label=metric)
    if best is not None:
        ax.axvline(best, color="0.6", linestyle="--", linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel(metric)
    ax.set_xticks(t)
    twin = ax.twinx()
    twin.plot(t[1:], changed, marker="s", color=COLORS[1], label="changed fraction")
    twin.set_ylabel("changed fraction")
    return _save(fig, path)
