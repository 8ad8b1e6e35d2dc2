import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from loguru import logger  # noqa: E402

from fcmvc.models import ExperimentResult, MetricReport, ScaleResult  # noqa: E402

METRICS = ("acc", "nmi", "purity", "fscore")


def save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=130, bbox_inches="tight", facecolor="white", edgecolor="none")
    plt.close(fig)
    logger.bind(path=path).debug("figure saved")
    return path


def plot_ratio_curves(result: ExperimentResult, path: str) -> str:
    """Mean metric against missing ratio, one line per method, std as a band."""
    fig, axes = plt.subplots(1, len(METRICS), figsize=(4 * len(METRICS), 3.2), sharex=True)
    methods = list(dict.fromkeys(s.method for s in result.summary))
    for ax, metric in zip(axes, METRICS):
        for method in methods:
            rows = sorted((s for s in result.summary if s.method == method), key=lambda s: s.ratio)
            x = np.array([s.ratio for s in rows])
            mean = np.array([getattr(s.mean, metric) for s in rows])
            std = np.array([getattr(s.std, metric) for s in rows])
            ax.plot(x, mean, marker="o", label=method)
            ax.fill_between(x, mean - std, mean + std, alpha=0.2)
        ax.set_title(metric.upper())
        ax.set_xlabel("missing ratio")
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    return save(fig, path)


def plot_order_bars(orders: list[str], reports: list[MetricReport], path: str) -> str:
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(orders) + 2), 3.2))
    x = np.arange(len(orders))
    width = 0.8 / len(METRICS)
    for i, metric in enumerate(METRICS):
        ax.bar(x + i * width, [getattr(r, metric) for r in reports], width, label=metric.upper())
    ax.set_xticks(x + 0.4 - width / 2, orders, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1.02)
    ax.set_ylabel("score")
    ax.legend(fontsize=8, ncol=len(METRICS))
    return save(fig, path)


def plot_scaling(result: ScaleResult, path: str) -> str:
    n = np.array([p.n for p in result.points], dtype=float)
    t = np.array([p.seconds_per_iter for p in result.points])
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.loglog(n, t, marker="o", label=f"measured (slope {result.slope:.2f})")
    ax.loglog(n, t[0] * n / n[0], linestyle="--", color="grey", label="linear")
    ax.set_xlabel("samples n")
    ax.set_ylabel("seconds per iteration")
    ax.set_title(f"k={result.k}, d={result.d}")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    return save(fig, path)
