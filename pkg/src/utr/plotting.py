"""Static figures written next to the CSV outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}
KIND_COLORS = {"dt": "#7f7f7f", "udt": "#1f77b4", "udc": "#d62728"}
# no timestamp/software chunks, so identical data gives identical PNG bytes
PNG_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)


def moving_average(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if window <= 1 or x.size < window:
        return x
    c = np.cumsum(np.r_[0.0, x])
    return (c[window:] - c[:-window]) / window


def plot_loss_curve(metrics: list[dict], path, title: str = "training loss", window: int = 20) -> None:
    steps = np.array([m["step"] for m in metrics])
    loss = np.array([m["loss"] for m in metrics])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(steps, loss, lw=0.6, alpha=0.4, color="0.4", label="per step")
        if loss.size >= window:
            ax.plot(steps[window - 1:], moving_average(loss, window), lw=1.5, color="C3",
                    label=f"{window}-step mean")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_title(title)
        ax.legend()
        _save(fig, path)


def plot_eval(report, path, title: str = "return-conditioned evaluation") -> None:
    labels = [f"{m:g}x" for m in report.multipliers]
    scores = np.array(report.norm_scores)
    colors = ["C3" if i == report.best_index else "C0" for i in range(len(scores))]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(labels, scores, color=colors)
        ax.axhline(100.0, ls="--", lw=0.8, color="k")
        ax.set_xlabel("target RTG (multiple of expert return)")
        ax.set_ylabel("normalized score")
        ax.set_title(title)
        _save(fig, path)


def plot_complexity(report, path) -> None:
    """Side-by-side bars of time, FLOPs and params, each relative to the first kind."""
    metrics = (("time_s", report.time_s), ("flops", report.flops), ("params", report.params))
    kinds = report.kinds
    base = kinds[0]
    x = np.arange(len(metrics))
    width = 0.8 / len(kinds)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for j, k in enumerate(kinds):
            rel = [vals[k] / vals[base] if vals[base] else 0.0 for _, vals in metrics]
            ax.bar(x + (j - (len(kinds) - 1) / 2) * width, rel, width,
                   label=k.upper(), color=KIND_COLORS.get(k))
        ax.set_xticks(x, [m for m, _ in metrics])
        ax.set_ylabel(f"relative to {base.upper()}")
        ax.legend()
        _save(fig, path)


def plot_rademacher(rows: list[dict], path) -> None:
    rho = np.array([r["rho"] for r in rows])
    order = np.argsort(rho, kind="stable")
    emp_ratio = np.array([r["emp_merged"] / r["emp_sep"] if r["emp_sep"] else np.nan for r in rows])
    bound = np.array([r["ratio_bound"] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(rho[order], bound[order], "o-", label="trace-bound ratio")
        ax.plot(rho[order], emp_ratio[order], "s--", label="Monte-Carlo ratio")
        ax.set_xlabel(r"cross-block correlation $\rho$")
        ax.set_ylabel("merged / separated")
        ax.set_ylim(0, 1)
        ax.legend()
        _save(fig, path)
