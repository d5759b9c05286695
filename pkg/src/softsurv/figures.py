"""Figure rendering for the CLI report paths.

Everything draws through the Agg backend to files; nothing here opens a
display.  Figures are companions to the delimited outputs, never the only
artifact.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["survival_figure", "benchmark_figure"]


def survival_figure(times, curves, path, mode: str = "unit") -> str:
    """Survival curves with 95% bands, one line per subject.

    ``curves`` is a list of (mean, lower, upper) triples over ``times``.
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i, (mean, lower, upper) in enumerate(curves):
        (line,) = ax.step(times, mean, where="post", label=f"subject {i + 1}")
        ax.fill_between(
            times, lower, upper, step="post", alpha=0.15, color=line.get_color()
        )
    ax.set_xlabel("time")
    ax.set_ylabel("survival probability")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(f"posterior predictive survival ({mode} frailty)")
    if len(curves) <= 8:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def benchmark_figure(report, path) -> str:
    """Per-replicate RMSEs with the run mean and published reference lines."""
    from .simbench import REFERENCE_RMSE

    fig, ax = plt.subplots(figsize=(7, 4.5))
    r = np.arange(len(report.rmses))
    ax.plot(r, report.rmses, "o", color="tab:blue", label="replicate RMSE")
    ax.axhline(report.mean, color="tab:blue", lw=1.5, label=f"mean {report.mean:.4f}")
    ref = REFERENCE_RMSE["proposed"][report.config.setting]
    if ref is not None:
        ax.axhline(ref, color="tab:red", ls="--", lw=1.2, label=f"reference {ref:.4f}")
    ax.set_xlabel("replicate")
    ax.set_ylabel("RMSE")
    ax.set_title(f"setting {report.config.setting} benchmark")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
