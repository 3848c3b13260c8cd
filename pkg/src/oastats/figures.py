"""Matplotlib renderers for the CLI report path.

Each function draws one figure-file next to the CSV it accompanies: the
alpha-sweep of the estimator statistics, the simulation-versus-model
comparison, optimal-weight diagnostics, and the per-block standard-error
summary.  All renderers are headless (Agg) and deterministic.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def alpha_sweep_figure(alphas, reports, path: str | Path) -> Path:
    """Bias, variance and MSE of the weighting scheme across availability."""
    alphas = np.asarray(alphas, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(alphas, [r.bias_sq for r in reports], "o-", label="bias$^2$")
    ax.plot(alphas, [r.variance for r in reports], "s-", label="variance")
    ax.plot(alphas, [r.mse for r in reports], "^-", label="MSE")
    ax.set_xlabel(r"availability $\alpha$")
    ax.set_ylabel("statistic (data units$^2$)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def sim_compare_figure(alphas, model_bias, sim_bias, model_var, sim_var, path) -> Path:
    """Model estimates against simulated bias/variance, one panel each."""
    alphas = np.asarray(alphas, dtype=float)
    fig, (ax_b, ax_v) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    ax_b.plot(alphas, model_bias, "o-", label="model")
    ax_b.plot(alphas, sim_bias, "x--", label="simulation")
    ax_b.set_xlabel(r"availability $\alpha$")
    ax_b.set_ylabel("bias$^2$")
    ax_b.legend()
    ax_b.grid(alpha=0.3)
    ax_v.plot(alphas, model_var, "o-", label="model")
    ax_v.plot(alphas, sim_var, "x--", label="simulation")
    ax_v.set_xlabel(r"availability $\alpha$")
    ax_v.set_ylabel("variance")
    ax_v.legend()
    ax_v.grid(alpha=0.3)
    return _finish(fig, path)


def weights_figure(deviation_sq, beta, path: str | Path, objective: str = "") -> Path:
    """Optimal weights against squared deviation from the spatial mean,
    plus the cumulative weight distribution."""
    deviation_sq = np.asarray(deviation_sq, dtype=float)
    beta = np.asarray(beta, dtype=float)
    fig, (ax_s, ax_c) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    ax_s.plot(deviation_sq, beta, "o", ms=4)
    ax_s.set_xlabel(r"$(\mathrm{E}\,v - \mathrm{E}\,v_i)^2$")
    ax_s.set_ylabel(r"weight $\beta_i$")
    if objective:
        ax_s.set_title(f"objective: {objective}")
    ax_s.grid(alpha=0.3)
    order = np.sort(beta)
    ax_c.step(order, np.arange(1, beta.size + 1) / beta.size, where="post")
    ax_c.set_xlabel(r"weight $\beta_i$")
    ax_c.set_ylabel("cumulative fraction of sites")
    ax_c.grid(alpha=0.3)
    return _finish(fig, path)


def se_blocks_figure(labels, se, mean, stdev, path: str | Path) -> Path:
    """Standard error, mean and temporal standard deviation per time block."""
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.plot(x, se, "o-", label="SE")
    ax.plot(x, stdev, "s-", label="stdev")
    ax.set_xlabel("block")
    ax.set_ylabel("SE / stdev (data units)")
    ax.set_xticks(x, labels, rotation=30, ha="right")
    ax.grid(alpha=0.3)
    ax_mean = ax.twinx()
    ax_mean.plot(x, mean, "^--", color="tab:green", label="mean")
    ax_mean.set_ylabel("mean (data units)")
    lines, names = ax.get_legend_handles_labels()
    lines2, names2 = ax_mean.get_legend_handles_labels()
    ax.legend(lines + lines2, names + names2, loc="best")
    return _finish(fig, path)
