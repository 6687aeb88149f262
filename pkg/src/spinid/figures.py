"""Figure rendering for the CLI report path.

Every helper takes data already computed elsewhere and writes a PNG next to
the delimited output; nothing here feeds back into the numerics.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def profile_figure(s, y, path, title=None):
    """2x2 panel of the state profile (u, N, T, epsdot) over arclength."""
    fig, axes = plt.subplots(2, 2, figsize=(8.0, 6.0), sharex=True)
    labels = ("velocity u", "traction N", "temperature T", "strain rate")
    for ax, row, label in zip(axes.ravel(), np.atleast_2d(y), labels):
        ax.plot(s, np.real(row), lw=1.2)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("arclength s")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fit_figure(series_list, fits, setup, path, solutions=None):
    """Measured diameters, their ansatz fits, and (optionally) simulated
    profiles, one panel per experiment, all dimensionless."""
    from .bvp import evaluate
    from .data import d_fit

    n = len(series_list)
    ncols = min(n, 3)
    nrows = -(-n // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.0 * ncols, 3.2 * nrows),
                             squeeze=False)
    for idx, (series, fit) in enumerate(zip(series_list, fits)):
        ax = axes[idx // ncols][idx % ncols]
        ax.semilogy(series.s, series.d, "o", ms=3, label="measured")
        s_fine = np.linspace(series.s[0], series.s[-1], 200)
        ax.semilogy(s_fine, d_fit(fit, s_fine), "-", lw=1.2, label="ansatz")
        if solutions is not None and series.experiment in solutions:
            sol = solutions[series.experiment]
            exp = setup.experiment(series.experiment)
            s_sim = np.linspace(0.0, exp.L, 200)
            y_sim, _ = evaluate(sol, s_sim)
            from .spinmodel import diameter

            ax.semilogy(s_sim, np.real(diameter(y_sim[0], y_sim[2],
                                                setup.material, exp.Q)),
                        "--", lw=1.2, label="simulated")
        ax.set_title(series.experiment, fontsize=9)
        ax.grid(alpha=0.3, which="both")
        if idx == 0:
            ax.legend(fontsize=8)
    for idx in range(n, nrows * ncols):
        axes[idx // ncols][idx % ncols].set_axis_off()
    fig.supxlabel("arclength s")
    fig.supylabel("diameter d")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def scan_figure(n_values, kappa_values, cost, path):
    """Heatmap of the objective over the parameter box (log color scale)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    finite = np.isfinite(cost)
    shifted = np.where(finite & (cost > 0.0), cost, np.nan)
    mesh = ax.pcolormesh(kappa_values, n_values, np.log10(shifted),
                         shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10 objective")
    ax.set_xlabel("kappa")
    ax.set_ylabel("n")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def convergence_figure(iterates, path):
    """Objective and gradient norm over trust-region iterations."""
    accepted = [it for it in iterates if it.accepted]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.semilogy([it.iteration for it in accepted],
                 [it.cost for it in accepted], "o-", ms=3)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective")
    ax1.grid(alpha=0.3, which="both")
    ax2.semilogy([it.iteration for it in accepted],
                 [max(it.grad_norm, 1e-300) for it in accepted], "o-", ms=3)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("criticality")
    ax2.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def measurements_figure(series_list, path):
    """Raw SI measurements, one curve per experiment."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for series in series_list:
        ax.semilogy(series.s, series.d, "o-", ms=3, lw=0.8,
                    label=series.experiment)
    ax.set_xlabel("position [m]")
    ax.set_ylabel("diameter [m]")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
