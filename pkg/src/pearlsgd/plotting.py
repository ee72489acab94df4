"""Figures for CLI reports. Rendered off-screen to PNG files."""
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_error_curves(trajectories, labels, path, title=None):
    """Mean relative error per communication round, with a one-std band."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for traj, label in zip(trajectories, labels):
        p = traj.rounds
        mean, std = traj.rel_error, traj.rel_error_std
        line, = ax.semilogy(p, mean, label=label)
        if np.any(std > 0):
            lo = np.clip(mean - std, np.finfo(float).tiny, None)
            ax.fill_between(p, lo, mean + std, color=line.get_color(), alpha=0.2)
    ax.set_xlabel("communication round p")
    ax.set_ylabel("relative error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_heatmap(grid, gammas, taus, path, title=None):
    """log10 relative error over (gamma, tau); diverged cells are left blank."""
    fig, ax = plt.subplots(figsize=(6, 5))
    shown = np.where(np.isfinite(grid), grid, np.nan)
    im = ax.imshow(shown, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xticks(range(len(taus)), [str(t) for t in taus])
    step = max(1, len(gammas) // 10)
    ax.set_yticks(range(0, len(gammas), step), [f"{g:.1e}" for g in gammas[::step]])
    ax.set_xlabel("tau")
    ax.set_ylabel("gamma")
    fig.colorbar(im, ax=ax, label="log10 relative error")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_objectives(traj, path, title=None):
    """Per-player objective values f_i(x_{tau p})."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(traj.n_players):
        ax.plot(traj.rounds, traj.objectives[:, i], label=f"f_{i + 1}")
    ax.set_xlabel("communication round p")
    ax.set_ylabel("objective")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, ncol=math.ceil(traj.n_players / 5))
    return _save(fig, path)
