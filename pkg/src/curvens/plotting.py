"""Figure rendering for CLI reports. Uses the non-interactive Agg backend and
writes PNG files only."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, directory: Path, name: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def xi_sweep_figure(directory, rows: Sequence, expansion, signature: str) -> Path:
    v = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    grid = np.linspace(0.0, v.max(), 200)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(v, y, "o", label="quadrature")
    ax.plot(grid, expansion(grid), "-", label="even fit")
    ax.set_xlabel("v")
    ax.set_ylabel("action per unit time")
    ax.set_title(f"{signature} rotation sweep")
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(directory), f"xi_sweep_{signature}.png")


def scaling_figure(directory, fit) -> Path:
    mu = np.array(fit.mu_grid)
    logs = np.array(fit.log_integrals)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.log10(mu), logs / np.log(10), "o", label="MC")
    intercept = np.mean(logs - fit.slope * np.log(mu))
    ax.plot(np.log10(mu), (fit.slope * np.log(mu) + intercept) / np.log(10), "-", label=f"slope {fit.slope:.4f}")
    ax.set_xlabel("log10 mu_delta")
    ax.set_ylabel("log10 per-cell integral")
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(directory), f"ensemble_{'flat' if fit.ricci_flat else 'nonflat'}.png")


def profile_figure(directory, r: np.ndarray, a: np.ndarray, r0: float) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(r, a, "-")
    ax.axvline(r0, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("r")
    ax.set_ylabel("a(r)")
    fig.tight_layout()
    return _save(fig, Path(directory), "mass_profile.png")


def worldline_figure(directory, state) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for i, (pos, m) in enumerate(zip(state.positions, state.masses)):
        for j in range(state.intervals):
            if m[j] > 0:
                ax.plot(pos[j : j + 2, 0], state.times[j : j + 2], "-", color=f"C{i}")
    for t in state.times:
        ax.axhline(t, color="grey", lw=0.5, ls=":")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    fig.tight_layout()
    return _save(fig, Path(directory), "worldlines.png")
