"""PNG figures for CLI reports (non-interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dpp import GridField  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def plot_field(u: GridField, path, title: str = "solved value") -> None:
    if u.n != 2:
        return
    pts = u.coords()
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.pcolormesh(pts[..., 0], pts[..., 1], u.values, shading="nearest", cmap="viridis")
    lo, hi = u.domain.bounds
    ax.plot([lo[0], hi[0], hi[0], lo[0], lo[0]], [lo[1], lo[1], hi[1], hi[1], lo[1]], "w-", lw=0.8)
    fig.colorbar(im, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    _save(fig, path)


def plot_residuals(history, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    h = np.maximum(np.asarray(history, float), 1e-300)
    ax.semilogy(np.arange(1, len(h) + 1), h)
    ax.set_xlabel("iteration")
    ax.set_ylabel("sup-norm update")
    _save(fig, path)


def plot_scatter(dist, du, eps: float, L: float, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.8))
    ax.plot(dist, du, ".", ms=2, alpha=0.4)
    d = np.linspace(0, float(np.max(dist)) if len(dist) else 1.0, 100)
    ax.plot(d, L * (d + eps), "r-", lw=1, label=r"$L_\varepsilon(|x-z|+\varepsilon)$")
    ax.set_xlabel("|x - z|")
    ax.set_ylabel("|u(x) - u(z)|")
    ax.legend()
    _save(fig, path)


def plot_sweep(eps_list, L_list, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(eps_list, L_list, "o-")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$L_\varepsilon$")
    _save(fig, path)


def plot_histogram(values, path, xlabel: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    v = np.asarray(values, float)
    v = v[np.isfinite(v)]
    ax.hist(v, bins=50)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    _save(fig, path)
