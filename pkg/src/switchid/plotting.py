"""PNG figures for the run report (headless Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .pendulum import C1, STATE_NAMES  # noqa: E402

_LABELS = {"phi1": "phi1 [rad]", "omega1": "omega1 [rad/s]", "omega2": "omega2 [rad/s]"}
# no timestamps or version strings, so identical data gives identical bytes
_META = {"Software": None}
_STYLE = {"figure.dpi": 100, "font.size": 9, "svg.hashsalt": "switchid", "path.simplify": False}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)
    return path


def _shade(ax, t, classes):
    """Grey bands where the class is sticking."""
    stuck = np.asarray(classes) == C1
    if not stuck.any():
        return
    edges = np.flatnonzero(np.diff(np.concatenate([[0], stuck.astype(int), [0]])))
    for a, b in zip(edges[::2], edges[1::2]):
        ax.axvspan(t[a], t[min(b, len(t) - 1)], color="0.85", lw=0)


def states_figure(path, t, series: dict, classes=None, title: str = "") -> Path:
    """One panel per state; ``series`` maps a legend name to ``(n, 3)`` arrays."""
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
        for j, (ax, name) in enumerate(zip(axes, STATE_NAMES)):
            if classes is not None:
                _shade(ax, t[: len(classes)], classes)
            for k, (label, X) in enumerate(series.items()):
                X = np.asarray(X)
                ax.plot(t[: X.shape[0]], X[:, j], lw=1.0, ls="-" if k == 0 else "--", label=label)
            ax.set_ylabel(_LABELS[name])
        axes[0].legend(loc="upper right", fontsize=8)
        axes[-1].set_xlabel("t [s]")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def clusters_figure(path, t, states, labels, truth=None, title: str = "") -> Path:
    """Angle trace coloured by cluster label, with the true class underneath."""
    with plt.rc_context(_STYLE):
        n_rows = 2 if truth is not None else 1
        fig, axes = plt.subplots(n_rows, 1, figsize=(7, 2.6 * n_rows), sharex=True, squeeze=False)
        axes = axes[:, 0]
        for ax, lab, name in zip(axes, (labels, truth), ("clustered", "true")):
            lab = np.asarray(lab)
            x = np.asarray(states)[: lab.size, 0]
            tt = t[: lab.size]
            for c, col in ((1, "tab:red"), (2, "tab:blue")):
                m = lab == c
                ax.scatter(tt[m], x[m], s=2, color=col, label=f"C{c}")
            ax.set_ylabel(f"phi1 [rad] ({name})")
            ax.legend(loc="upper right", fontsize=8, markerscale=4)
        axes[-1].set_xlabel("t [s]")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def surface_figure(path, tree, truth_fn, phi_range, omega1_range, omega2: float = 0.0, u: float = 0.0,
                   n: int = 200, title: str = "") -> Path:
    """Learned versus analytic sticking region in the (phi1, omega1) plane."""
    phi = np.linspace(*phi_range, n)
    w1 = np.linspace(*omega1_range, n)
    P, W = np.meshgrid(phi, w1)
    F = np.column_stack([P.ravel(), W.ravel(), np.full(P.size, omega2), np.full(P.size, u)])
    learned = tree.predict(F).reshape(P.shape)
    true = truth_fn(F[:, :3], F[:, 3]).reshape(P.shape)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.contourf(P, W, (learned == C1).astype(float), levels=[0.5, 1.5], colors=["tab:orange"], alpha=0.5)
        ax.contour(P, W, (true == C1).astype(float), levels=[0.5], colors="k", linewidths=1.2)
        ax.set_xlabel(_LABELS["phi1"])
        ax.set_ylabel(_LABELS["omega1"])
        ax.set_title(title or "sticking region: learned (shaded), analytic (line)")
        fig.tight_layout()
        return _save(fig, path)


def error_figure(path, t, err_norm, threshold=None, title: str = "") -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.semilogy(t[: len(err_norm)], np.maximum(err_norm, 1e-16), lw=1.0)
        if threshold is not None:
            ax.axhline(threshold, color="k", ls=":", lw=1.0)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("estimate error norm")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def loglik_figure(path, history, title: str = "") -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(np.arange(len(history)), history, marker=".", lw=1.0)
        ax.set_xlabel("EM iteration")
        ax.set_ylabel("log-likelihood")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)
