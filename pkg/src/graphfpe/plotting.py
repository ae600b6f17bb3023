"""Report figures.

Figures are built on :class:`matplotlib.figure.Figure` with an Agg canvas
rather than through ``pyplot``, and styling is applied per axes instead of
through ``rcParams``.  Matplotlib's text layout is not thread-safe, so
rendering is serialised by a module lock; concurrent sweeps still run
their integrations in parallel.  PNG metadata is stripped so identical
runs give identical bytes.
"""
from __future__ import annotations

import functools
import threading
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

FONT = 9
_LOCK = threading.Lock()


def _locked(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with _LOCK:
            return fn(*args, **kwargs)

    return wrapper


def _figure(width=5.0, height=3.2) -> Figure:
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _style(ax, xlabel=None, ylabel=None) -> None:
    ax.grid(True, alpha=0.3)
    ax.tick_params(labelsize=FONT - 1)
    if xlabel:
        ax.set_xlabel(xlabel, fontsize=FONT)
    if ylabel:
        ax.set_ylabel(ylabel, fontsize=FONT)


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def _positive(times, values):
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    return t[keep], v[keep]


@_locked
def plot_distances(times, columns: dict[str, np.ndarray], path) -> Path:
    """Semilog plot of distances to the Gibbs density against time."""
    fig = _figure()
    ax = fig.add_subplot()
    for name, vals in columns.items():
        ax.semilogy(*_positive(times, vals), label=name.replace("_to_gibbs", ""))
    _style(ax, "t", r"$\|\rho(t)-\rho^*\|$")
    ax.legend(fontsize=FONT - 2)
    return _save(fig, path)


@_locked
def plot_energy(times, relative_energy, min_rho, path) -> Path:
    """Relative free energy and the minimum density, sharing the time axis."""
    fig = _figure(5.0, 4.5)
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    ax1.semilogy(*_positive(times, relative_energy))
    _style(ax1, None, r"$F(\rho)-F(\rho^*)$")
    ax2.plot(times, min_rho)
    _style(ax2, "t", r"$\min_i \rho_i$")
    return _save(fig, path)


@_locked
def plot_snapshots(times, states, gibbs, path, count: int = 5) -> Path:
    """Density profiles at a few recorded times, with the Gibbs density dashed."""
    states = np.asarray(states)
    idx = np.unique(np.linspace(0, len(states) - 1, min(count, len(states))).round().astype(int))
    x = np.arange(states.shape[1])
    fig = _figure()
    ax = fig.add_subplot()
    for k in idx:
        ax.plot(x, states[k], marker=".", label=f"t={times[k]:.3g}")
    ax.plot(x, gibbs, "k--", label="Gibbs")
    _style(ax, "vertex", r"$\rho_i$")
    ax.legend(fontsize=FONT - 2)
    return _save(fig, path)


@_locked
def plot_exhaustion(sizes, sup_differences, path) -> Path:
    """Successive window-restricted differences against the larger size."""
    fig = _figure()
    ax = fig.add_subplot()
    ax.semilogy(list(sizes)[1:], sup_differences, "o-")
    _style(ax, "truncation size", "sup difference on shared window")
    return _save(fig, path)
