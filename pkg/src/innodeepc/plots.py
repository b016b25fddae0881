"""Closed-loop result figures.

One public entry point per figure kind; everything renders straight to SVG
through a standalone matplotlib ``Figure`` so no interactive backend is ever
touched.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from .errors import InputError

__all__ = ["save_comparison_plot", "save_run_plot"]

_OUTPUT_COLORS = ("tab:blue", "tab:orange", "tab:green")


def _finish(fig: Figure, path) -> None:
    fig.align_ylabels()
    fig.savefig(path, format="svg", bbox_inches="tight")


def save_run_plot(path, report, name: str) -> None:
    """Render one controller run as a three-panel SVG.

    Top: measured outputs with their references; middle: applied inputs;
    bottom: per-step one-step prediction error magnitude per channel.  The
    setpoint switch is marked with a vertical line and the warmup region is
    shaded.

    Args:
        path: Destination ``.svg`` file.
        report: Experiment report holding the run.
        name: Controller name inside the report.
    """
    run = report.run(name)
    h = report.h
    n_steps = run.y.shape[0]
    t = h * np.arange(n_steps)
    p = run.y.shape[1]
    m = run.u.shape[1]

    fig = Figure(figsize=(8.0, 9.0))
    ax_y, ax_u, ax_e = fig.subplots(3, 1, sharex=True)

    for i in range(p):
        color = _OUTPUT_COLORS[i % len(_OUTPUT_COLORS)]
        ax_y.plot(t, run.y[:, i], color=color, lw=1.2, label=f"y{i + 1}")
        ax_y.plot(t, run.references[:, i], color=color, ls="--", lw=0.9)
    ax_y.set_ylabel("outputs / references [V]")
    ax_y.legend(loc="best", ncols=p, fontsize=8)

    for i in range(m):
        ax_u.step(t, run.u[:n_steps, i], where="post", lw=1.2,
                  label=f"u{i + 1}")
    ax_u.set_ylabel("inputs [A]")
    ax_u.legend(loc="best", ncols=m, fontsize=8)

    t_ctrl = t[report.warmup:]
    err = np.abs(run.y_pred - run.y[report.warmup:])
    for i in range(p):
        ax_e.semilogy(t_ctrl, np.maximum(err[:, i], 1e-16),
                      color=_OUTPUT_COLORS[i % len(_OUTPUT_COLORS)],
                      lw=1.0, label=f"|err y{i + 1}|")
    ax_e.set_ylabel("one-step prediction error [V]")
    ax_e.set_xlabel("time [s]")
    ax_e.legend(loc="best", ncols=p, fontsize=8)

    t_switch = h * report.switch_global
    for ax in (ax_y, ax_u, ax_e):
        ax.axvline(t_switch, color="0.4", ls=":", lw=1.0)
        ax.axvspan(0.0, h * report.warmup, color="0.92", zorder=0)
        ax.grid(True, alpha=0.3)
    ax_y.set_title(f"{name} controller, seed {report.seed}")
    _finish(fig, path)


def save_comparison_plot(path, report) -> None:
    """Overlay every controller's tracking error in one SVG.

    One panel per output channel showing ``y - r`` for each controller over
    the control region, so transients after the setpoint switch can be
    compared directly.
    """
    if not report.runs:
        raise InputError("report has no controller runs")
    h = report.h
    w = report.warmup
    p = report.runs[0].y.shape[1]
    fig = Figure(figsize=(8.0, 2.6 * p))
    axes = fig.subplots(p, 1, sharex=True)
    axes = np.atleast_1d(axes)
    for run in report.runs:
        t = h * np.arange(w, run.y.shape[0])
        err = run.y[w:] - run.references[w:]
        for i, ax in enumerate(axes):
            ax.plot(t, err[:, i], lw=1.1, label=run.name)
    t_switch = h * report.switch_global
    for i, ax in enumerate(axes):
        ax.axvline(t_switch, color="0.4", ls=":", lw=1.0)
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.set_ylabel(f"y{i + 1} - r{i + 1} [V]")
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="best", fontsize=8)
    axes[0].set_title(f"tracking error by controller, seed {report.seed}")
    axes[-1].set_xlabel("time [s]")
    _finish(fig, path)
