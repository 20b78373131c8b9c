"""Figure rendering for the report path, alongside the delimited output.

Each writer takes already-computed results and saves one PNG; nothing here
feeds back into the solver. The panels mirror the delimited files: scalar
time series, field snapshots (with the small-flock zoom), pairwise model
differences and the loglog refinement curves.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenarios import SMALL_FLOCK_WINDOW

FIGSIZE = (10.0, 7.0)
DPI = 130


def _pick_snapshot_indices(n, want=3):
    if n <= want:
        return list(range(n))
    return [0, n // 2, n - 1]


def plot_timeseries(records, path):
    ts = np.array([r.t for r in records])
    fig, axes = plt.subplots(2, 2, figsize=FIGSIZE)

    ax = axes[0, 0]
    amp = np.array([r.amplitude for r in records])
    if np.all(amp > 0):
        ax.semilogy(ts, amp, "k-")
    else:
        ax.plot(ts, amp, "k-")
    ax.set_title("velocity amplitude max u - min u")
    ax.set_xlabel("t")

    ax = axes[0, 1]
    ax.plot(ts, [r.momentum for r in records], label="momentum")
    ax.plot(ts, [r.energy for r in records], label="energy")
    ax.plot(ts, [r.v2 for r in records], label="V2")
    ax.set_title("bulk budgets")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)

    ax = axes[1, 0]
    ax.plot(ts, [r.e_min for r in records], label="e_min")
    ax.plot(ts, [r.e_max for r in records], label="e_max")
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_title("entropy field range")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)

    ax = axes[1, 1]
    hs = [r.entropy_H for r in records]
    if any(h is not None for h in hs):
        ax.plot(ts, [np.nan if h is None else h for h in hs], label="relative entropy H")
    ax.plot(ts, [r.l1_dev for r in records], label="|rho - rho_bar|_1")
    ax.set_title("deviation from uniform")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_snapshots(snapshots, table, path):
    idx = _pick_snapshot_indices(len(snapshots))
    xs = snapshots[0].mesh.dense_points
    lo, hi = SMALL_FLOCK_WINDOW
    zoom = (xs >= lo - 0.05) & (xs <= hi + 0.05)
    fig, axes = plt.subplots(2, 2, figsize=FIGSIZE)
    for i in idx:
        s = snapshots[i]
        label = f"t={s.t:.3g}"
        axes[0, 0].plot(xs, s.rho.eval(xs), label=label)
        axes[0, 1].plot(xs[zoom], s.rho.eval(xs[zoom]), label=label)
        axes[1, 0].plot(xs, s.u.eval(xs), label=label)
        axes[1, 1].plot(xs, s.w.eval(xs), label=label)
    axes[0, 0].set_title("density")
    axes[0, 1].set_title("density, small-flock zoom")
    axes[1, 0].set_title("velocity")
    axes[1, 1].set_title("weight")
    for ax in axes.ravel():
        ax.set_xlabel("x")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_convergence(sweep, path):
    good = [r for r in sweep.levels if r.failed is None]
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if good:
        hs = np.array([r.h for r in good])
        ax.loglog(hs, [r.e0 for r in good], "o-", label="E0 (squared L2)")
        ax.loglog(hs, [r.e1 for r in good], "s-", label="E1 (squared gradient L2)")
        title = "error vs mesh size, k = h/4"
        if sweep.slope_e0 is not None:
            title += f"  (slopes {sweep.slope_e0:.2f}, {sweep.slope_e1:.2f})"
        ax.set_title(title, fontsize=10)
    ax.set_xlabel("h")
    ax.set_ylabel("squared error at T")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_compare(result, path):
    fig, axes = plt.subplots(2, 2, figsize=FIGSIZE)
    lo, hi = SMALL_FLOCK_WINDOW

    any_run = next(iter(result.runs.values()))
    xs = any_run.snapshots[0].mesh.dense_points
    zoom = (xs >= lo - 0.05) & (xs <= hi + 0.05)
    for variant, run in result.runs.items():
        final = run.snapshots[-1]
        axes[0, 0].plot(xs[zoom], final.rho.eval(xs[zoom]), label=variant)
        axes[0, 1].plot(xs, final.u.eval(xs), label=variant)
    axes[0, 0].set_title("final density, small-flock zoom")
    axes[0, 1].set_title("final velocity")

    ax = axes[1, 0]
    for series in result.small_flock:
        ax.plot(series.times, series.mean_abs_u, label=series.variant)
    ax.set_title("mean |u| over the small-flock window")
    ax.set_xlabel("t")

    ax = axes[1, 1]
    for p in result.pairs:
        ax.plot(p.times, p.sup_u, label=f"{p.pair[0]} vs {p.pair[1]}")
    ax.set_title("sup velocity difference")
    ax.set_xlabel("t")

    for ax in axes.ravel():
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_initial_state(state, table, path):
    from .diagnostics import e_field

    xs = state.mesh.dense_points
    _, e_vals, _, _ = e_field(state, table)
    fig, axes = plt.subplots(2, 2, figsize=FIGSIZE)
    axes[0, 0].plot(xs, state.rho.eval(xs), "k-")
    axes[0, 0].set_title("initial density")
    axes[0, 1].plot(xs, state.u.eval(xs), "k-")
    axes[0, 1].set_title("initial velocity")
    axes[1, 0].plot(xs, state.w.eval(xs), "k-")
    axes[1, 0].set_title("initial weight")
    axes[1, 1].plot(xs, e_vals, "k-")
    axes[1, 1].axhline(0.0, color="gray", lw=0.8)
    axes[1, 1].set_title("initial entropy field e")
    for ax in axes.ravel():
        ax.set_xlabel("x")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
