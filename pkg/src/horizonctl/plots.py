"""Report figures rendered next to the delimited output.

All figures are optional byproducts of the report path; the CSV files remain
the machine-readable contract.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, outdir, name) -> str:
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_solve_figures(outdir, scenario, sol, tg) -> list:
    spec = scenario.spec
    grid = spec.grid
    paths = []

    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.semilogy(np.maximum(sol.residual_history, 1e-18), label="stationarity")
    ax.plot(sol.cost_history, label="cost")
    ax.set_xlabel("iteration")
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False)
    ax.set_title(f"{scenario.name}: descent history")
    fig.tight_layout()
    paths.append(_save(fig, outdir, "history.png"))

    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    im = ax.imshow(sol.control.values.T, aspect="auto", origin="lower",
                   extent=[0.0, tg.T, 0, sol.control.values.shape[1]],
                   cmap="RdBu_r")
    fig.colorbar(im, ax=ax, label="control")
    ax.set_xlabel("t")
    ax.set_ylabel("region node")
    ax.set_title(f"{scenario.name}: optimal control")
    fig.tight_layout()
    paths.append(_save(fig, outdir, "control.png"))

    y_d = spec.sample_data(spec.y_d, tg)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    mid = tg.M // 4
    if grid.dim == 1:
        ax.plot(grid.x[:, 0], sol.state[mid], label=f"state t={tg.nodes[mid]:.2f}")
        ax.plot(grid.x[:, 0], y_d[mid], "--", label="target")
        ax.set_xlabel("x")
    else:
        nx, ny = grid.shape
        im = ax.imshow(sol.state[mid].reshape(nx, ny).T, origin="lower",
                       extent=[0, grid.extents[0], 0, grid.extents[1]])
        fig.colorbar(im, ax=ax, label=f"state t={tg.nodes[mid]:.2f}")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    if grid.dim == 1:
        ax.legend(frameon=False)
        ax.grid(True, alpha=0.3)
    ax.set_title(f"{scenario.name}: tracked state")
    fig.tight_layout()
    paths.append(_save(fig, outdir, "state_vs_target.png"))
    return paths


def render_sweep_figures(outdir, scenario, hrep) -> list:
    paths = []
    levels = [lv for lv in hrep.levels if np.isfinite(lv.err_to_ref)]
    if not levels:
        return paths
    T = [lv.T for lv in levels]

    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.semilogy(T, [lv.err_to_ref for lv in levels], "o-", label="error to reference")
    ax.semilogy(T, [lv.bound_rhs for lv in levels], "s--", label="bound right side")
    ax.set_xlabel("horizon T")
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False)
    ax.set_title(f"{scenario.name}: truncation error")
    fig.tight_layout()
    paths.append(_save(fig, outdir, "ladder_errors.png"))

    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(T, [lv.bound_ratio for lv in levels], "o-")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("error / bound")
    ax.grid(True, alpha=0.3)
    ax.set_title(f"{scenario.name}: bound ratio stability")
    fig.tight_layout()
    paths.append(_save(fig, outdir, "ladder_ratio.png"))
    return paths


def render_verify_figures(outdir, scenario, rows) -> list:
    checked = [r for r in rows if r.status in ("pass", "fail")]
    if not checked:
        return []
    fig, ax = plt.subplots(figsize=(6.0, 0.28 * len(checked) + 1.2))
    names = [r.name for r in checked]
    colors = ["#2a9d8f" if r.status == "pass" else "#e76f51" for r in checked]
    ax.barh(range(len(checked)), [1.0] * len(checked), color=colors)
    ax.set_yticks(range(len(checked)))
    ax.set_yticklabels(names, fontsize=6)
    ax.set_xticks([])
    ax.invert_yaxis()
    npass = sum(r.status == "pass" for r in checked)
    ax.set_title(f"{scenario.name}: {npass}/{len(checked)} checks pass",
                 fontsize=9)
    fig.tight_layout()
    return [_save(fig, outdir, "verify_summary.png")]
