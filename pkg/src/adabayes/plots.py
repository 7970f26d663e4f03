"""PNG figure rendering for run and sweep reports.

matplotlib is imported lazily with the Agg backend so headless use and
--no-plot paths never touch a display; figures land next to the CSVs
they visualize and never feed back into any computed output.
"""

from __future__ import annotations

import os


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def render_trajectory_plots(outdir, trajectories: dict) -> list:
    """Loss and effective-learning-rate figures for a set of run cells.

    ``trajectories`` maps cell name to Trajectory.  Returns the list of
    written paths (empty when there is nothing to draw).
    """
    named = {name: tr for name, tr in trajectories.items() if tr.records}
    if not named:
        return []
    plt = _pyplot()
    written = []

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    all_positive = True
    for name, tr in named.items():
        steps = [r.step for r in tr.records]
        losses = [r.train_loss for r in tr.records]
        all_positive &= all(l > 0 for l in losses)
        ax.plot(steps, losses, label=name, linewidth=1.2)
    if all_positive:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("train loss (summed over batch)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    loss_path = os.path.join(outdir, "trajectory_loss.png")
    fig.savefig(loss_path, dpi=120)
    plt.close(fig)
    written.append(loss_path)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name, tr in named.items():
        steps = [r.step for r in tr.records]
        mean = [r.s_post_mean for r in tr.records]
        lo = [r.s_post_min for r in tr.records]
        hi = [r.s_post_max for r in tr.records]
        (line,) = ax.plot(steps, mean, label=name, linewidth=1.2)
        ax.fill_between(steps, lo, hi, alpha=0.2, color=line.get_color(), linewidth=0)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("effective learning rate (mean, min-max band)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    lr_path = os.path.join(outdir, "trajectory_s_post.png")
    fig.savefig(lr_path, dpi=120)
    plt.close(fig)
    written.append(lr_path)

    return written


def render_sweep_plot(csv_path, rows) -> str:
    """Steady-state curve with both asymptotes, next to the sweep CSV."""
    plt = _pyplot()
    xs = [r.x for r in rows]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(xs, [r.s_ss for r in rows], label="steady state", linewidth=1.6)
    ax.plot(xs, [r.s_low for r in rows], "--", label="weak-data asymptote (sigma^2)", linewidth=1.1)
    ax.plot(xs, [r.s_high for r in rows], "--", label="strong-data asymptote (eta/sqrt(g2))", linewidth=1.1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("eta / sqrt(g2)")
    ax.set_ylabel("posterior variance (effective learning rate)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = os.path.splitext(str(csv_path))[0] + ".png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
