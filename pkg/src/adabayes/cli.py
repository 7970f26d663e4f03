"""Command line front end.

Subcommands::

    adabayes run <config.toml> [--no-plot]
    adabayes sweep --sigma2 S --eta E [--grid lo:hi:n] --out sweep.csv [--no-plot]
    adabayes checkpoint-verify <path>

Exit codes: 0 success (a diverged trajectory is still a success, with
the divergence flagged in metadata), 1 checkpoint verification
mismatch, 2 configuration/usage error, 3 I/O or checkpoint-format
error.  The environment variable ADABAYES_OUTPUT_DIR overrides the
config's output.dir.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from adabayes import __version__
from adabayes.analysis import SteadyStateQuery, default_sweep_grid, steady_state_sweep
from adabayes.checkpoint import CheckpointError, save_checkpoint, verify_roundtrip
from adabayes.config import (
    ConfigError,
    build_hyperparams,
    build_problem,
    load_config,
    serialize_config,
)
from adabayes.reportio import ResultBundle, write_metadata, write_sweep_csv, write_trajectory_csv
from adabayes.runner import DIVERGENCE_THRESHOLD, run_stream, run_trajectory

ENV_OUTPUT_DIR = "ADABAYES_OUTPUT_DIR"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adabayes",
        description="Benchmark runner and analysis CLI for the filtering optimizers",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every optimizer cell of an experiment config")
    p_run.add_argument("config", help="path to a TOML experiment config")
    p_run.add_argument("--no-plot", action="store_true", help="skip PNG rendering")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="steady-state sweep over eta/sqrt(g2)")
    p_sweep.add_argument("--sigma2", type=float, required=True, help="prior variance")
    p_sweep.add_argument("--eta", type=float, required=True, help="learning rate")
    p_sweep.add_argument(
        "--grid",
        default="auto",
        help="abscissa grid lo:hi:count, log-spaced (default: sigma2/1e3 to sigma2*1e3, 200 points)",
    )
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--no-plot", action="store_true", help="skip PNG rendering")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ckpt = sub.add_parser("checkpoint-verify", help="verify a checkpoint resumes bit-exactly")
    p_ckpt.add_argument("path", help="path to a .ckpt.npz file written by `run`")
    p_ckpt.set_defaults(func=cmd_checkpoint_verify)

    return parser


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    outdir = os.environ.get(ENV_OUTPUT_DIR) or cfg.output.dir
    os.makedirs(outdir, exist_ok=True)

    echo_text = serialize_config(cfg)
    echo_path = os.path.join(outdir, "config_echo.toml")
    with open(echo_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(echo_text)

    problem = build_problem(cfg.problem)
    bundle = ResultBundle(outdir=outdir, config_echo=echo_path,
                          metadata=os.path.join(outdir, "metadata.json"))
    trajectories = {}
    cells_meta = []
    t_start = time.perf_counter()

    for idx, spec in enumerate(cfg.optimizers):
        hp = build_hyperparams(spec, cfg.run.batch_size)
        every = cfg.run.checkpoint_every
        ckpt_steps = range(every, cfg.run.steps + 1, every) if every > 0 else ()
        ckpt_paths = []

        def hook(step, driver, rng, _name=spec.name, _idx=idx, _paths=ckpt_paths):
            path = os.path.join(outdir, f"{_name}_step{step:06d}.ckpt.npz")
            save_checkpoint(path, config_text=echo_text, cell_name=_name,
                            cell_index=_idx, driver=driver, rng=rng)
            _paths.append(path)

        traj = run_trajectory(
            problem,
            spec.kind,
            hp,
            cfg.run.steps,
            cfg.run.batch_size,
            run_stream(cfg.run.seed),
            l2=spec.l2,
            loss_threshold=cfg.run.loss_threshold,
            checkpoint_steps=ckpt_steps,
            checkpoint_hook=hook,
        )
        csv_path = os.path.join(outdir, f"{spec.name}.csv")
        write_trajectory_csv(csv_path, traj)
        trajectories[spec.name] = traj
        bundle.trajectory_csvs[spec.name] = csv_path
        bundle.checkpoints.extend(ckpt_paths)
        cells_meta.append({
            "name": spec.name,
            "kind": spec.kind,
            "csv": os.path.basename(csv_path),
            "steps_run": len(traj.records),
            "diverged": traj.diverged,
            "final_loss": traj.final_loss,
            "steps_to_threshold": traj.steps_to_threshold,
            "checkpoints": [os.path.basename(p) for p in ckpt_paths],
        })
        status = "DIVERGED" if traj.diverged else "ok"
        print(f"cell {spec.name}: {len(traj.records)} steps, final loss {traj.final_loss:.6g} [{status}]")

    if not args.no_plot:
        from adabayes.plots import render_trajectory_plots

        bundle.plots = render_trajectory_plots(outdir, trajectories)

    metadata = {
        "tool_version": __version__,
        "problem": {"name": cfg.problem.name, "seed": cfg.problem.seed},
        "divergence_threshold": DIVERGENCE_THRESHOLD,
        "cells": cells_meta,
        "config_echo": os.path.basename(echo_path),
        "plots": [os.path.basename(p) for p in bundle.plots],
        "wall_time_s": time.perf_counter() - t_start,
    }
    write_metadata(bundle.metadata, metadata)
    print(f"results in {outdir}")
    return 0


def _parse_grid(spec: str, sigma2: float) -> np.ndarray:
    if spec == "auto":
        return default_sweep_grid(sigma2)
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--grid must be lo:hi:count, got {spec!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"--grid must be lo:hi:count with numeric fields, got {spec!r}") from exc
    if not (lo > 0 and hi > lo and count >= 2):
        raise ConfigError(f"--grid needs 0 < lo < hi and count >= 2, got {spec!r}")
    return np.geomspace(lo, hi, count)


def cmd_sweep(args) -> int:
    try:
        template = SteadyStateQuery(sigma2=args.sigma2, eta=args.eta, g2=0.0)
        grid = _parse_grid(args.grid, args.sigma2)
        rows = steady_state_sweep(template, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out_parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_parent, exist_ok=True)
    write_sweep_csv(args.out, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    if not args.no_plot:
        from adabayes.plots import render_sweep_plot

        png = render_sweep_plot(args.out, rows)
        print(f"wrote {png}")
    return 0


def cmd_checkpoint_verify(args) -> int:
    ok, detail = verify_roundtrip(args.path)
    print(detail)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
