"""CSV / JSON result serialization with byte-stable formatting.

Floats are written with repr(), the shortest decimal string that
round-trips the exact float64 value, so identical runs produce
identical bytes and consumers can recover the bits.  Line endings are
always LF and column orders are fixed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from adabayes.analysis import SweepRow
from adabayes.runner import Trajectory

TRAJECTORY_HEADER = "step,train_loss,grad_norm,s_post_mean,s_post_min,s_post_max,param_norm"
SWEEP_HEADER = "x,s_ss,s_low,s_high"


def fmt_float(x) -> str:
    """Shortest round-trip decimal for a float64 (nan/inf spelled plainly)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_trajectory_csv(path, trajectory: Trajectory) -> None:
    lines = [TRAJECTORY_HEADER]
    for rec in trajectory.records:
        lines.append(
            f"{rec.step},{fmt_float(rec.train_loss)},{fmt_float(rec.grad_norm)},"
            f"{fmt_float(rec.s_post_mean)},{fmt_float(rec.s_post_min)},"
            f"{fmt_float(rec.s_post_max)},{fmt_float(rec.param_norm)}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    lines = [SWEEP_HEADER]
    for row in rows:
        lines.append(
            f"{fmt_float(row.x)},{fmt_float(row.s_ss)},{fmt_float(row.s_low)},{fmt_float(row.s_high)}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_metadata(path, metadata: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(metadata, indent=2, sort_keys=True) + "\n")


@dataclass
class ResultBundle:
    """Paths produced by one CLI run; every referenced file exists."""

    outdir: str
    config_echo: str
    metadata: str
    trajectory_csvs: dict = field(default_factory=dict)  # cell name -> path
    sweep_csv: str | None = None
    plots: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
