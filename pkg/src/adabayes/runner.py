"""Deterministic trajectory runner and multi-buffer optimizer driver.

The runner owns the sign convention boundary: problems report gradients
of the summed loss, the optimizer rules expect descent directions, so
each step folds any coupled L2 penalty into the gradient and negates it
before handing it to the driver.

A trajectory is a pure function of (problem seed, optimizer kind,
hyperparameters, run seed): the only randomness is minibatch index
sampling from a generator derived from the run seed, so identical
inputs reproduce identical records bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from adabayes.optim import (
    HyperParams,
    MomentState,
    FilterState,
    StepReport,
    OPTIMIZER_KINDS,
    init_moment_state,
    init_filter_state,
    sgd_step,
    adam_step,
    adamw_step,
    adabayes_step,
    adabayes_ss_step,
)
from adabayes.problems import Problem

DIVERGENCE_THRESHOLD = 1e12


class TrajectoryRecord(NamedTuple):
    step: int
    train_loss: float
    grad_norm: float
    s_post_mean: float
    s_post_min: float
    s_post_max: float
    param_norm: float


@dataclass
class Trajectory:
    """Per-step records plus the terminal summary of one optimization run.

    ``train_loss`` and ``grad_norm`` are evaluated on the step's batch
    at the pre-step parameters (the point the gradient was taken at,
    before any L2 fold or negation); ``param_norm`` and the s_post
    statistics describe the state after the step was applied.  Record
    count equals the number of steps actually applied; a divergence
    detected on a batch evaluation stops the run before applying that
    step and sets ``diverged``.
    """

    problem_name: str
    optimizer_kind: str
    records: list
    final_loss: float
    steps_to_threshold: Optional[int]
    diverged: bool
    divergence_threshold: float = DIVERGENCE_THRESHOLD


class OptimizerDriver:
    """Applies one optimizer kind across the segments of a flat buffer.

    Each segment (a contiguous parameter slice, e.g. one weight matrix)
    owns its MomentState and, for AdaBayes, its FilterState whose mu IS
    the segment view.  The rules are element-wise, so segmented and
    whole-vector wiring produce identical numbers; the segmentation
    exists to exercise and expose the multi-buffer bookkeeping.
    """

    def __init__(self, kind: str, hp: HyperParams, params: np.ndarray, segments=None):
        if kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {kind!r}; expected one of {OPTIMIZER_KINDS}")
        if params.dtype != np.float64 or params.ndim != 1:
            raise ValueError("params must be a flat float64 array")
        self.kind = kind
        self.hp = hp
        self.params = params
        if segments is None:
            segments = (("params", slice(0, params.size)),)
        self.segments = tuple(segments)
        self.views = [params[sl] for _, sl in self.segments]
        self.mstates = [init_moment_state(v.shape) for v in self.views]
        if kind == "adabayes":
            self.fstates = [init_filter_state(v.shape, hp, mu=v) for v in self.views]
        else:
            self.fstates = [None] * len(self.views)

    @property
    def t(self) -> int:
        # Shared step counter; all segments advance in lockstep.
        return self.mstates[0].t if self.mstates else 0

    def step(self, g: np.ndarray) -> StepReport:
        """Apply one step of `kind` to every segment; aggregate the reports."""
        reports = []
        sizes = []
        for (name, sl), view, mstate, fstate in zip(self.segments, self.views, self.mstates, self.fstates):
            gseg = g[sl]
            if self.kind == "sgd":
                rep = sgd_step(view, mstate, gseg, self.hp)
            elif self.kind == "adam":
                rep = adam_step(view, mstate, gseg, self.hp)
            elif self.kind == "adamw":
                rep = adamw_step(view, mstate, gseg, self.hp)
            elif self.kind == "adabayes":
                rep = adabayes_step(view, fstate, mstate, gseg, self.hp)
            else:
                rep = adabayes_ss_step(view, mstate, gseg, self.hp)
            reports.append(rep)
            sizes.append(view.size)

        total = sum(sizes)
        if total == 0:
            return StepReport(0.0, 0.0, 0.0, 0.0)
        nonempty = [(r, n) for r, n in zip(reports, sizes) if n > 0]
        return StepReport(
            delta_norm=math.sqrt(sum(r.delta_norm ** 2 for r, _ in nonempty)),
            s_post_mean=sum(r.s_post_mean * n for r, n in nonempty) / total,
            s_post_min=min(r.s_post_min for r, _ in nonempty),
            s_post_max=max(r.s_post_max for r, _ in nonempty),
        )


def advance(problem: Problem, driver: OptimizerDriver, rng: np.random.Generator,
            batch_size: int, l2: float = 0.0):
    """Sample a batch, evaluate, and apply one optimizer step.

    Returns (loss, grad_norm, report) for an applied step, or
    (loss, grad_norm, None) when the evaluation tripped the divergence
    check (loss above DIVERGENCE_THRESHOLD or non-finite values), in
    which case nothing was applied or consumed beyond the batch draw.

    This is the single step body shared by run_trajectory and the
    checkpoint resume path, so resumed runs replay the exact operation
    sequence of uninterrupted ones.
    """
    if problem.dataset_size > 0:
        batch = rng.integers(0, problem.dataset_size, size=batch_size)
    else:
        batch = None
    loss, grad = problem.eval(driver.params, batch)
    loss = float(loss)
    if not math.isfinite(loss) or loss > DIVERGENCE_THRESHOLD or not np.isfinite(grad).all():
        return loss, float("nan"), None
    grad_norm = float(np.linalg.norm(grad))
    if l2 != 0.0:
        g = -(grad + l2 * driver.params)
    else:
        g = -grad
    report = driver.step(g)
    return loss, grad_norm, report


def run_stream(run_seed: int) -> np.random.SeedSequence:
    """RNG root shared by every optimizer cell of a run.

    All cells deliberately replay the SAME minibatch sequence: comparing
    optimizers is only meaningful on identical data streams (this is
    what lets the AdamW-limit run match AdaBayes-SS column for column).
    Each cell still constructs its own generator from this root, so
    cells never share mutable RNG state.
    """
    return np.random.SeedSequence([int(run_seed)])


def run_trajectory(
    problem: Problem,
    optimizer_kind: str,
    hp: HyperParams,
    steps: int,
    batch_size: int,
    seed,
    *,
    l2: float = 0.0,
    loss_threshold: Optional[float] = None,
    checkpoint_steps=(),
    checkpoint_hook: Optional[Callable] = None,
) -> Trajectory:
    """Run `steps` optimizer steps and record per-step metrics.

    ``seed`` may be an int or a numpy SeedSequence; it drives only the
    minibatch sampling.  ``l2`` is a coupled L2 coefficient folded into
    the gradient before the step (use 0 for the decoupled rules, which
    carry their decay in hp.lam).  ``loss_threshold`` arms the
    steps_to_threshold summary: the first recorded step whose train
    loss falls below it.  ``checkpoint_hook(step, driver, rng)`` fires
    after each step listed in ``checkpoint_steps``.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if batch_size != hp.minibatch_size:
        raise ValueError(
            f"batch_size ({batch_size}) must equal hp.minibatch_size ({hp.minibatch_size}); "
            "the sigma2 calibration depends on it"
        )
    if problem.dataset_size > 0 and not 1 <= batch_size <= problem.dataset_size:
        raise ValueError(
            f"batch_size must be in [1, {problem.dataset_size}] for {problem.name}, got {batch_size}"
        )

    rng = np.random.default_rng(seed)
    params = np.asarray(problem.init_params(), dtype=np.float64)
    driver = OptimizerDriver(optimizer_kind, hp, params, problem.segments)
    checkpoint_steps = frozenset(int(s) for s in checkpoint_steps)

    records = []
    diverged = False
    steps_to_threshold = None
    for t in range(1, steps + 1):
        loss, grad_norm, report = advance(problem, driver, rng, batch_size, l2)
        if report is None:
            diverged = True
            break
        records.append(
            TrajectoryRecord(
                step=t,
                train_loss=loss,
                grad_norm=grad_norm,
                s_post_mean=report.s_post_mean,
                s_post_min=report.s_post_min,
                s_post_max=report.s_post_max,
                param_norm=float(np.linalg.norm(params)),
            )
        )
        if loss_threshold is not None and steps_to_threshold is None and loss < loss_threshold:
            steps_to_threshold = t
        if t in checkpoint_steps and checkpoint_hook is not None:
            checkpoint_hook(t, driver, rng)

    final_loss = records[-1].train_loss if records else float("nan")
    return Trajectory(
        problem_name=problem.name,
        optimizer_kind=optimizer_kind,
        records=records,
        final_loss=final_loss,
        steps_to_threshold=steps_to_threshold,
        diverged=diverged,
    )
