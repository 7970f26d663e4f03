"""Bayesian-filtering adaptive optimizers with baselines and analysis tools.

The package has four parts:

* :mod:`adabayes.optim` -- per-parameter state containers and the five
  element-wise step rules (SGD, Adam, AdamW, AdaBayes, AdaBayes-SS).
* :mod:`adabayes.analysis` -- closed-form steady-state and limit
  computations for the filtering learning rate, usable standalone and as
  test oracles for the step rules.
* :mod:`adabayes.problems` / :mod:`adabayes.runner` -- desk-scale
  differentiable benchmark problems with analytic gradients, a
  finite-difference oracle, and a deterministic trajectory runner.
* :mod:`adabayes.cli` -- the `adabayes` command line front end
  (`run`, `sweep`, `checkpoint-verify`) producing CSV files, JSON
  metadata, and rendered PNG figures.
"""

from adabayes.optim import (
    HyperParams,
    MomentState,
    FilterState,
    StepReport,
    init_moment_state,
    init_filter_state,
    update_moments,
    sgd_step,
    adam_step,
    adamw_step,
    adabayes_step,
    adabayes_ss_step,
    OPTIMIZER_KINDS,
)
from adabayes.analysis import (
    SteadyStateQuery,
    SweepRow,
    steady_state_s_post,
    steady_state_precision,
    quadratic_residual,
    low_data_limit,
    high_data_limit,
    no_dynamics_s_post,
    sigma2_from_sgd,
    steady_state_sweep,
    default_sweep_grid,
)
from adabayes.problems import (
    Problem,
    SyntheticDataset,
    make_quadratic,
    make_rosenbrock,
    make_logreg,
    make_mlp,
    finite_diff_grad,
)
from adabayes.runner import (
    Trajectory,
    TrajectoryRecord,
    OptimizerDriver,
    advance,
    run_stream,
    run_trajectory,
    DIVERGENCE_THRESHOLD,
)

__version__ = "0.1.0"

__all__ = [
    "HyperParams",
    "MomentState",
    "FilterState",
    "StepReport",
    "init_moment_state",
    "init_filter_state",
    "update_moments",
    "sgd_step",
    "adam_step",
    "adamw_step",
    "adabayes_step",
    "adabayes_ss_step",
    "OPTIMIZER_KINDS",
    "SteadyStateQuery",
    "SweepRow",
    "steady_state_s_post",
    "steady_state_precision",
    "quadratic_residual",
    "low_data_limit",
    "high_data_limit",
    "no_dynamics_s_post",
    "sigma2_from_sgd",
    "steady_state_sweep",
    "default_sweep_grid",
    "Problem",
    "SyntheticDataset",
    "make_quadratic",
    "make_rosenbrock",
    "make_logreg",
    "make_mlp",
    "finite_diff_grad",
    "Trajectory",
    "TrajectoryRecord",
    "OptimizerDriver",
    "advance",
    "run_stream",
    "run_trajectory",
    "DIVERGENCE_THRESHOLD",
    "__version__",
]
