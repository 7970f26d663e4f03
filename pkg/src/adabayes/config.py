"""Experiment configuration: strict TOML parsing, defaults, canonical echo.

The config surface is TOML with four tables::

    [problem]       name plus per-problem parameters and a data seed
    [[optimizer]]   one table per optimizer cell (kind + overrides)
    [run]           steps, batch_size, seed, optional extras
    [output]        dir

Unknown keys anywhere are rejected with the full key path.  Defaults
follow the reference hyperparameters: eta = 0.001, eta_sgd = 0.1,
beta1 = 0.9, beta2 = 0.999, eps = 1e-8, decoupled decay
lambda = 5e-5 for adamw/adabayes/adabayes_ss, coupled L2 of 5e-4 for
sgd/adam, and sigma2 = eta_sgd / batch_size when not given.

Parsing resolves every default, so serializing a parsed config
(:func:`serialize_config`) yields a fully explicit file that re-parses
to an equal config and reproduces the same run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from adabayes.optim import HyperParams, OPTIMIZER_KINDS
from adabayes.problems import Problem, make_logreg, make_mlp, make_quadratic, make_rosenbrock

DECOUPLED_KINDS = ("adamw", "adabayes", "adabayes_ss")
COUPLED_L2_DEFAULT = 5e-4
DECOUPLED_LAMBDA_DEFAULT = 5e-5

PROBLEM_NAMES = ("quadratic", "rosenbrock", "logreg", "mlp")


class ConfigError(Exception):
    """Invalid configuration file (syntax, unknown key, bad value)."""


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    dim: int = 10
    condition_number: float = 10.0
    n: int = 1000
    d: int = 20
    layer_sizes: tuple = (4, 8, 1)
    seed: int = 0


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    name: str
    eta: float = 0.001
    eta_sgd: float = 0.1
    sigma2: float = 0.0  # resolved at parse time
    lam: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 0.0


@dataclass(frozen=True)
class RunSpec:
    steps: int = 100
    batch_size: int = 1
    seed: int = 0
    loss_threshold: Optional[float] = None
    checkpoint_every: int = 0


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    optimizers: tuple
    run: RunSpec
    output: OutputSpec


def _type_name(value) -> str:
    return type(value).__name__


def _get(table: dict, key: str, path: str, kind, default):
    """Pop a typed value; kind is int, float, str, or 'int_list'."""
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError(f"missing required key {path}.{key}")
        return default
    value = table.pop(key)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key} must be an integer, got {_type_name(value)}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key} must be a number, got {_type_name(value)}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key} must be a string, got {_type_name(value)}")
        return value
    if kind == "int_list":
        if not (isinstance(value, list) and value and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
            raise ConfigError(f"{path}.{key} must be a non-empty list of integers")
        return tuple(value)
    raise AssertionError(kind)


_REQUIRED = object()


def _reject_unknown(table: dict, path: str) -> None:
    if table:
        key = sorted(table)[0]
        raise ConfigError(f"unknown key {path}.{key}")


def _parse_problem(table) -> ProblemSpec:
    if not isinstance(table, dict):
        raise ConfigError("problem must be a table")
    table = dict(table)
    name = _get(table, "name", "problem", str, _REQUIRED)
    if name not in PROBLEM_NAMES:
        raise ConfigError(f"problem.name must be one of {PROBLEM_NAMES}, got {name!r}")
    spec = {"name": name}
    if name == "quadratic":
        spec["dim"] = _get(table, "dim", "problem", int, 10)
        spec["condition_number"] = _get(table, "condition_number", "problem", float, 10.0)
        spec["seed"] = _get(table, "seed", "problem", int, 0)
    elif name == "logreg":
        spec["n"] = _get(table, "n", "problem", int, 1000)
        spec["d"] = _get(table, "d", "problem", int, 20)
        spec["seed"] = _get(table, "seed", "problem", int, 0)
    elif name == "mlp":
        spec["layer_sizes"] = _get(table, "layer_sizes", "problem", "int_list", (4, 8, 1))
        spec["n"] = _get(table, "n", "problem", int, 256)
        spec["seed"] = _get(table, "seed", "problem", int, 0)
    # rosenbrock takes no parameters
    _reject_unknown(table, "problem")
    return ProblemSpec(**spec)


def _parse_optimizer(table, index: int, batch_size: int, used_names: set) -> OptimizerSpec:
    path = f"optimizer[{index}]"
    if not isinstance(table, dict):
        raise ConfigError(f"{path} must be a table")
    table = dict(table)
    kind = _get(table, "kind", path, str, _REQUIRED)
    if kind not in OPTIMIZER_KINDS:
        raise ConfigError(f"{path}.kind must be one of {OPTIMIZER_KINDS}, got {kind!r}")

    name = _get(table, "name", path, str, kind)
    if name in used_names:
        base, suffix = name, 2
        while f"{base}_{suffix}" in used_names:
            suffix += 1
        name = f"{base}_{suffix}"
    used_names.add(name)

    eta = _get(table, "eta", path, float, 0.001)
    eta_sgd = _get(table, "eta_sgd", path, float, 0.1)
    sigma2 = _get(table, "sigma2", path, float, None)
    if sigma2 is None:
        sigma2 = eta_sgd / batch_size
    lam = _get(table, "lambda", path, float,
               DECOUPLED_LAMBDA_DEFAULT if kind in DECOUPLED_KINDS else 0.0)
    beta1 = _get(table, "beta1", path, float, 0.9)
    beta2 = _get(table, "beta2", path, float, 0.999)
    eps = _get(table, "eps", path, float, 1e-8)
    l2 = _get(table, "l2", path, float,
              COUPLED_L2_DEFAULT if kind in ("sgd", "adam") else 0.0)
    _reject_unknown(table, path)

    spec = OptimizerSpec(kind=kind, name=name, eta=eta, eta_sgd=eta_sgd, sigma2=sigma2,
                         lam=lam, beta1=beta1, beta2=beta2, eps=eps, l2=l2)
    try:
        build_hyperparams(spec, batch_size)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; all defaults resolved."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc

    doc = dict(doc)
    run_table = doc.pop("run", {})
    if not isinstance(run_table, dict):
        raise ConfigError("run must be a table")
    run_table = dict(run_table)
    steps = _get(run_table, "steps", "run", int, 100)
    batch_size = _get(run_table, "batch_size", "run", int, 1)
    seed = _get(run_table, "seed", "run", int, 0)
    loss_threshold = _get(run_table, "loss_threshold", "run", float, None)
    checkpoint_every = _get(run_table, "checkpoint_every", "run", int, 0)
    _reject_unknown(run_table, "run")
    if steps < 1:
        raise ConfigError(f"run.steps must be >= 1, got {steps}")
    if batch_size < 1:
        raise ConfigError(f"run.batch_size must be >= 1, got {batch_size}")
    if checkpoint_every < 0:
        raise ConfigError(f"run.checkpoint_every must be >= 0, got {checkpoint_every}")
    run = RunSpec(steps=steps, batch_size=batch_size, seed=seed,
                  loss_threshold=loss_threshold, checkpoint_every=checkpoint_every)

    if "problem" not in doc:
        raise ConfigError("missing required table [problem]")
    problem = _parse_problem(doc.pop("problem"))

    opt_tables = doc.pop("optimizer", None)
    if not isinstance(opt_tables, list) or not opt_tables:
        raise ConfigError("need at least one [[optimizer]] table")
    used_names: set = set()
    optimizers = tuple(
        _parse_optimizer(t, i, batch_size, used_names) for i, t in enumerate(opt_tables)
    )

    output_table = doc.pop("output", {})
    if not isinstance(output_table, dict):
        raise ConfigError("output must be a table")
    output_table = dict(output_table)
    outdir = _get(output_table, "dir", "output", str, "results")
    _reject_unknown(output_table, "output")

    _reject_unknown(doc, "config")

    cfg = ExperimentConfig(problem=problem, optimizers=optimizers, run=run,
                           output=OutputSpec(dir=outdir))
    _validate_cross(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read and parse a config file (I/O errors propagate as OSError)."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _validate_cross(cfg: ExperimentConfig) -> None:
    p, run = cfg.problem, cfg.run
    if p.name == "quadratic":
        if p.dim < 1:
            raise ConfigError(f"problem.dim must be >= 1, got {p.dim}")
        if p.condition_number < 1.0:
            raise ConfigError(f"problem.condition_number must be >= 1, got {p.condition_number}")
    if p.name == "logreg":
        if not (p.n >= p.d >= 1):
            raise ConfigError(f"logreg needs n >= d >= 1, got n={p.n}, d={p.d}")
        if run.batch_size > p.n:
            raise ConfigError(f"run.batch_size ({run.batch_size}) exceeds dataset size ({p.n})")
    if p.name == "mlp":
        if len(p.layer_sizes) < 3:
            raise ConfigError(f"mlp needs at least one hidden layer, got layer_sizes={list(p.layer_sizes)}")
        if run.batch_size > p.n:
            raise ConfigError(f"run.batch_size ({run.batch_size}) exceeds dataset size ({p.n})")


def build_problem(spec: ProblemSpec) -> Problem:
    """Instantiate the configured problem."""
    if spec.name == "quadratic":
        return make_quadratic(spec.dim, spec.condition_number, spec.seed)
    if spec.name == "rosenbrock":
        return make_rosenbrock()
    if spec.name == "logreg":
        problem, _ = make_logreg(spec.n, spec.d, spec.seed)
        return problem
    if spec.name == "mlp":
        return make_mlp(list(spec.layer_sizes), spec.n, spec.seed)
    raise ConfigError(f"unknown problem {spec.name!r}")


def build_hyperparams(spec: OptimizerSpec, batch_size: int) -> HyperParams:
    """Turn a resolved optimizer spec into validated HyperParams."""
    return HyperParams(
        eta=spec.eta,
        eta_sgd=spec.eta_sgd,
        minibatch_size=batch_size,
        sigma2=spec.sigma2,
        lam=spec.lam,
        beta1=spec.beta1,
        beta2=spec.beta2,
        eps=spec.eps,
    )


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise AssertionError(f"cannot serialize {value!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical, fully resolved TOML echo of a parsed config.

    Parsing the result yields a config equal to ``cfg``, and running it
    reproduces the original run byte for byte (all defaults are
    materialized, so nothing is left to re-resolution).
    """
    lines = ["[problem]", f"name = {_toml_value(cfg.problem.name)}"]
    if cfg.problem.name == "quadratic":
        lines += [f"dim = {cfg.problem.dim}",
                  f"condition_number = {_toml_value(cfg.problem.condition_number)}",
                  f"seed = {cfg.problem.seed}"]
    elif cfg.problem.name == "logreg":
        lines += [f"n = {cfg.problem.n}", f"d = {cfg.problem.d}", f"seed = {cfg.problem.seed}"]
    elif cfg.problem.name == "mlp":
        lines += [f"layer_sizes = {_toml_value(cfg.problem.layer_sizes)}",
                  f"n = {cfg.problem.n}", f"seed = {cfg.problem.seed}"]

    for opt in cfg.optimizers:
        lines += [
            "",
            "[[optimizer]]",
            f"kind = {_toml_value(opt.kind)}",
            f"name = {_toml_value(opt.name)}",
            f"eta = {_toml_value(opt.eta)}",
            f"eta_sgd = {_toml_value(opt.eta_sgd)}",
            f"sigma2 = {_toml_value(opt.sigma2)}",
            f"lambda = {_toml_value(opt.lam)}",
            f"beta1 = {_toml_value(opt.beta1)}",
            f"beta2 = {_toml_value(opt.beta2)}",
            f"eps = {_toml_value(opt.eps)}",
            f"l2 = {_toml_value(opt.l2)}",
        ]

    lines += ["", "[run]",
              f"steps = {cfg.run.steps}",
              f"batch_size = {cfg.run.batch_size}",
              f"seed = {cfg.run.seed}"]
    if cfg.run.loss_threshold is not None:
        lines.append(f"loss_threshold = {_toml_value(cfg.run.loss_threshold)}")
    lines.append(f"checkpoint_every = {cfg.run.checkpoint_every}")

    lines += ["", "[output]", f"dir = {_toml_value(cfg.output.dir)}", ""]
    return "\n".join(lines)
