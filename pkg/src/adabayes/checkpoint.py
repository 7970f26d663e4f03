"""Versioned optimizer-state checkpoints with bit-exact resume.

A checkpoint captures everything needed to (a) continue a run cell for
one more step and (b) replay the same cell from scratch: the resolved
config echo, the cell identity, the step counter, the flat parameter
buffer, per-segment moment accumulators, the AdaBayes posterior
precision (the authoritative variance state), and the minibatch
generator state.  Resume and replay share the runner's single step
body, so a verified roundtrip means step t+1 is reproduced bit for bit.

Files are .npz archives carrying a format version; loading refuses a
mismatched version (printing both) and fails cleanly on truncated
files without yielding partial state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from adabayes.config import build_hyperparams, build_problem, parse_config
from adabayes.runner import OptimizerDriver, advance, run_stream

FORMAT_VERSION = "adabayes-checkpoint-1"


class CheckpointError(Exception):
    """Unreadable, truncated, or version-incompatible checkpoint."""


@dataclass
class Checkpoint:
    version: str
    config_text: str
    cell_name: str
    cell_index: int
    kind: str
    step: int
    params: np.ndarray
    m: list
    v: list
    lam: list  # empty unless kind == "adabayes"
    rng_state: str


def save_checkpoint(path, *, config_text: str, cell_name: str, cell_index: int,
                    driver: OptimizerDriver, rng: np.random.Generator) -> None:
    """Serialize a cell's full optimizer state after driver.t steps."""
    ts = {ms.t for ms in driver.mstates}
    if len(ts) > 1:
        raise ValueError(f"segment step counters out of lockstep: {sorted(ts)}")
    arrays = {
        "version": np.array(FORMAT_VERSION),
        "config": np.array(config_text),
        "cell_name": np.array(cell_name),
        "cell_index": np.array(cell_index, dtype=np.int64),
        "kind": np.array(driver.kind),
        "step": np.array(driver.t, dtype=np.int64),
        "params": driver.params,
        "nseg": np.array(len(driver.mstates), dtype=np.int64),
        "rng_state": np.array(json.dumps(rng.bit_generator.state)),
    }
    for i, ms in enumerate(driver.mstates):
        arrays[f"m{i}"] = ms.m
        arrays[f"v{i}"] = ms.v
    if driver.kind == "adabayes":
        for i, fs in enumerate(driver.fstates):
            arrays[f"lam{i}"] = fs.lam
    np.savez(path, **arrays)


def load_checkpoint(path) -> Checkpoint:
    """Load a checkpoint fully into memory, or raise CheckpointError."""
    try:
        with np.load(path, allow_pickle=False) as z:
            names = set(z.files)
            if "version" not in names:
                raise CheckpointError(f"{path}: not a checkpoint (no version field)")
            version = z["version"].item()
            if version != FORMAT_VERSION:
                raise CheckpointError(
                    f"checkpoint format version mismatch: file has {version!r}, "
                    f"this tool supports {FORMAT_VERSION!r}"
                )
            nseg = int(z["nseg"])
            kind = z["kind"].item()
            return Checkpoint(
                version=version,
                config_text=z["config"].item(),
                cell_name=z["cell_name"].item(),
                cell_index=int(z["cell_index"]),
                kind=kind,
                step=int(z["step"]),
                params=z["params"].copy(),
                m=[z[f"m{i}"].copy() for i in range(nseg)],
                v=[z[f"v{i}"].copy() for i in range(nseg)],
                lam=[z[f"lam{i}"].copy() for i in range(nseg)] if kind == "adabayes" else [],
                rng_state=z["rng_state"].item(),
            )
    except CheckpointError:
        raise
    except Exception as exc:
        # zip/npz failure modes are diverse: BadZipFile, OSError, EOFError,
        # KeyError on missing members, ValueError on corrupt headers.
        raise CheckpointError(f"unreadable or truncated checkpoint {path}: {exc}") from exc


def _restore_driver(ckpt: Checkpoint, problem, hp) -> OptimizerDriver:
    params = ckpt.params.copy()
    driver = OptimizerDriver(ckpt.kind, hp, params, problem.segments)
    if len(driver.mstates) != len(ckpt.m):
        raise CheckpointError(
            f"checkpoint has {len(ckpt.m)} segments but the problem defines {len(driver.mstates)}"
        )
    for i, ms in enumerate(driver.mstates):
        ms.m[...] = ckpt.m[i]
        ms.v[...] = ckpt.v[i]
        ms.t = ckpt.step
    if ckpt.kind == "adabayes":
        for i, fs in enumerate(driver.fstates):
            fs.lam[...] = ckpt.lam[i]
    return driver


def verify_roundtrip(path) -> tuple[bool, str]:
    """Resume one step from the checkpoint and compare against a fresh replay.

    Returns (ok, detail).  The fresh run replays the cell from scratch
    for step+1 steps with the same derived seed; every state buffer is
    compared bit for bit (raw bytes), so any drift in operation
    ordering or serialization shows up as a failure.
    """
    ckpt = load_checkpoint(path)
    try:
        cfg = parse_config(ckpt.config_text)
    except Exception as exc:
        raise CheckpointError(f"embedded config does not parse: {exc}") from exc
    matches = [o for o in cfg.optimizers if o.name == ckpt.cell_name]
    if not matches:
        raise CheckpointError(f"cell {ckpt.cell_name!r} not present in the embedded config")
    spec = matches[0]
    problem = build_problem(cfg.problem)
    hp = build_hyperparams(spec, cfg.run.batch_size)

    # Path 1: restore state and advance one step.
    resumed = _restore_driver(ckpt, problem, hp)
    rng_r = np.random.default_rng()
    rng_r.bit_generator.state = json.loads(ckpt.rng_state)
    advance(problem, resumed, rng_r, cfg.run.batch_size, spec.l2)

    # Path 2: replay the whole cell from scratch to step+1.
    fresh_params = np.asarray(problem.init_params(), dtype=np.float64)
    fresh = OptimizerDriver(ckpt.kind, hp, fresh_params, problem.segments)
    rng_f = np.random.default_rng(run_stream(cfg.run.seed))
    for _ in range(ckpt.step + 1):
        advance(problem, fresh, rng_f, cfg.run.batch_size, spec.l2)

    problems = []
    if resumed.t != fresh.t:
        problems.append(f"step counter: resumed {resumed.t} vs fresh {fresh.t}")
    if resumed.params.tobytes() != fresh.params.tobytes():
        problems.append("params differ")
    for i, (mr, mf) in enumerate(zip(resumed.mstates, fresh.mstates)):
        if mr.m.tobytes() != mf.m.tobytes():
            problems.append(f"segment {i} first moment differs")
        if mr.v.tobytes() != mf.v.tobytes():
            problems.append(f"segment {i} second moment differs")
    if ckpt.kind == "adabayes":
        for i, (fr, ff) in enumerate(zip(resumed.fstates, fresh.fstates)):
            if fr.lam.tobytes() != ff.lam.tobytes():
                problems.append(f"segment {i} posterior precision differs")

    if problems:
        return False, "; ".join(problems)
    return True, (
        f"checkpoint ok: cell {ckpt.cell_name!r} step {ckpt.step}+1 "
        f"reproduced bit-for-bit ({resumed.params.size} parameters)"
    )
