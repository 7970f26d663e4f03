"""Checkpoint save/load fidelity and the bit-exact resume verifier."""

import json
import textwrap

import numpy as np
import pytest

from adabayes import OptimizerDriver, advance, run_stream
from adabayes.checkpoint import (
    FORMAT_VERSION,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
    verify_roundtrip,
)
from adabayes.config import build_hyperparams, build_problem, parse_config, serialize_config


def _make_cell(kind="adabayes", problem_body='name = "logreg"\nn = 50\nd = 4'):
    cfg = parse_config(textwrap.dedent(
        f"""
        [run]
        steps = 20
        batch_size = 5
        seed = 11

        [problem]
        {problem_body}

        [[optimizer]]
        kind = "{kind}"
        """
    ))
    spec = cfg.optimizers[0]
    problem = build_problem(cfg.problem)
    hp = build_hyperparams(spec, cfg.run.batch_size)
    params = np.asarray(problem.init_params(), dtype=np.float64)
    driver = OptimizerDriver(kind, hp, params, problem.segments)
    rng = np.random.default_rng(run_stream(cfg.run.seed))
    return cfg, spec, problem, driver, rng


def _save_after(path, steps, kind="adabayes", problem_body='name = "logreg"\nn = 50\nd = 4',
                cell_name=None):
    cfg, spec, problem, driver, rng = _make_cell(kind, problem_body)
    for _ in range(steps):
        loss, _, report = advance(problem, driver, rng, cfg.run.batch_size, spec.l2)
        assert report is not None
    save_checkpoint(path, config_text=serialize_config(cfg),
                    cell_name=cell_name or spec.name, cell_index=0,
                    driver=driver, rng=rng)
    return cfg, spec, driver, rng


@pytest.mark.parametrize("kind", ["adabayes", "adam", "sgd", "adabayes_ss"])
def test_roundtrip_verifies_for_every_kind(tmp_path, kind):
    path = tmp_path / "cell.ckpt.npz"
    _save_after(path, steps=6, kind=kind)
    ok, detail = verify_roundtrip(path)
    assert ok, detail
    assert "step 6+1 reproduced bit-for-bit" in detail


def test_roundtrip_verifies_multi_segment_problem(tmp_path):
    path = tmp_path / "mlp.ckpt.npz"
    _save_after(path, steps=4, kind="adabayes",
                problem_body='name = "mlp"\nlayer_sizes = [3, 4, 2]\nn = 32')
    ok, detail = verify_roundtrip(path)
    assert ok, detail


def test_load_preserves_every_field_bitwise(tmp_path):
    path = tmp_path / "cell.ckpt.npz"
    cfg, spec, driver, rng = _save_after(path, steps=5)
    ckpt = load_checkpoint(path)
    assert ckpt.version == FORMAT_VERSION
    assert ckpt.cell_name == "adabayes"
    assert ckpt.cell_index == 0
    assert ckpt.kind == "adabayes"
    assert ckpt.step == 5 == driver.t
    assert ckpt.params.tobytes() == driver.params.tobytes()
    assert len(ckpt.m) == len(driver.mstates) == 1
    assert ckpt.m[0].tobytes() == driver.mstates[0].m.tobytes()
    assert ckpt.v[0].tobytes() == driver.mstates[0].v.tobytes()
    assert ckpt.lam[0].tobytes() == driver.fstates[0].lam.tobytes()
    assert json.loads(ckpt.rng_state) == rng.bit_generator.state
    assert parse_config(ckpt.config_text) == cfg


def test_truncated_file_is_rejected_cleanly(tmp_path):
    path = tmp_path / "cell.ckpt.npz"
    _save_after(path, steps=3)
    blob = path.read_bytes()
    cut = tmp_path / "cut.ckpt.npz"
    cut.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError, match="unreadable or truncated"):
        load_checkpoint(cut)
    with pytest.raises(CheckpointError, match="unreadable or truncated"):
        load_checkpoint(tmp_path / "missing.ckpt.npz")


def test_npz_without_version_field_is_not_a_checkpoint(tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, foo=np.zeros(3))
    with pytest.raises(CheckpointError, match="no version field"):
        load_checkpoint(path)


def _rewrite(src, dst, **overrides):
    with np.load(src, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    arrays.update(overrides)
    np.savez(dst, **arrays)


def test_version_mismatch_reports_both_versions(tmp_path):
    path = tmp_path / "cell.ckpt.npz"
    _save_after(path, steps=2)
    alien = tmp_path / "alien.ckpt.npz"
    _rewrite(path, alien, version=np.array("adabayes-checkpoint-99"))
    with pytest.raises(CheckpointError) as exc:
        load_checkpoint(alien)
    assert "adabayes-checkpoint-99" in str(exc.value)
    assert FORMAT_VERSION in str(exc.value)


def test_unknown_cell_name_is_rejected(tmp_path):
    path = tmp_path / "cell.ckpt.npz"
    _save_after(path, steps=2, cell_name="mystery")
    with pytest.raises(CheckpointError, match="'mystery' not present"):
        verify_roundtrip(path)


def test_unparseable_embedded_config_is_rejected(tmp_path):
    path = tmp_path / "cell.ckpt.npz"
    _save_after(path, steps=2)
    bad = tmp_path / "bad.ckpt.npz"
    _rewrite(path, bad, config=np.array("not toml ["))
    with pytest.raises(CheckpointError, match="embedded config does not parse"):
        verify_roundtrip(bad)


def test_tampered_params_fail_verification(tmp_path):
    path = tmp_path / "cell.ckpt.npz"
    _save_after(path, steps=3)
    with np.load(path, allow_pickle=False) as z:
        params = z["params"].copy()
    params[0] += 1e-9
    tampered = tmp_path / "tampered.ckpt.npz"
    _rewrite(path, tampered, params=params)
    ok, detail = verify_roundtrip(tampered)
    assert not ok
    assert "params differ" in detail


def test_save_requires_lockstep_segments(tmp_path):
    cfg, spec, problem, driver, rng = _make_cell(
        "adam", 'name = "mlp"\nlayer_sizes = [3, 4, 2]\nn = 32')
    for _ in range(2):
        advance(problem, driver, rng, cfg.run.batch_size, spec.l2)
    driver.mstates[1].t += 1
    with pytest.raises(ValueError, match="out of lockstep"):
        save_checkpoint(tmp_path / "x.npz", config_text=serialize_config(cfg),
                        cell_name="adam", cell_index=0, driver=driver, rng=rng)
