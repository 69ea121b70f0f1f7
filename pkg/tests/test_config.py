"""TOML loaders: shipped configs, key validation, sentinel handling."""

from pathlib import Path

import numpy as np
import pytest

from delaylab.config import (
    ConfigError,
    load_run_config,
    load_stages_config,
    load_sweep_config,
)
from delaylab.landscapes import KroneckerQuadraticSpec, MlpSpec, QuadraticSpec, SpiralSpec

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_toml(tmp_path, text: str) -> Path:
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return p


RUN_TOML = """
[landscape]
kind = "quadratic"
eigenvalues = [10.0, 1.0]
angle_deg = 45.0

[optimizer]
name = "adam"
eta = 1.0
beta1 = 0.0
beta2 = 0.1
{opt_extra}
[staleness]
{staleness}

[run]
seed = 1
max_steps = 50
start = [2.0, 25.0]
{run_extra}
"""


def run_toml(opt_extra: str = "", staleness: str = "tau = 2", run_extra: str = "") -> str:
    return RUN_TOML.format(opt_extra=opt_extra, staleness=staleness, run_extra=run_extra)


# -- shipped configs ---------------------------------------------------------


def test_every_shipped_config_loads():
    by_loader = {
        "quadratic_misaligned.toml": load_run_config,
        "quadratic_aligned.toml": load_run_config,
        "spiral_run.toml": load_run_config,
        "mlp_rotated.toml": load_run_config,
        "kronecker_identity_check.toml": load_run_config,
        "sweep_tau_optimizer.toml": load_sweep_config,
        "spiral_probes.toml": load_sweep_config,
        "stages_llama.toml": load_stages_config,
    }
    found = sorted(p.name for p in CONFIGS.glob("*.toml"))
    assert found == sorted(by_loader)
    for name, loader in by_loader.items():
        loader(CONFIGS / name)


def test_shipped_landscape_kinds():
    assert isinstance(load_run_config(CONFIGS / "quadratic_misaligned.toml").landscape, QuadraticSpec)
    assert isinstance(load_run_config(CONFIGS / "spiral_run.toml").landscape, SpiralSpec)
    assert isinstance(load_run_config(CONFIGS / "mlp_rotated.toml").landscape, MlpSpec)
    assert isinstance(
        load_run_config(CONFIGS / "kronecker_identity_check.toml").landscape, KroneckerQuadraticSpec
    )


# -- run config --------------------------------------------------------------


def test_quadratic_accepts_either_hessian_or_eigenvalues(tmp_path):
    cfg = load_run_config(write_toml(tmp_path, run_toml()))
    explicit = write_toml(
        tmp_path,
        run_toml().replace(
            'eigenvalues = [10.0, 1.0]\nangle_deg = 45.0',
            "hessian = [[5.5, 4.5], [4.5, 5.5]]",
        ),
    )
    cfg2 = load_run_config(explicit)
    np.testing.assert_allclose(cfg.landscape.hessian, cfg2.landscape.hessian, rtol=1e-12)


def test_unknown_key_is_named(tmp_path):
    p = write_toml(tmp_path, run_toml(run_extra="typo_key = 3\n"))
    with pytest.raises(ConfigError, match=r"\[run\] unknown key\(s\): typo_key"):
        load_run_config(p)


def test_tau_and_stages_are_mutually_exclusive(tmp_path):
    p = write_toml(tmp_path, run_toml(staleness="tau = 2\nstages = 4"))
    with pytest.raises(ConfigError, match="mutually exclusive"):
        load_run_config(p)
    cfg = load_run_config(write_toml(tmp_path, run_toml(staleness="stages = 4")))
    assert cfg.staleness.per_stage == (3, 2, 1, 0)


def test_grad_clip_zero_means_disabled(tmp_path):
    cfg = load_run_config(write_toml(tmp_path, run_toml(opt_extra="grad_clip = 0.0\n")))
    assert cfg.hyper.grad_clip is None
    cfg = load_run_config(write_toml(tmp_path, run_toml(opt_extra="grad_clip = 1.5\n")))
    assert cfg.hyper.grad_clip == 1.5


def test_estimation_beta2_defaults_to_optimizer_beta2(tmp_path):
    text = run_toml(opt_extra='\n[estimation]\nsource = "second"\n')
    cfg = load_run_config(write_toml(tmp_path, text))
    assert cfg.estimation is not None
    assert cfg.estimation.beta2 == cfg.hyper.beta2 == 0.1


def test_estimation_update_frequency_zero_means_never(tmp_path):
    text = run_toml(opt_extra="\n[estimation]\nupdate_frequency = 0\n")
    cfg = load_run_config(write_toml(tmp_path, text))
    assert cfg.estimation.update_frequency is None


def test_mlp_mixing_keys_must_pair(tmp_path):
    text = run_toml().replace(
        'kind = "quadratic"\neigenvalues = [10.0, 1.0]\nangle_deg = 45.0',
        'kind = "mlp"\nlayer_dims = [4, 3]\ndataset_seed = 1\ninput_mixing_condition = 10.0',
    )
    with pytest.raises(ConfigError, match="input_mixing"):
        load_run_config(write_toml(tmp_path, text))


def test_bad_optimizer_name(tmp_path):
    p = write_toml(tmp_path, run_toml().replace('name = "adam"', 'name = "sgdx"'))
    with pytest.raises(ConfigError, match="sgdx"):
        load_run_config(p)


def test_invalid_toml_reports_path(tmp_path):
    p = write_toml(tmp_path, "[landscape\nkind=")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_run_config(p)


# -- sweep config ------------------------------------------------------------


def test_grid_sweep_loads_grid_and_base(tmp_path):
    cfg = load_sweep_config(CONFIGS / "sweep_tau_optimizer.toml")
    assert cfg.kind == "grid"
    assert set(cfg.grid) == {"optimizer", "tau"}
    assert cfg.grid["tau"] == (0, 4, 8)


def test_spiral_probes_sweep_loads_probe_settings():
    cfg = load_sweep_config(CONFIGS / "spiral_probes.toml")
    assert cfg.kind == "spiral_probes"
    assert cfg.grid == {}
    assert cfg.probes.n_probes == 200
    assert cfg.probes.traversal_deg == 3.0


SPIRAL_BASE = (
    '[base.landscape]\nkind = "spiral"\n\n[base.optimizer]\nname = "adam"\neta = 0.1\n'
    "\n[base.run]\nstart = [35.0, 0.0]\n"
)


def test_grid_sweep_rejects_probes_table(tmp_path):
    text = 'kind = "grid"\n\n' + SPIRAL_BASE + "\n[grid]\ntau = [0, 1]\n\n[probes]\nn_probes = 5\n"
    with pytest.raises(ConfigError, match=r"\[probes\]"):
        load_sweep_config(write_toml(tmp_path, text))


def test_spiral_probes_rejects_grid_table(tmp_path):
    text = 'kind = "spiral_probes"\n\n' + SPIRAL_BASE + "\n[grid]\ntau = [0, 1]\n"
    with pytest.raises(ConfigError, match=r"\[grid\]"):
        load_sweep_config(write_toml(tmp_path, text))


def test_spiral_probes_requires_spiral_base(tmp_path):
    text = (
        'kind = "spiral_probes"\n\n[base.landscape]\nkind = "quadratic"\neigenvalues = [2.0, 1.0]\n'
        '\n[base.optimizer]\nname = "adam"\neta = 0.1\n\n[base.run]\nstart = [2.0, 25.0]\n'
    )
    with pytest.raises(ConfigError, match="spiral"):
        load_sweep_config(write_toml(tmp_path, text))


def test_unknown_sweep_kind(tmp_path):
    with pytest.raises(ConfigError, match="banana"):
        load_sweep_config(write_toml(tmp_path, 'kind = "banana"\n[base]\n'))


# -- stages config -----------------------------------------------------------


def test_stages_config_loads_models_and_devices():
    cfg = load_stages_config(CONFIGS / "stages_llama.toml")
    assert len(cfg.models) == 7
    assert len(cfg.devices) == 5
    names = [name for name, _ in cfg.devices]
    assert names == ["RTX3070 (8GB)", "RTX3080 (16GB)", "RTX3090 (24GB)", "A6000 (48GB)", "A100 (80GB)"]
    assert cfg.devices[0][1] == 8 * 10**9  # decimal gigabytes


def test_device_memory_keys_are_exclusive(tmp_path):
    base = (
        'kind = "stages"\n\n[[models]]\nname = "m"\nembed_dim = 8\nn_heads = 2\n'
        "block_params = 100\nn_blocks = 2\n\n[[devices]]\nname = \"d\"\n{mem}\n"
    )
    with pytest.raises(ConfigError, match="exactly one"):
        load_stages_config(write_toml(tmp_path, base.format(mem="memory_gb = 1.0\nmemory_bytes = 5")))
    with pytest.raises(ConfigError, match="exactly one"):
        load_stages_config(write_toml(tmp_path, base.format(mem="")))
    cfg = load_stages_config(write_toml(tmp_path, base.format(mem="memory_bytes = 12345")))
    assert cfg.devices == (("d", 12345),)
