"""TOML loaders for the three CLI config kinds: run, sweep, stages.

A run file holds [landscape], [optimizer], and optional [estimation],
[staleness], [run] tables. A sweep file sets kind = "grid" (with a [grid]
table of override lists) or kind = "spiral_probes" (with a [probes] table),
plus a nested [base] run config. A stages file lists [[models]] and
[[devices]]. Every unknown key is an error naming the key, so typos cannot
silently fall back to defaults. Full schema: docs in README.
"""

from __future__ import annotations

import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigenbasis import EstimationConfig, GEOMETRIES, SOURCES
from .harness import ConfigError, OPTIMIZERS, RunConfig
from .landscapes import (
    KroneckerQuadraticSpec,
    MlpSpec,
    QuadraticSpec,
    SpiralSpec,
    conditioned_mixing,
)
from .optim import AdamHyper
from .pipemodel import GB, PipelineConfig
from .staleness import MODES, StalenessConfig, stage_delay_profile

__all__ = [
    "ProbeSettings",
    "SweepConfig",
    "StagesConfig",
    "load_run_config",
    "load_sweep_config",
    "load_stages_config",
    "load_toml",
]

SWEEP_KINDS = ("grid", "spiral_probes")


@dataclass(frozen=True)
class ProbeSettings:
    """Spiral probe sweep knobs; defaults match the harness signature."""

    n_probes: int = 200
    traversal_deg: float = 3.0
    fork_max_steps: int = 2500
    fd_step: float = 1e-3
    aligned_max: float = 0.5
    misaligned_min: float = math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class SweepConfig:
    kind: str
    base: RunConfig
    grid: dict[str, tuple] = field(default_factory=dict)
    probes: ProbeSettings = field(default_factory=ProbeSettings)


@dataclass(frozen=True)
class StagesConfig:
    models: tuple[tuple[str, PipelineConfig], ...]
    devices: tuple[tuple[str, int], ...]


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


class _Section:
    """One TOML table with typed, tracked key access.

    Keys are popped as they are read; close() rejects leftovers by name.
    """

    def __init__(self, name: str, data: dict):
        if not isinstance(data, dict):
            raise ConfigError(f"[{name}] must be a table")
        self.name = name
        self.data = dict(data)

    def _pop(self, key, default):
        return self.data.pop(key, default)

    def close(self) -> None:
        if self.data:
            extra = ", ".join(sorted(self.data))
            raise ConfigError(f"[{self.name}] unknown key(s): {extra}")

    def _typed(self, key: str, value, kinds, label: str):
        if not isinstance(value, kinds) or isinstance(value, bool):
            raise ConfigError(f"[{self.name}] {key}: expected {label}, got {value!r}")
        return value

    def str_(self, key: str, default: str | None = None) -> str | None:
        value = self._pop(key, default)
        if value is None:
            return None
        return str(self._typed(key, value, str, "a string"))

    def int_(self, key: str, default: int | None = None) -> int | None:
        value = self._pop(key, default)
        if value is None:
            return None
        return int(self._typed(key, value, int, "an integer"))

    def float_(self, key: str, default: float | None = None) -> float | None:
        value = self._pop(key, default)
        if value is None:
            return None
        return float(self._typed(key, value, (int, float), "a number"))

    def list_(self, key: str, default=None):
        value = self._pop(key, default)
        if value is None:
            return None
        return self._typed(key, value, list, "a list")

    def table_(self, key: str) -> dict | None:
        value = self._pop(key, None)
        if value is None:
            return None
        return self._typed(key, value, dict, "a table")


def _number_list(name: str, key: str, raw) -> list[float]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"[{name}] {key}: expected a non-empty list of numbers")
    out = []
    for v in raw:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"[{name}] {key}: expected numbers, got {v!r}")
        out.append(float(v))
    return out


def _matrix(name: str, key: str, raw) -> np.ndarray:
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise ConfigError(f"[{name}] {key}: expected a list of rows")
    return np.array([_number_list(name, key, row) for row in raw], dtype=np.float64)


def _build_landscape(data: dict):
    sec = _Section("landscape", data)
    kind = sec.str_("kind")
    if kind is None:
        raise ConfigError("[landscape] kind: required")
    try:
        if kind == "quadratic":
            hess = sec.list_("hessian")
            if hess is not None:
                sec.close()
                return QuadraticSpec.from_hessian(_matrix("landscape", "hessian", hess))
            eigenvalues = _number_list("landscape", "eigenvalues", sec.list_("eigenvalues"))
            angle = sec.float_("angle_deg", 0.0)
            sec.close()
            if len(eigenvalues) != 2:
                raise ConfigError("[landscape] eigenvalues: angle_deg form needs exactly 2")
            return QuadraticSpec.make(eigenvalues, angle)
        if kind == "spiral":
            spec = SpiralSpec(
                amplitude=sec.float_("amplitude", 20.0),
                frequency=sec.float_("frequency", 4.0),
                offset=sec.float_("offset", 1.0),
            )
            sec.close()
            return spec
        if kind == "mlp":
            dims = sec.list_("layer_dims")
            if dims is None:
                raise ConfigError("[landscape] layer_dims: required for mlp")
            layer_dims = tuple(int(d) for d in _number_list("landscape", "layer_dims", dims))
            dataset_seed = sec.int_("dataset_seed", 0)
            n_samples = sec.int_("n_samples", 256)
            cond = sec.float_("input_mixing_condition")
            mix_seed = sec.int_("input_mixing_seed")
            sec.close()
            if (cond is None) != (mix_seed is None):
                raise ConfigError(
                    "[landscape] input_mixing_condition and input_mixing_seed go together"
                )
            mixing = None if cond is None else conditioned_mixing(layer_dims[0], cond, mix_seed)
            return MlpSpec(
                layer_dims=layer_dims,
                dataset_seed=dataset_seed,
                n_samples=n_samples,
                input_mixing=mixing,
            )
        if kind == "kronecker_quadratic":
            a = sec.list_("a")
            b = sec.list_("b")
            sec.close()
            if a is None or b is None:
                raise ConfigError("[landscape] a, b: both factor matrices are required")
            return KroneckerQuadraticSpec.make(
                _matrix("landscape", "a", a), _matrix("landscape", "b", b)
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[landscape] {exc}") from exc
    raise ConfigError(
        f"[landscape] kind: {kind!r} is not one of "
        "quadratic, spiral, mlp, kronecker_quadratic"
    )


def _build_optimizer(data: dict) -> tuple[str, AdamHyper, float, float]:
    sec = _Section("optimizer", data)
    name = sec.str_("name")
    if name is None:
        raise ConfigError("[optimizer] name: required")
    if name not in OPTIMIZERS:
        raise ConfigError(f"[optimizer] name: {name!r} is not one of {', '.join(OPTIMIZERS)}")
    eta = sec.float_("eta")
    if eta is None:
        raise ConfigError("[optimizer] eta: required")
    clip = sec.float_("grad_clip", 0.0)
    pipedream_exponent = sec.float_("pipedream_exponent", 1.0)
    dc_lambda = sec.float_("dc_lambda", 0.04)
    try:
        hyper = AdamHyper(
            eta=eta,
            beta1=sec.float_("beta1", 0.9),
            beta2=sec.float_("beta2", 0.999),
            epsilon=sec.float_("epsilon", 1e-8),
            weight_decay=sec.float_("weight_decay", 0.01),
            grad_clip=None if clip == 0.0 else clip,  # 0 disables, matching sweep overrides
        )
    except ValueError as exc:
        raise ConfigError(f"[optimizer] {exc}") from exc
    sec.close()
    return name, hyper, pipedream_exponent, dc_lambda


def _build_estimation(data: dict, optimizer_beta2: float) -> EstimationConfig:
    sec = _Section("estimation", data)
    source = sec.str_("source", "second")
    geometry = sec.str_("geometry", "bilateral")
    beta2 = sec.float_("beta2", optimizer_beta2)  # statistic EMA defaults to the optimizer's
    freq = sec.int_("update_frequency", 10)
    sec.close()
    if source not in SOURCES:
        raise ConfigError(f"[estimation] source: {source!r} is not one of {', '.join(SOURCES)}")
    if geometry not in GEOMETRIES:
        raise ConfigError(
            f"[estimation] geometry: {geometry!r} is not one of {', '.join(GEOMETRIES)}"
        )
    try:
        return EstimationConfig(
            source=source,
            geometry=geometry,
            beta2=beta2,
            update_frequency=None if freq == 0 else freq,
        )
    except ValueError as exc:
        raise ConfigError(f"[estimation] {exc}") from exc


def _build_staleness(data: dict) -> StalenessConfig:
    sec = _Section("staleness", data)
    tau = sec.int_("tau", 0)
    stages = sec.int_("stages", 0)
    mode = sec.str_("mode", "stashing")
    horizon = sec.float_("prediction_horizon_scale", 1.0)
    sec.close()
    if mode not in MODES:
        raise ConfigError(f"[staleness] mode: {mode!r} is not one of {', '.join(MODES)}")
    try:
        if stages > 0:
            if tau != 0:
                raise ConfigError("[staleness] tau and stages are mutually exclusive")
            return StalenessConfig(
                tau=0,
                per_stage=stage_delay_profile(stages),
                mode=mode,
                prediction_horizon_scale=horizon,
            )
        return StalenessConfig(tau=tau, mode=mode, prediction_horizon_scale=horizon)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[staleness] {exc}") from exc


def _build_run(document: dict, where: str) -> RunConfig:
    top = _Section(where, document)
    land_data = top.table_("landscape")
    opt_data = top.table_("optimizer")
    est_data = top.table_("estimation")
    stale_data = top.table_("staleness")
    run_data = top.table_("run")
    top.close()
    if land_data is None:
        raise ConfigError(f"[{where}] missing [landscape] table")
    if opt_data is None:
        raise ConfigError(f"[{where}] missing [optimizer] table")

    landscape = _build_landscape(land_data)
    name, hyper, pipedream_exponent, dc_lambda = _build_optimizer(opt_data)
    estimation = None if est_data is None else _build_estimation(est_data, hyper.beta2)
    staleness = StalenessConfig() if stale_data is None else _build_staleness(stale_data)

    sec = _Section("run", run_data if run_data is not None else {})
    seed = sec.int_("seed", 0)
    max_steps = sec.int_("max_steps", 1000)
    loss_threshold = sec.float_("loss_threshold")
    log_every = sec.int_("log_every", 1)
    batch_size = sec.int_("batch_size", 0)
    start_raw = sec.list_("start")
    init_scale = sec.float_("init_scale")
    sec.close()
    start = None
    if start_raw is not None:
        # a flat list is a vector; a list of rows is a matrix-valued start
        if all(isinstance(v, list) for v in start_raw):
            start = tuple(tuple(row) for row in _matrix("run", "start", start_raw).tolist())
        else:
            start = tuple(_number_list("run", "start", start_raw))
    try:
        cfg = RunConfig(
            landscape=landscape,
            optimizer=name,
            hyper=hyper,
            estimation=estimation,
            staleness=staleness,
            seed=seed,
            max_steps=max_steps,
            loss_threshold=loss_threshold,
            log_every=log_every,
            batch_size=None if batch_size == 0 else batch_size,
            start=start,
            init_scale=init_scale,
            pipedream_exponent=pipedream_exponent,
            dc_lambda=dc_lambda,
        )
        from .harness import validate_run_config

        validate_run_config(cfg)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from exc
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    document = load_toml(path)
    document.pop("kind", None)  # "run" marker is allowed but not required
    return _build_run(document, "run config")


def _grid_values(key: str, raw) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"[grid] {key}: expected a non-empty list")
    out = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float, str)):
            raise ConfigError(f"[grid] {key}: scalar overrides only, got {v!r}")
        out.append(v)
    return tuple(out)


def load_sweep_config(path: str | Path) -> SweepConfig:
    document = load_toml(path)
    top = _Section("sweep config", document)
    kind = top.str_("kind")
    base_data = top.table_("base")
    grid_data = top.table_("grid")
    probes_data = top.table_("probes")
    top.close()
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"kind: {kind!r} is not one of {', '.join(SWEEP_KINDS)}")
    if base_data is None:
        raise ConfigError("missing [base] run config table")
    base = _build_run(base_data, "base")

    if kind == "grid":
        if grid_data is None:
            raise ConfigError("grid sweep needs a [grid] table")
        if probes_data is not None:
            raise ConfigError("[probes] only applies to kind = 'spiral_probes'")
        grid = {key: _grid_values(key, raw) for key, raw in grid_data.items()}
        if not grid:
            raise ConfigError("[grid] table is empty")
        return SweepConfig(kind=kind, base=base, grid=grid)

    if grid_data is not None:
        raise ConfigError("[grid] only applies to kind = 'grid'")
    sec = _Section("probes", probes_data if probes_data is not None else {})
    defaults = ProbeSettings()
    settings = ProbeSettings(
        n_probes=sec.int_("n_probes", defaults.n_probes),
        traversal_deg=sec.float_("traversal_deg", defaults.traversal_deg),
        fork_max_steps=sec.int_("fork_max_steps", defaults.fork_max_steps),
        fd_step=sec.float_("fd_step", defaults.fd_step),
        aligned_max=sec.float_("aligned_max", defaults.aligned_max),
        misaligned_min=sec.float_("misaligned_min", defaults.misaligned_min),
    )
    sec.close()
    if settings.n_probes < 1:
        raise ConfigError("[probes] n_probes: must be >= 1")
    if settings.fork_max_steps < 1:
        raise ConfigError("[probes] fork_max_steps: must be >= 1")
    if not isinstance(base.landscape, SpiralSpec):
        raise ConfigError("[base.landscape] kind: spiral_probes needs the spiral landscape")
    return SweepConfig(kind=kind, base=base, probes=settings)


def load_stages_config(path: str | Path) -> StagesConfig:
    document = load_toml(path)
    top = _Section("stages config", document)
    kind = top.str_("kind", "stages")
    models_raw = top._pop("models", None)
    devices_raw = top._pop("devices", None)
    top.close()
    if kind != "stages":
        raise ConfigError(f"kind: expected 'stages', got {kind!r}")
    if not isinstance(models_raw, list) or not models_raw:
        raise ConfigError("[[models]]: at least one model row is required")
    if not isinstance(devices_raw, list) or not devices_raw:
        raise ConfigError("[[devices]]: at least one device is required")

    models = []
    for i, entry in enumerate(models_raw):
        sec = _Section(f"models[{i}]", entry)
        name = sec.str_("name")
        if name is None:
            raise ConfigError(f"[models[{i}]] name: required")
        try:
            cfg = PipelineConfig(
                embed_dim=sec.int_("embed_dim", 0),
                n_heads=sec.int_("n_heads", 0),
                seq_len=sec.int_("seq_len", 4096),
                batch_size=sec.int_("batch_size", 1),
                block_params=sec.int_("block_params", -1),
                n_blocks=sec.int_("n_blocks", 0),
                device_bytes=GB,  # placeholder; emit_stage_table swaps per device
            )
        except ValueError as exc:
            raise ConfigError(f"[models[{i}]] {exc}") from exc
        sec.close()
        models.append((name, cfg))

    devices = []
    for i, entry in enumerate(devices_raw):
        sec = _Section(f"devices[{i}]", entry)
        name = sec.str_("name")
        gb = sec.float_("memory_gb")
        raw_bytes = sec.int_("memory_bytes")
        sec.close()
        if name is None:
            raise ConfigError(f"[devices[{i}]] name: required")
        if (gb is None) == (raw_bytes is None):
            raise ConfigError(f"[devices[{i}]] set exactly one of memory_gb, memory_bytes")
        n_bytes = raw_bytes if raw_bytes is not None else int(round(gb * GB))
        if n_bytes < 1:
            raise ConfigError(f"[devices[{i}]] memory must be positive")
        devices.append((name, n_bytes))

    return StagesConfig(models=tuple(models), devices=tuple(devices))
