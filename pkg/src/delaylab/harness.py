"""Config-driven experiment runner.

Executes seeded optimization runs with delayed gradients, computes the
metrics the toy studies report (iterations to a loss threshold, slowdown
ratio, misalignment norm), and emits deterministic CSV/JSON artifacts.
Everything downstream of a RunConfig is a pure function of it: two runs of
the same config produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .eigenbasis import BasisState, EstimationConfig
from .landscapes import (
    KroneckerQuadraticSpec,
    MlpSpec,
    NearOriginError,
    QuadraticSpec,
    SpiralSpec,
    finite_difference_hessian,
    kronecker_eval,
    mlp_dataset,
    mlp_eval,
    quadratic_eval,
    spiral_eval,
)
from .linalg import frobenius_norm, kronecker, matmul, one_one_norm
from .optim import (
    AdamHyper,
    NonFiniteGradientError,
    adam_step,
    adasgd_step,
    clip_global_norm,
    delay_compensated_gradient,
    init_adam_state,
    init_adasgd_state,
    init_rotated_state,
    nesterov_adam_step,
    pipedream_lr_scale,
    rotated_adam_step,
    update_direction,
)
from .staleness import (
    StalenessConfig,
    advance,
    delayed_gradient,
    init_stash,
    param_delays,
)

OPTIMIZERS = (
    "adam",
    "rotated_adam",
    "adasgd",
    "nesterov_adam",
    "pipedream_lr",
    "delay_compensated_adam",
)

# Generous enough that unstable baselines get logged instead of clipped early.
DIVERGENCE_LOSS = 1.0e12

TRACE_COLUMNS = ("step", "loss", "grad_norm", "effective_delay", "misalignment_norm")

# Region labels come from the normalized off-diagonal Hessian entry
# |2 h01| / hypot(h00 - h11, 2 h01) = |sin 2phi|, phi the eigenbasis angle.
# aligned: basis within 15 degrees of the axes; misaligned: beyond 30.
ALIGNED_MAX_MIXING = 0.5
MISALIGNED_MIN_MIXING = math.sqrt(3.0) / 2.0

Landscape = QuadraticSpec | SpiralSpec | MlpSpec | KroneckerQuadraticSpec


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


class UnsupportedMetricError(ValueError):
    """Metric requested on a landscape that cannot provide it."""


class ThresholdNotReachedError(RuntimeError):
    """slowdown_ratio input never crossed the loss threshold."""

    def __init__(self, which: str):
        super().__init__(f"run {which!r} never reached the loss threshold")
        self.which = which


def f17(x: float) -> str:
    """Serialize a float with 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run. Hashable into a provenance fingerprint."""

    landscape: Landscape
    optimizer: str
    hyper: AdamHyper
    estimation: EstimationConfig | None = None
    staleness: StalenessConfig = field(default_factory=StalenessConfig)
    seed: int = 0
    max_steps: int = 1000
    loss_threshold: float | None = None
    log_every: int = 1
    batch_size: int | None = None
    start: tuple | None = None
    init_scale: float | None = None
    pipedream_exponent: float = 1.0
    dc_lambda: float = 0.04


@dataclass(frozen=True)
class LogRow:
    step: int
    loss: float
    grad_norm: float
    effective_delay: int
    misalignment_norm: float | None


@dataclass(frozen=True)
class RunSummary:
    iterations_to_threshold: int | None
    final_loss: float
    wall_steps: int
    diverged: bool
    terminated: str  # threshold | max_steps | diverged | near_origin
    refresh_failures: int
    misalignment_norm_trace: tuple[tuple[int, float], ...] | None


@dataclass(frozen=True)
class RunRecord:
    fingerprint: str
    rows: tuple[LogRow, ...]
    summary: RunSummary
    # Per-step parameter snapshots, kept only for small single-matrix runs
    # so the report path can draw trajectories.
    trajectory: tuple[tuple[np.ndarray, ...], ...] | None = None


def validate_run_config(cfg: RunConfig) -> None:
    if cfg.optimizer not in OPTIMIZERS:
        raise ConfigError(f"optimizer: unknown name {cfg.optimizer!r}, expected one of {OPTIMIZERS}")
    if not isinstance(cfg.hyper, AdamHyper):
        raise ConfigError("hyper: expected an AdamHyper instance")
    if not isinstance(cfg.landscape, (QuadraticSpec, SpiralSpec, MlpSpec, KroneckerQuadraticSpec)):
        raise ConfigError(f"landscape: unsupported spec type {type(cfg.landscape).__name__}")
    if not (0 <= int(cfg.seed) < 2**64):
        raise ConfigError("seed: must fit in an unsigned 64-bit integer")
    if cfg.max_steps < 0:
        raise ConfigError("max_steps: must be >= 0")
    if cfg.log_every < 1:
        raise ConfigError("log_every: must be >= 1")
    if cfg.loss_threshold is not None and not math.isfinite(cfg.loss_threshold):
        raise ConfigError("loss_threshold: must be finite or absent")
    if cfg.batch_size is not None:
        if not isinstance(cfg.landscape, MlpSpec):
            raise ConfigError("batch_size: only valid for the mlp landscape")
        if cfg.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
    if cfg.init_scale is not None and cfg.init_scale <= 0:
        raise ConfigError("init_scale: must be positive")
    if not 0.0 <= cfg.dc_lambda <= 1.0:
        raise ConfigError("dc_lambda: must lie in [0, 1]")
    if cfg.pipedream_exponent < 0.0:
        raise ConfigError("pipedream_exponent: must be >= 0")
    initial_params(cfg)  # shape checks on start


def resolved_estimation(cfg: RunConfig) -> EstimationConfig:
    """Estimation config with beta2 defaulting to the optimizer's beta2."""
    if cfg.estimation is not None:
        return cfg.estimation
    return EstimationConfig(beta2=cfg.hyper.beta2)


def initial_params(cfg: RunConfig) -> tuple[np.ndarray, ...]:
    land = cfg.landscape
    if isinstance(land, MlpSpec):
        shapes = land.weight_shapes
        if cfg.start is not None:
            arrs = tuple(np.array(a, dtype=float) for a in cfg.start)
            if len(arrs) != len(shapes) or any(a.shape != s for a, s in zip(arrs, shapes)):
                raise ConfigError(f"start: expected matrices of shapes {shapes}")
            return arrs
        gen = rng.stream(cfg.seed, "init")
        out = []
        for fan_in, fan_out in shapes:
            scale = cfg.init_scale if cfg.init_scale is not None else 1.0 / math.sqrt(fan_in)
            out.append(gen.standard_normal((fan_in, fan_out)) * scale)
        return tuple(out)
    if cfg.start is None:
        raise ConfigError("start: required for quadratic, spiral and kronecker landscapes")
    w = np.array(cfg.start, dtype=float)
    if isinstance(land, KroneckerQuadraticSpec):
        if w.shape != land.shape:
            raise ConfigError(f"start: expected shape {land.shape}, got {w.shape}")
        return (w,)
    if w.ndim == 1:
        w = w.reshape(-1, 1)
    expected = land.dim if isinstance(land, QuadraticSpec) else 2
    if w.shape != (expected, 1):
        raise ConfigError(f"start: expected {expected} coordinates, got shape {w.shape}")
    return (w,)


def _make_eval(land: Landscape):
    """Uniform eval_fn(params, batch) -> (loss, grads) over all landscapes."""
    if isinstance(land, QuadraticSpec):

        def ev(params, batch):
            loss, g = quadratic_eval(land, params[0][:, 0])
            return loss, (g.reshape(-1, 1),)

    elif isinstance(land, SpiralSpec):

        def ev(params, batch):
            loss, g = spiral_eval(land, params[0][:, 0])
            return loss, (g.reshape(-1, 1),)

    elif isinstance(land, KroneckerQuadraticSpec):

        def ev(params, batch):
            loss, g = kronecker_eval(land, params[0])
            return loss, (g,)

    else:

        def ev(params, batch):
            loss, gs = mlp_eval(land, list(params), batch)
            return loss, tuple(gs)

    return ev


def _make_batcher(cfg: RunConfig):
    land = cfg.landscape
    if not isinstance(land, MlpSpec):
        return lambda t: None
    x, y = mlp_dataset(land)
    n = x.shape[0]
    if cfg.batch_size is None or cfg.batch_size >= n:
        full = (x, y)
        return lambda t: full
    gen = rng.stream(cfg.seed, "batch")
    size = cfg.batch_size

    def batcher(t):
        idx = gen.integers(0, n, size=size)
        return x[idx], y[idx]

    return batcher


def _init_states(cfg: RunConfig, shapes):
    if cfg.optimizer == "rotated_adam":
        est = resolved_estimation(cfg)
        return [init_rotated_state(s, est) for s in shapes]
    if cfg.optimizer == "adasgd":
        return [init_adasgd_state(s) for s in shapes]
    lam = cfg.dc_lambda if cfg.optimizer == "delay_compensated_adam" else None
    return [init_adam_state(s, dc_lambda=lam) for s in shapes]


def exact_hessian(land: Landscape) -> np.ndarray:
    """Closed-form Hessian in vec (column-stacking) coordinates."""
    if isinstance(land, QuadraticSpec):
        return np.asarray(land.hessian, dtype=float)
    if isinstance(land, KroneckerQuadraticSpec):
        return land.hessian
    raise UnsupportedMetricError(
        f"{type(land).__name__} has no closed-form Hessian; misalignment norm unavailable"
    )


def _misalignment_norm(hessian: np.ndarray, basis: BasisState | None) -> float:
    if basis is None:
        return float(one_one_norm(hessian))
    r = kronecker(basis.v, basis.u)  # vec(U^T W V) = (V (x) U)^T vec(W)
    if r.shape[0] != hessian.shape[0]:
        raise UnsupportedMetricError(
            f"basis of shape {r.shape} does not act on a Hessian of shape {hessian.shape}"
        )
    return float(one_one_norm(matmul(matmul(r.T, hessian), r)))


def misalignment_trace(land: Landscape, basis: BasisState | None = None) -> float:
    """(1,1)-norm of the Hessian in the rotated coordinates (V (x) U)^T H (V (x) U).

    basis=None means the standard coordinate basis. For column-vector
    parameters the Kronecker factor V is 1x1 and this reduces to U^T H U.
    """
    return _misalignment_norm(exact_hessian(land), basis)


def _make_predictor(cfg: RunConfig, states, delays):
    hyper = cfg.hyper
    scale = cfg.staleness.prediction_horizon_scale

    def predictor(p, i, served):
        h = hyper
        if cfg.optimizer == "pipedream_lr":
            h = replace(hyper, eta=pipedream_lr_scale(delays[i], hyper.eta, cfg.pipedream_exponent))
        return p - served * scale * h.eta * update_direction(states[i], h)

    return predictor


def _apply_step(cfg: RunConfig, params, grads, states, params_used, delays, est):
    if cfg.optimizer == "delay_compensated_adam":
        grads = tuple(
            delay_compensated_gradient(g, w_now, w_old, cfg.dc_lambda)
            for g, w_now, w_old in zip(grads, params, params_used)
        )
    grads = clip_global_norm(tuple(np.asarray(g, dtype=float) for g in grads), cfg.hyper.grad_clip)
    new_params = []
    new_states = []
    for i, (w, g, st) in enumerate(zip(params, grads, states)):
        hyper = cfg.hyper
        if cfg.optimizer == "pipedream_lr":
            hyper = replace(hyper, eta=pipedream_lr_scale(delays[i], hyper.eta, cfg.pipedream_exponent))
        if cfg.optimizer == "rotated_adam":
            w2, s2 = rotated_adam_step(w, g, st, hyper, est)
        elif cfg.optimizer == "adasgd":
            w2, s2 = adasgd_step(w, g, st, hyper)
        elif cfg.optimizer == "nesterov_adam":
            w2, s2 = nesterov_adam_step(w, g, st, hyper)
        else:
            w2, s2 = adam_step(w, g, st, hyper)
        new_params.append(w2)
        new_states.append(s2)
    return tuple(new_params), new_states


def run_experiment(cfg: RunConfig) -> RunRecord:
    """Step loop: fetch delayed gradient -> optimizer step -> advance stash -> log.

    Stops at max_steps, threshold crossing, or divergence (loss above
    DIVERGENCE_LOSS or non-finite; flagged in the record, not an abort).
    """
    validate_run_config(cfg)
    land = cfg.landscape
    eval_fn = _make_eval(land)
    batcher = _make_batcher(cfg)
    params = initial_params(cfg)
    states = _init_states(cfg, [p.shape for p in params])
    est = resolved_estimation(cfg) if cfg.optimizer == "rotated_adam" else None
    delays = param_delays(cfg.staleness, len(params))
    stash = init_stash(params, cfg.staleness.max_delay)
    try:
        hess = exact_hessian(land)
    except UnsupportedMetricError:
        hess = None

    track = len(params) == 1 and params[0].size <= 8
    trajectory = [params] if track else None
    rows: list[LogRow] = []
    iterations = None
    diverged = False
    terminated = "max_steps"
    final_loss = math.nan
    t = 0
    while True:
        batch = batcher(t)
        try:
            loss_now = float(eval_fn(params, batch)[0])
        except NearOriginError:
            terminated = "near_origin"
            break
        final_loss = loss_now
        if not math.isfinite(loss_now) or loss_now > DIVERGENCE_LOSS:
            diverged = True
            terminated = "diverged"
            break
        if cfg.loss_threshold is not None and loss_now <= cfg.loss_threshold:
            iterations = t
            terminated = "threshold"
            break
        if t >= cfg.max_steps:
            terminated = "max_steps"
            break
        predictor = None
        if cfg.staleness.mode == "prediction":
            predictor = _make_predictor(cfg, states, delays)
        try:
            grads, served, params_used = delayed_gradient(
                eval_fn, stash, batch, cfg.staleness, delays, predictor
            )
        except NearOriginError:
            terminated = "near_origin"
            break
        if t % cfg.log_every == 0:
            gnorm = math.sqrt(sum(frobenius_norm(g) ** 2 for g in grads))
            mis = None if hess is None else _misalignment_norm(hess, states[0].basis)
            rows.append(
                LogRow(
                    step=t,
                    loss=loss_now,
                    grad_norm=gnorm,
                    effective_delay=max(served),
                    misalignment_norm=mis,
                )
            )
        try:
            params, states = _apply_step(cfg, params, grads, states, params_used, delays, est)
        except NonFiniteGradientError:
            diverged = True
            terminated = "diverged"
            break
        stash = advance(stash, params)
        if trajectory is not None:
            trajectory.append(params)
        t += 1

    refresh_failures = sum(s.basis.refresh_failures for s in states if s.basis is not None)
    trace = tuple((r.step, r.misalignment_norm) for r in rows if r.misalignment_norm is not None)
    summary = RunSummary(
        iterations_to_threshold=iterations,
        final_loss=final_loss,
        wall_steps=t,
        diverged=diverged,
        terminated=terminated,
        refresh_failures=refresh_failures,
        misalignment_norm_trace=trace if trace else None,
    )
    return RunRecord(
        fingerprint=config_fingerprint(cfg),
        rows=tuple(rows),
        summary=summary,
        trajectory=tuple(trajectory) if trajectory is not None else None,
    )


def slowdown_ratio(with_delay: RunRecord, without: RunRecord) -> float:
    """T_delay / T_no-delay, iterations to the common loss threshold."""
    t_delay = with_delay.summary.iterations_to_threshold
    t_base = without.summary.iterations_to_threshold
    if t_delay is None:
        raise ThresholdNotReachedError("with_delay")
    if t_base is None:
        raise ThresholdNotReachedError("without")
    if t_base == 0:
        return 1.0 if t_delay == 0 else math.inf
    return t_delay / t_base


# ---------------------------------------------------------------------------
# Config serialization and fingerprints


def _nested(a) -> list:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        return [f17(v) for v in arr]
    return [[f17(v) for v in row] for row in arr]


def _landscape_dict(land: Landscape) -> dict:
    if isinstance(land, QuadraticSpec):
        return {
            "kind": "quadratic",
            "eigenvalues": [f17(v) for v in land.eigenvalues],
            "rotation": _nested(land.rotation),
        }
    if isinstance(land, SpiralSpec):
        return {
            "kind": "spiral",
            "amplitude": f17(land.amplitude),
            "frequency": f17(land.frequency),
            "offset": f17(land.offset),
        }
    if isinstance(land, MlpSpec):
        return {
            "kind": "mlp",
            "layer_dims": list(land.layer_dims),
            "dataset_seed": land.dataset_seed,
            "n_samples": land.n_samples,
            "activation": land.activation,
            "input_mixing": None if land.input_mixing is None else _nested(land.input_mixing),
        }
    return {
        "kind": "kronecker_quadratic",
        "a": _nested(land.a),
        "b": _nested(land.b),
    }


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical plain-dict form; floats as 17-significant-digit strings."""
    est = resolved_estimation(cfg) if cfg.optimizer == "rotated_adam" else None
    start = None
    if cfg.start is not None:
        if isinstance(cfg.landscape, MlpSpec):
            start = [_nested(a) for a in cfg.start]
        else:
            start = _nested(np.array(cfg.start, dtype=float))
    return {
        "landscape": _landscape_dict(cfg.landscape),
        "optimizer": cfg.optimizer,
        "hyper": {
            "eta": f17(cfg.hyper.eta),
            "beta1": f17(cfg.hyper.beta1),
            "beta2": f17(cfg.hyper.beta2),
            "epsilon": f17(cfg.hyper.epsilon),
            "weight_decay": f17(cfg.hyper.weight_decay),
            "grad_clip": None if cfg.hyper.grad_clip is None else f17(cfg.hyper.grad_clip),
        },
        "estimation": None
        if est is None
        else {
            "source": est.source,
            "geometry": est.geometry,
            "beta2": f17(est.beta2),
            "update_frequency": est.update_frequency,
        },
        "staleness": {
            "tau": cfg.staleness.tau,
            "per_stage": None if cfg.staleness.per_stage is None else list(cfg.staleness.per_stage),
            "mode": cfg.staleness.mode,
            "prediction_horizon_scale": f17(cfg.staleness.prediction_horizon_scale),
        },
        "seed": int(cfg.seed),
        "max_steps": cfg.max_steps,
        "loss_threshold": None if cfg.loss_threshold is None else f17(cfg.loss_threshold),
        "log_every": cfg.log_every,
        "batch_size": cfg.batch_size,
        "start": start,
        "init_scale": None if cfg.init_scale is None else f17(cfg.init_scale),
        "pipedream_exponent": f17(cfg.pipedream_exponent),
        "dc_lambda": f17(cfg.dc_lambda),
    }


def _sha256_of(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_fingerprint(cfg: RunConfig) -> str:
    return _sha256_of(config_to_dict(cfg))


# ---------------------------------------------------------------------------
# Artifact emitters


def trace_csv_text(record: RunRecord) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in record.rows:
        writer.writerow(
            [
                r.step,
                f17(r.loss),
                f17(r.grad_norm),
                r.effective_delay,
                "" if r.misalignment_norm is None else f17(r.misalignment_norm),
            ]
        )
    return out.getvalue()


def _json_float(x: float):
    # JSON has no inf/nan literals; diverged runs stringify them.
    return x if math.isfinite(x) else format(x)


def summary_json_text(record: RunRecord) -> str:
    s = record.summary
    trace = s.misalignment_norm_trace
    d = {
        "fingerprint": record.fingerprint,
        "iterations_to_threshold": s.iterations_to_threshold,
        "final_loss": _json_float(s.final_loss),
        "wall_steps": s.wall_steps,
        "diverged": s.diverged,
        "terminated": s.terminated,
        "refresh_failures": s.refresh_failures,
        "misalignment_norm_trace": None
        if trace is None
        else [[step, _json_float(v)] for step, v in trace],
    }
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def write_atomic(path: str, text: str) -> str:
    """Write-then-rename so partially written artifacts never land."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def write_run_artifacts(record: RunRecord, out_dir: str) -> tuple[str, str]:
    trace = write_atomic(os.path.join(out_dir, "trace.csv"), trace_csv_text(record))
    summary = write_atomic(os.path.join(out_dir, "summary.json"), summary_json_text(record))
    return trace, summary


# ---------------------------------------------------------------------------
# Grid sweeps


@dataclass(frozen=True)
class SweepCell:
    overrides: tuple[tuple[str, object], ...]
    record: RunRecord


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """One sweep cell: base config plus scalar overrides.

    Supported keys: optimizer, seed, max_steps, loss_threshold, log_every,
    dc_lambda, pipedream_exponent, eta, beta1, beta2, epsilon, weight_decay,
    grad_clip (0 disables), tau, stages (1F1B profile P-1..0), mode,
    prediction_horizon_scale, source, geometry, update_frequency (0 = never),
    estimation_beta2.
    """
    from .staleness import stage_delay_profile

    hyper_keys = {"eta", "beta1", "beta2", "epsilon", "weight_decay"}
    est_keys = {"source", "geometry", "update_frequency", "estimation_beta2"}
    for key in sorted(overrides):
        value = overrides[key]
        if key == "optimizer":
            cfg = replace(cfg, optimizer=str(value))
        elif key == "seed":
            cfg = replace(cfg, seed=int(value))
        elif key == "max_steps":
            cfg = replace(cfg, max_steps=int(value))
        elif key == "loss_threshold":
            cfg = replace(cfg, loss_threshold=None if value is None else float(value))
        elif key == "log_every":
            cfg = replace(cfg, log_every=int(value))
        elif key == "dc_lambda":
            cfg = replace(cfg, dc_lambda=float(value))
        elif key == "pipedream_exponent":
            cfg = replace(cfg, pipedream_exponent=float(value))
        elif key in hyper_keys:
            cfg = replace(cfg, hyper=replace(cfg.hyper, **{key: float(value)}))
        elif key == "grad_clip":
            clip = float(value)
            cfg = replace(cfg, hyper=replace(cfg.hyper, grad_clip=None if clip == 0.0 else clip))
        elif key == "tau":
            cfg = replace(cfg, staleness=replace(cfg.staleness, tau=int(value), per_stage=None))
        elif key == "stages":
            profile = stage_delay_profile(int(value))
            cfg = replace(cfg, staleness=replace(cfg.staleness, tau=0, per_stage=profile))
        elif key == "mode":
            cfg = replace(cfg, staleness=replace(cfg.staleness, mode=str(value)))
        elif key == "prediction_horizon_scale":
            cfg = replace(cfg, staleness=replace(cfg.staleness, prediction_horizon_scale=float(value)))
        elif key in est_keys:
            est = cfg.estimation if cfg.estimation is not None else EstimationConfig(beta2=cfg.hyper.beta2)
            if key == "source":
                est = replace(est, source=str(value))
            elif key == "geometry":
                est = replace(est, geometry=str(value))
            elif key == "update_frequency":
                freq = int(value)
                est = replace(est, update_frequency=None if freq == 0 else freq)
            else:
                est = replace(est, beta2=float(value))
            cfg = replace(cfg, estimation=est)
        else:
            raise ConfigError(f"sweep key {key!r} is not supported")
    return cfg


def run_grid_sweep(base: RunConfig, grid: dict, max_workers: int | None = None) -> tuple[SweepCell, ...]:
    """Cartesian product over the grid; cells run concurrently, each owning
    its state exclusively; results are ordered deterministically by key."""
    keys = sorted(grid)
    if not keys:
        raise ConfigError("grid: at least one sweep key is required")
    combos = list(itertools.product(*(list(grid[k]) for k in keys)))
    cfgs = [apply_overrides(base, dict(zip(keys, vals))) for vals in combos]
    workers = max_workers if max_workers is not None else min(8, max(1, len(cfgs)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(run_experiment, cfgs))
    return tuple(
        SweepCell(overrides=tuple(zip(keys, vals)), record=rec)
        for vals, rec in zip(combos, records)
    )


def _cell_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f17(v)
    return str(v)


def sweep_csv_text(cells: tuple[SweepCell, ...]) -> str:
    if not cells:
        raise ValueError("empty sweep")
    keys = [k for k, _ in cells[0].overrides]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(keys + ["iterations_to_threshold", "final_loss", "wall_steps", "diverged", "fingerprint"])
    for cell in cells:
        s = cell.record.summary
        row = [_cell_value(v) for _, v in cell.overrides]
        row += [
            "" if s.iterations_to_threshold is None else str(s.iterations_to_threshold),
            f17(s.final_loss) if math.isfinite(s.final_loss) else format(s.final_loss),
            str(s.wall_steps),
            "true" if s.diverged else "false",
            cell.record.fingerprint,
        ]
        writer.writerow(row)
    return out.getvalue()


# ---------------------------------------------------------------------------
# Spiral slowdown sweep


@dataclass(frozen=True)
class SpiralProbe:
    step: int
    x: float
    y: float
    angle_deg: float
    label: str  # aligned | misaligned | mixed
    steps_fresh: int
    steps_delayed: int
    ratio: float


@dataclass(frozen=True)
class SpiralSweepResult:
    fingerprint: str
    probes: tuple[SpiralProbe, ...]
    n_skipped: int
    aligned_mean: float | None
    misaligned_mean: float | None


def unwrapped_angles(positions) -> np.ndarray:
    """Cumulative polar angle along a planar trajectory (no 2-pi jumps)."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        return np.zeros(0)
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    delta = np.diff(theta)
    delta = (delta + np.pi) % (2.0 * np.pi) - np.pi
    return np.concatenate([[theta[0]], theta[0] + np.cumsum(delta)])


def spiral_region_label(
    spec: SpiralSpec,
    xy,
    fd_step: float = 1e-3,
    aligned_max: float = ALIGNED_MAX_MIXING,
    misaligned_min: float = MISALIGNED_MIN_MIXING,
) -> str:
    """aligned / misaligned / mixed by the off-diagonal Hessian entry at xy.

    The Hessian comes from central finite differences; the decision value is
    the scale-free |sin 2phi| where phi is the angle between the local
    eigenbasis and the coordinate axes.
    """

    def loss_only(p):
        return spiral_eval(spec, p)[0]

    h = finite_difference_hessian(loss_only, np.asarray(xy, dtype=float), fd_step)
    off = h[0, 1] + h[1, 0]
    denom = math.hypot(h[0, 0] - h[1, 1], off)
    if denom == 0.0:
        return "aligned" if off == 0.0 else "misaligned"
    mixing = abs(off) / denom
    if mixing <= aligned_max:
        return "aligned"
    if mixing >= misaligned_min:
        return "misaligned"
    return "mixed"


def _scan_traversal(cum: np.ndarray, k: int, rad: float) -> int | None:
    base = cum[k]
    for j in range(k + 1, len(cum)):
        if abs(cum[j] - base) >= rad:
            return j - k
    return None


def _fork_traversal(cfg: RunConfig, snap, tau: int, rad: float, budget: int, est) -> int | None:
    params, states = snap
    st_cfg = StalenessConfig(
        tau=tau,
        mode=cfg.staleness.mode,
        prediction_horizon_scale=cfg.staleness.prediction_horizon_scale,
    )
    fork_cfg = replace(cfg, staleness=st_cfg)
    delays = (tau,)
    stash = init_stash(params, tau)
    eval_fn = _make_eval(cfg.landscape)
    theta_prev = math.atan2(params[0][1, 0], params[0][0, 0])
    cum = 0.0
    for n in range(1, budget + 1):
        predictor = None
        if st_cfg.mode == "prediction":
            predictor = _make_predictor(fork_cfg, states, delays)
        try:
            grads, _, used = delayed_gradient(eval_fn, stash, None, st_cfg, delays, predictor)
            params, states = _apply_step(fork_cfg, params, grads, states, used, delays, est)
        except (NearOriginError, NonFiniteGradientError):
            return None
        stash = advance(stash, params)
        theta = math.atan2(params[0][1, 0], params[0][0, 0])
        d = (theta - theta_prev + math.pi) % (2.0 * math.pi) - math.pi
        cum += d
        theta_prev = theta
        if abs(cum) >= rad:
            return n
    return None


def spiral_slowdown_sweep(
    cfg: RunConfig,
    n_probes: int = 200,
    traversal_deg: float = 3.0,
    fork_max_steps: int = 500,
    fd_step: float = 1e-3,
    aligned_max: float = ALIGNED_MAX_MIXING,
    misaligned_min: float = MISALIGNED_MIN_MIXING,
) -> SpiralSweepResult:
    """Fork a delay injection at randomly chosen base iterations.

    The base run executes without delay; at each probe the fresh traversal
    count is read off the base trajectory and the delayed count comes from a
    fork whose stash starts at the probe point (the delay ramps in exactly as
    a pipeline filling up would). Probes that cannot traverse the target
    angle before the base run ends, or within fork_max_steps, are skipped
    and counted.
    """
    validate_run_config(cfg)
    if not isinstance(cfg.landscape, SpiralSpec):
        raise ConfigError("landscape: spiral_slowdown_sweep requires the spiral landscape")
    if n_probes < 1:
        raise ConfigError("n_probes: must be >= 1")
    if traversal_deg <= 0.0:
        raise ConfigError("traversal_deg: must be positive")
    tau = cfg.staleness.max_delay
    base_staleness = StalenessConfig(tau=0)
    base_cfg = replace(cfg, staleness=base_staleness)
    est = resolved_estimation(cfg) if cfg.optimizer == "rotated_adam" else None

    eval_fn = _make_eval(cfg.landscape)
    params = initial_params(cfg)
    states = _init_states(cfg, [p.shape for p in params])
    stash = init_stash(params, 0)
    snaps = []
    positions = []
    for _ in range(cfg.max_steps):
        try:
            grads, _, used = delayed_gradient(eval_fn, stash, None, base_staleness, (0,), None)
        except NearOriginError:
            break
        snaps.append((params, states))
        positions.append((params[0][0, 0], params[0][1, 0]))
        try:
            params, states = _apply_step(base_cfg, params, grads, states, used, (0,), est)
        except NonFiniteGradientError:
            break
        stash = advance(stash, params)
    else:
        positions.append((params[0][0, 0], params[0][1, 0]))
    if not snaps:
        raise ConfigError("max_steps: base run produced no usable steps")
    if len(positions) == len(snaps):  # run ended early; last snapshot has no successor
        snaps.pop()
    if not snaps:
        raise ConfigError("max_steps: base run produced no usable steps")

    cum = unwrapped_angles(positions)
    rad = math.radians(traversal_deg)
    gen = rng.stream(cfg.seed, "probes")
    probe_steps = gen.integers(0, len(snaps), size=n_probes)

    probes = []
    skipped = 0
    for k in probe_steps:
        k = int(k)
        fresh = _scan_traversal(cum, k, rad)
        delayed = _fork_traversal(cfg, snaps[k], tau, rad, fork_max_steps, est)
        if fresh is None or delayed is None:
            skipped += 1
            continue
        x, y = positions[k]
        label = spiral_region_label(cfg.landscape, (x, y), fd_step, aligned_max, misaligned_min)
        probes.append(
            SpiralProbe(
                step=k,
                x=float(x),
                y=float(y),
                angle_deg=math.degrees(math.atan2(y, x)),
                label=label,
                steps_fresh=fresh,
                steps_delayed=delayed,
                ratio=delayed / fresh,
            )
        )

    aligned = [p.ratio for p in probes if p.label == "aligned"]
    misaligned = [p.ratio for p in probes if p.label == "misaligned"]
    payload = {
        "run": config_to_dict(cfg),
        "n_probes": n_probes,
        "traversal_deg": f17(traversal_deg),
        "fork_max_steps": fork_max_steps,
        "fd_step": f17(fd_step),
        "aligned_max": f17(aligned_max),
        "misaligned_min": f17(misaligned_min),
    }
    return SpiralSweepResult(
        fingerprint=_sha256_of(payload),
        probes=tuple(probes),
        n_skipped=skipped,
        aligned_mean=sum(aligned) / len(aligned) if aligned else None,
        misaligned_mean=sum(misaligned) / len(misaligned) if misaligned else None,
    )


def probes_csv_text(result: SpiralSweepResult) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["step", "x", "y", "angle_deg", "label", "steps_fresh", "steps_delayed", "ratio"])
    for p in result.probes:
        writer.writerow(
            [p.step, f17(p.x), f17(p.y), f17(p.angle_deg), p.label, p.steps_fresh, p.steps_delayed, f17(p.ratio)]
        )
    return out.getvalue()


def spiral_summary_json_text(result: SpiralSweepResult) -> str:
    counts = {"aligned": 0, "misaligned": 0, "mixed": 0}
    for p in result.probes:
        counts[p.label] += 1
    d = {
        "fingerprint": result.fingerprint,
        "n_probes": len(result.probes) + result.n_skipped,
        "n_skipped": result.n_skipped,
        "label_counts": counts,
        "aligned_mean": result.aligned_mean,
        "misaligned_mean": result.misaligned_mean,
    }
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def cli_main(argv=None) -> int:
    """Command-line entry point; see delaylab.cli for the subcommands."""
    from .cli import cli_main as impl

    return impl(argv)
