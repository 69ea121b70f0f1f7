"""Delay engine: serve gradients computed on stale parameters.

A run is simulated single-process; a "pipeline stage" contributes only its
delay value, which is all the optimization behavior depends on. The stash
ring buffer keeps exactly max_delay + 1 parameter snapshots. While the
buffer warms up the effective delay ramps 0, 1, ..., tau, mirroring how a
real pipeline fills.

Two modes:

* stashing: the gradient at step t is evaluated on the snapshot from
  tau steps ago (forward and backward on the same weights).
* prediction: the stale snapshot is extrapolated forward by the optimizer's
  own scaled momentum, w_hat = w_stale - tau * eta * M/sqrt(V + eps), scaled
  by prediction_horizon_scale; no extra snapshots are needed beyond the
  stale one. With tau = 0 this degenerates to stashing exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StalenessConfig",
    "StashBuffer",
    "init_stash",
    "advance",
    "delayed_gradient",
    "stage_delay_profile",
    "layer_stage_map",
    "param_delays",
]

MODES = ("stashing", "prediction")


@dataclass(frozen=True)
class StalenessConfig:
    """Delay structure of a run.

    Either a uniform delay ``tau`` or a per-stage delay vector ``per_stage``
    (parameter matrices are mapped onto stages by :func:`layer_stage_map`).
    """

    tau: int = 0
    per_stage: tuple[int, ...] | None = None
    mode: str = "stashing"
    prediction_horizon_scale: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.per_stage is not None:
            stages = tuple(int(d) for d in self.per_stage)
            if any(d < 0 for d in stages):
                raise ValueError(f"per-stage delays must be >= 0, got {stages}")
            object.__setattr__(self, "per_stage", stages)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.prediction_horizon_scale < 0.0:
            raise ValueError("prediction_horizon_scale must be >= 0")

    @property
    def max_delay(self) -> int:
        if self.per_stage is not None:
            return max(self.per_stage) if self.per_stage else 0
        return self.tau


@dataclass(frozen=True)
class StashBuffer:
    """Ring of parameter snapshots, oldest first, capacity max_delay + 1."""

    capacity: int
    snapshots: tuple[tuple[np.ndarray, ...], ...]

    def __len__(self) -> int:
        return len(self.snapshots)

    def snapshot(self, delay: int) -> tuple[tuple[np.ndarray, ...], int]:
        """Snapshot from ``delay`` steps ago and the delay actually served.

        During warm-up the oldest available snapshot is served, so the
        effective delay ramps up from 0 instead of stalling the pipeline.
        """
        if delay < 0:
            raise ValueError(f"delay must be >= 0, got {delay}")
        idx = max(len(self.snapshots) - 1 - delay, 0)
        return self.snapshots[idx], len(self.snapshots) - 1 - idx


def _as_snapshot(params) -> tuple[np.ndarray, ...]:
    return tuple(np.array(p, dtype=np.float64) for p in params)


def init_stash(params, max_delay: int) -> StashBuffer:
    if max_delay < 0:
        raise ValueError(f"max_delay must be >= 0, got {max_delay}")
    return StashBuffer(capacity=max_delay + 1, snapshots=(_as_snapshot(params),))


def advance(stash: StashBuffer, w_new) -> StashBuffer:
    """Push the post-step parameters, evicting anything older than capacity."""
    snapshots = stash.snapshots + (_as_snapshot(w_new),)
    if len(snapshots) > stash.capacity:
        snapshots = snapshots[len(snapshots) - stash.capacity:]
    return StashBuffer(capacity=stash.capacity, snapshots=snapshots)


def stage_delay_profile(n_stages: int) -> tuple[int, ...]:
    """Per-stage delays (P-1, P-2, ..., 0) of a 1F1B-style schedule."""
    if n_stages < 1:
        raise ValueError(f"n_stages must be >= 1, got {n_stages}")
    return tuple(range(n_stages - 1, -1, -1))


def layer_stage_map(n_layers: int, n_stages: int) -> tuple[int, ...]:
    """Stage index (0-based) hosting each of n_layers layers.

    Layer i (1-based) goes to stage ceil(i * P / L); contiguous blocks,
    last layer always on the last stage.
    """
    if n_layers < 1 or n_stages < 1:
        raise ValueError("n_layers and n_stages must be >= 1")
    return tuple(math.ceil((i + 1) * n_stages / n_layers) - 1 for i in range(n_layers))


def param_delays(config: StalenessConfig, n_params: int) -> tuple[int, ...]:
    """Resolve the per-parameter-matrix delay vector for a run."""
    if config.per_stage is None:
        return (config.tau,) * n_params
    stages = layer_stage_map(n_params, len(config.per_stage))
    return tuple(config.per_stage[s] for s in stages)


def delayed_gradient(
    eval_fn,
    stash: StashBuffer,
    batch,
    config: StalenessConfig,
    delays: tuple[int, ...] | None = None,
    predictor=None,
):
    """Gradients evaluated on stale parameters.

    eval_fn(params, batch) -> (loss, grads). ``delays`` gives the delay per
    parameter matrix (default: uniform config.tau); parameters of different
    ages are assembled into one evaluation, the way pipeline stages mix
    weight versions. In prediction mode ``predictor(param, index, served)``
    maps each stale matrix to its extrapolated stand-in.

    Returns (grads, served_delays, params_used): served_delays are the
    delays actually realized after the warm-up clamp.
    """
    n_params = len(stash.snapshots[0])
    if delays is None:
        delays = (config.tau,) * n_params
    if len(delays) != n_params:
        raise ValueError(f"got {len(delays)} delays for {n_params} parameter matrices")
    params_used = []
    served_delays = []
    for i, delay in enumerate(delays):
        snap, served = stash.snapshot(delay)
        p = snap[i]
        if config.mode == "prediction" and predictor is not None and served > 0:
            p = predictor(p, i, served)
        params_used.append(p)
        served_delays.append(served)
    _, grads = eval_fn(tuple(params_used), batch)
    return tuple(grads), tuple(served_delays), tuple(params_used)
