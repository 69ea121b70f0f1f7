"""Optimizer zoo for delayed-gradient experiments.

All steps are pure functions (w, g, state, hyper) -> (w', state') on single
parameter matrices; a run orchestrator composes them across matrices and
supplies possibly stale gradients. Shared conventions:

* No bias correction anywhere: moments are plain EMAs. A correction would
  change every trajectory the staleness analysis relies on, so it is off by
  default and exposed only through the run configs.
* Gradient clipping is by global norm, applied before any moment update.
  For multi-matrix runs the orchestrator clips jointly with
  :func:`clip_global_norm`; afterwards the per-matrix clip inside each step
  is an exact no-op, so the two layers never fight.
* Weight decay is decoupled: w' picks up an extra -eta * wd * w term.

Basis-rotated Adam keeps its first moment in the ORIGINAL space and rotates
it on use (M~ = U^T M V). Only the second moment lives in the rotated space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .eigenbasis import BasisState, EstimationConfig, accumulate_statistics, init_basis, refresh_basis
from .linalg import ShapeMismatchError, check_matrix, frobenius_norm, matmul

__all__ = [
    "AdamHyper",
    "OptimizerState",
    "NonFiniteGradientError",
    "init_adam_state",
    "init_adasgd_state",
    "init_rotated_state",
    "clip_global_norm",
    "adam_step",
    "rotated_adam_step",
    "adasgd_step",
    "nesterov_adam_step",
    "pipedream_lr_scale",
    "delay_compensated_gradient",
    "update_direction",
]


class NonFiniteGradientError(ValueError):
    """A gradient with NaN/Inf entries reached an optimizer step."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite gradient at step {step}")


@dataclass(frozen=True)
class AdamHyper:
    """Adam-family hyperparameters.

    Defaults follow the large-model recipe (beta2 = 0.999, global clip 1.0,
    decoupled weight decay 0.01); the toy-landscape configs override them.
    grad_clip = None disables clipping.
    """

    eta: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    grad_clip: float | None = 1.0

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in (0, 1), got {self.beta2}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.grad_clip is not None and self.grad_clip <= 0.0:
            raise ValueError(f"grad_clip must be positive or None, got {self.grad_clip}")


@dataclass(frozen=True)
class OptimizerState:
    """Per-matrix moments plus (for rotated variants) the basis state.

    vt is the second moment: full matrix shape for Adam variants, a scalar
    0-d array for AdaSGD. dc_lambda is carried for the delay-compensation
    baseline so the orchestrator can apply it without extra plumbing.
    """

    m: np.ndarray = field(repr=False)
    vt: np.ndarray = field(repr=False)
    basis: BasisState | None = None
    step_count: int = 0
    dc_lambda: float | None = None


def init_adam_state(shape: tuple[int, int], dc_lambda: float | None = None) -> OptimizerState:
    return OptimizerState(m=np.zeros(shape), vt=np.zeros(shape), dc_lambda=dc_lambda)


def init_adasgd_state(shape: tuple[int, int]) -> OptimizerState:
    return OptimizerState(m=np.zeros(shape), vt=np.zeros(()))


def init_rotated_state(shape: tuple[int, int], est: EstimationConfig) -> OptimizerState:
    return OptimizerState(m=np.zeros(shape), vt=np.zeros(shape), basis=init_basis(shape[0], shape[1], est))


def clip_global_norm(grads: tuple[np.ndarray, ...], clip: float | None) -> tuple[np.ndarray, ...]:
    """Scale all gradients jointly so the global Frobenius norm is <= clip."""
    if clip is None:
        return grads
    total = 0.0
    for g in grads:
        total += float(np.einsum("ij,ij->", g, g))
    norm = float(np.sqrt(total))
    if norm <= clip:
        return grads
    scale = clip / norm
    return tuple(g * scale for g in grads)


def _prepared(w, g, state: OptimizerState, hyper: AdamHyper) -> tuple[np.ndarray, np.ndarray]:
    w = check_matrix(w, "w")
    g = np.asarray(g, dtype=np.float64)
    if g.shape != w.shape:
        raise ShapeMismatchError("optimizer step", g.shape, w.shape)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(state.step_count + 1)
    (g,) = clip_global_norm((g,), hyper.grad_clip)
    return w, g


def adam_step(w, g, state: OptimizerState, hyper: AdamHyper) -> tuple[np.ndarray, OptimizerState]:
    """Plain Adam without bias correction.

    M' = b1 M + (1-b1) g; V' = b2 V + (1-b2) g*g;
    w' = w - eta * M'/sqrt(V'+eps) - eta * wd * w.
    """
    w, g = _prepared(w, g, state, hyper)
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * g
    vt = hyper.beta2 * state.vt + (1.0 - hyper.beta2) * g * g
    w_new = w - hyper.eta * (m / np.sqrt(vt + hyper.epsilon))
    if hyper.weight_decay != 0.0:
        w_new = w_new - hyper.eta * hyper.weight_decay * w
    return w_new, replace(state, m=m, vt=vt, step_count=state.step_count + 1)


def rotated_adam_step(
    w, g, state: OptimizerState, hyper: AdamHyper, est: EstimationConfig
) -> tuple[np.ndarray, OptimizerState]:
    """Adam with basis rotation.

    Momentum accumulates in the original space; on schedule the basis is
    refreshed; then G~ = U^T G V, M~ = U^T M V, the second moment updates in
    the rotated space, and the step maps back through U (.) V^T. With U and V
    pinned to the identity the arithmetic is bit-identical to adam_step.
    """
    w, g = _prepared(w, g, state, hyper)
    basis = state.basis
    if basis is None:
        raise ValueError("rotated_adam_step needs a state built by init_rotated_state")
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * g
    basis = accumulate_statistics(basis, g, est)
    t = state.step_count + 1
    if est.update_frequency is not None and t % est.update_frequency == 0:
        basis = refresh_basis(basis, m, est)
    g_rot = matmul(matmul(basis.u.T, g), basis.v)
    m_rot = matmul(matmul(basis.u.T, m), basis.v)
    vt = hyper.beta2 * state.vt + (1.0 - hyper.beta2) * g_rot * g_rot
    step_rot = m_rot / np.sqrt(vt + hyper.epsilon)
    w_new = w - hyper.eta * matmul(matmul(basis.u, step_rot), basis.v.T)
    if hyper.weight_decay != 0.0:
        w_new = w_new - hyper.eta * hyper.weight_decay * w
    return w_new, replace(state, m=m, vt=vt, basis=basis, step_count=t)


def adasgd_step(w, g, state: OptimizerState, hyper: AdamHyper) -> tuple[np.ndarray, OptimizerState]:
    """SGD with one shared adaptive scale.

    The second moment collapses to the scalar EMA of mean(g*g), so every
    coordinate sees the same learning rate; momentum is as in Adam.
    """
    w, g = _prepared(w, g, state, hyper)
    if state.vt.shape != ():
        raise ValueError("adasgd_step needs a state built by init_adasgd_state")
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * g
    vbar = hyper.beta2 * state.vt + (1.0 - hyper.beta2) * np.mean(g * g)
    w_new = w - hyper.eta * (m / np.sqrt(vbar + hyper.epsilon))
    if hyper.weight_decay != 0.0:
        w_new = w_new - hyper.eta * hyper.weight_decay * w
    return w_new, replace(state, m=m, vt=vbar, step_count=state.step_count + 1)


def nesterov_adam_step(w, g, state: OptimizerState, hyper: AdamHyper) -> tuple[np.ndarray, OptimizerState]:
    """Adam with a Nesterov look-ahead numerator.

    The update direction uses b1 M' + (1-b1) g instead of M', anticipating
    the next momentum value; with beta1 = 0 this is exactly adam_step.
    """
    w, g = _prepared(w, g, state, hyper)
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * g
    lookahead = hyper.beta1 * m + (1.0 - hyper.beta1) * g
    vt = hyper.beta2 * state.vt + (1.0 - hyper.beta2) * g * g
    w_new = w - hyper.eta * (lookahead / np.sqrt(vt + hyper.epsilon))
    if hyper.weight_decay != 0.0:
        w_new = w_new - hyper.eta * hyper.weight_decay * w
    return w_new, replace(state, m=m, vt=vt, step_count=state.step_count + 1)


def pipedream_lr_scale(stage_delay: int, base_eta: float, exponent: float = 1.0) -> float:
    """Stage-wise learning rate: base_eta / (1 + delay)^exponent.

    Monotone non-increasing in the delay and equal to base_eta at delay 0.
    """
    if stage_delay < 0:
        raise ValueError(f"stage_delay must be >= 0, got {stage_delay}")
    return base_eta / (1.0 + stage_delay) ** exponent


def delay_compensated_gradient(g_stale, w_now, w_stale, lam: float) -> np.ndarray:
    """First-order Taylor correction of a stale gradient.

    g + lam * g (.) g (.) (w_now - w_stale): the elementwise g*g factor is a
    diagonal empirical-Fisher stand-in for the Hessian.
    """
    g_stale = check_matrix(g_stale, "g_stale")
    w_now = check_matrix(w_now, "w_now")
    w_stale = check_matrix(w_stale, "w_stale")
    if w_now.shape != g_stale.shape:
        raise ShapeMismatchError("delay_compensated_gradient", w_now.shape, g_stale.shape)
    if w_stale.shape != g_stale.shape:
        raise ShapeMismatchError("delay_compensated_gradient", w_stale.shape, g_stale.shape)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    return g_stale + lam * g_stale * g_stale * (w_now - w_stale)


def update_direction(state: OptimizerState, hyper: AdamHyper) -> np.ndarray:
    """Adam-scaled momentum direction M / sqrt(V + eps) from current moments.

    For rotated states the direction is mapped back to the original space.
    Used by the weight-prediction mode to extrapolate stale parameters.
    """
    if state.basis is not None:
        b = state.basis
        m_rot = matmul(matmul(b.u.T, state.m), b.v)
        d = m_rot / np.sqrt(state.vt + hyper.epsilon)
        return matmul(matmul(b.u, d), b.v.T)
    return state.m / np.sqrt(state.vt + hyper.epsilon)
