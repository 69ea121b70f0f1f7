"""Eigenbasis estimation for basis-rotated Adam.

Four strategies over a 2 x 2 design space:

* source: "second" tracks EMAs L = EMA(G G^T) and R = EMA(G^T G) of the
  gradient second moments; "first" reuses the optimizer's momentum matrix
  at refresh time (M M^T / M^T M) and needs no extra statistic buffers.
* geometry: "bilateral" rotates both sides of an m x n gradient;
  "unilateral" rotates only the smaller side (row side on ties) and pins
  the other basis to the identity.

Each refresh performs exactly one power-iteration step followed by QR
re-orthonormalization. Momentum itself is always accumulated in the
original space and rotated on use, so stale momentum never leaks between
bases when the estimate changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import (
    RankDeficientError,
    ShapeMismatchError,
    check_matrix,
    matmul,
    one_one_norm,
    power_qr_step,
)

__all__ = [
    "SOURCES",
    "GEOMETRIES",
    "EstimationConfig",
    "BasisState",
    "rotated_sides",
    "init_basis",
    "accumulate_statistics",
    "refresh_basis",
]

SOURCES = ("first", "second")
GEOMETRIES = ("unilateral", "bilateral")


@dataclass(frozen=True)
class EstimationConfig:
    """Which statistic feeds the basis, which sides rotate, and how often.

    update_frequency counts optimizer steps between refreshes; None means
    the basis is never refreshed (useful for fixed-basis experiments).
    """

    source: str = "second"
    geometry: str = "bilateral"
    beta2: float = 0.999
    update_frequency: int | None = 10

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in (0, 1), got {self.beta2}")
        if self.update_frequency is not None and self.update_frequency < 1:
            raise ValueError(f"update_frequency must be >= 1 or None, got {self.update_frequency}")


def rotated_sides(m: int, n: int, geometry: str) -> tuple[bool, bool]:
    """(rotate row side?, rotate column side?) for an m x n gradient.

    Bilateral rotates both. Unilateral rotates only the smaller dimension,
    with ties going to the row side.
    """
    if geometry == "bilateral":
        return True, True
    return (m <= n), (m > n)


@dataclass(frozen=True)
class BasisState:
    """Orthonormal bases plus the statistics that drive their refreshes.

    u is m x m, v is n x n; a side that never rotates keeps the identity.
    l_stat / r_stat are the second-source EMAs (None when unused).
    refresh_failures counts refreshes skipped because the statistic was
    degenerate (all zero or numerically rank deficient).
    """

    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    l_stat: np.ndarray | None = field(default=None, repr=False)
    r_stat: np.ndarray | None = field(default=None, repr=False)
    rotate_u: bool = True
    rotate_v: bool = True
    refresh_failures: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]


def init_basis(m: int, n: int, config: EstimationConfig) -> BasisState:
    """Identity bases and zero statistics, so the first refresh is driven
    purely by observed gradients."""
    if m < 1 or n < 1:
        raise ValueError(f"matrix dimensions must be positive, got {m}x{n}")
    rotate_u, rotate_v = rotated_sides(m, n, config.geometry)
    second = config.source == "second"
    return BasisState(
        u=np.eye(m),
        v=np.eye(n),
        l_stat=np.zeros((m, m)) if second and rotate_u else None,
        r_stat=np.zeros((n, n)) if second and rotate_v else None,
        rotate_u=rotate_u,
        rotate_v=rotate_v,
    )


def _ema_outer(stat: np.ndarray, outer: np.ndarray, beta2: float) -> np.ndarray:
    new = beta2 * stat + (1.0 - beta2) * outer
    return (new + new.T) / 2.0  # re-enforce symmetry lost to rounding


def accumulate_statistics(state: BasisState, g, config: EstimationConfig) -> BasisState:
    """Per-step EMA update of the second-source statistics.

    L <- beta2 L + (1 - beta2) g g^T on the rotated row side, and likewise
    R <- beta2 R + (1 - beta2) g^T g on the rotated column side. A no-op for
    the first source, which reads the momentum matrix at refresh time.
    """
    if config.source != "second":
        return state
    g = check_matrix(g, "g")
    if g.shape != state.shape:
        raise ShapeMismatchError("accumulate_statistics", g.shape, state.shape)
    l_stat = state.l_stat
    r_stat = state.r_stat
    if l_stat is not None:
        l_stat = _ema_outer(l_stat, matmul(g, g.T), config.beta2)
    if r_stat is not None:
        r_stat = _ema_outer(r_stat, matmul(g.T, g), config.beta2)
    return replace(state, l_stat=l_stat, r_stat=r_stat)


def _refresh_side(stat: np.ndarray | None, basis: np.ndarray) -> tuple[np.ndarray, bool]:
    """One power-QR step, falling back to the previous basis when the
    statistic is all zero or rank deficient."""
    if stat is None or one_one_norm(stat) == 0.0:
        return basis, False
    try:
        return power_qr_step(stat, basis), True
    except RankDeficientError:
        return basis, False


def refresh_basis(state: BasisState, momentum, config: EstimationConfig) -> BasisState:
    """Refresh the rotated sides from the configured statistic source.

    Second source uses the accumulated L / R EMAs; first source builds
    M M^T / M^T M from the optimizer's live momentum. Sides pinned to the
    identity by the geometry are never touched.
    """
    momentum = check_matrix(momentum, "momentum")
    if momentum.shape != state.shape:
        raise ShapeMismatchError("refresh_basis", momentum.shape, state.shape)
    if config.source == "second":
        stat_u = state.l_stat if state.rotate_u else None
        stat_v = state.r_stat if state.rotate_v else None
    else:
        stat_u = stat_v = None
        if state.rotate_u:
            mm = matmul(momentum, momentum.T)
            stat_u = (mm + mm.T) / 2.0
        if state.rotate_v:
            mm = matmul(momentum.T, momentum)
            stat_v = (mm + mm.T) / 2.0
    failures = 0
    u, v = state.u, state.v
    if state.rotate_u:
        u, ok = _refresh_side(stat_u, u)
        failures += 0 if ok else 1
    if state.rotate_v:
        v, ok = _refresh_side(stat_v, v)
        failures += 0 if ok else 1
    return replace(state, u=u, v=v, refresh_failures=state.refresh_failures + failures)
