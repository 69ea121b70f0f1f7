"""End-to-end acceptance: one test per shipped claim, at its stated tolerance.

Every test here pins an externally visible behavior: the packaged stage
table, the rotation norm ordering, exact-basis equivariance, the delay
phenomenology on quadratics, the spiral region sweep, the estimation
fidelity ordering on the MLP, the self-check suite, and the README's
out-of-scope statement. Runtime budgets are asserted where the behavior
is promised to be cheap.
"""

import math
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from delaylab import rng
from delaylab.config import EstimationConfig
from delaylab.eigenbasis import BasisState
from delaylab.harness import (
    RunConfig,
    misalignment_trace,
    run_experiment,
    slowdown_ratio,
    spiral_slowdown_sweep,
)
from delaylab.landscapes import (
    KroneckerQuadraticSpec,
    MlpSpec,
    QuadraticSpec,
    SpiralSpec,
    conditioned_mixing,
    kronecker_eval,
    rotation_2d,
)
from delaylab.linalg import jacobi_eigen, one_one_norm
from delaylab.optim import (
    AdamHyper,
    adam_step,
    clip_global_norm,
    init_adam_state,
    init_rotated_state,
    rotated_adam_step,
)
from delaylab.pipemodel import llama_reference_table
from delaylab.staleness import StalenessConfig

README = Path(__file__).resolve().parents[1] / "README.md"


# -- packaged stage table ------------------------------------------------------


def test_stage_table_matches_packaged_golden():
    t0 = time.perf_counter()
    table = llama_reference_table()
    golden = resources.files("delaylab").joinpath("data/stages_golden.csv").read_text()
    elapsed = time.perf_counter() - t0
    assert table == golden
    lines = table.splitlines()
    assert len(lines) == 8 and all(len(line.split(",")) == 10 for line in lines)
    assert elapsed < 1.0, f"stage table took {elapsed:.3f}s, budget 1s"


# -- rotation norm ordering ----------------------------------------------------


def _psd(gen, n: int) -> np.ndarray:
    a = gen.standard_normal((n, n))
    return a @ a.T / n + 0.1 * np.eye(n)


def _ordered(lo: float, hi: float) -> bool:
    return lo <= hi * (1.0 + 1e-9)


def test_rotation_norm_ordering_with_exact_bases():
    t0 = time.perf_counter()
    gen = rng.stream(7, "oracle")
    n_full, n_rank1 = 110, 60

    for _ in range(n_full):
        m = int(gen.integers(2, 7))
        n = int(gen.integers(2, 7))
        col = _psd(gen, n)  # column-side factor
        row = _psd(gen, m)  # row-side factor
        land = KroneckerQuadraticSpec.make(col, row)
        evals_col, q_col = jacobi_eigen(col)
        evals_row, q_row = jacobi_eigen(row)

        plain = misalignment_trace(land)
        unilateral = misalignment_trace(land, BasisState(u=q_row, v=np.eye(n)))
        bilateral = misalignment_trace(land, BasisState(u=q_row, v=q_col))

        assert _ordered(bilateral, unilateral) and _ordered(unilateral, plain), (
            f"norm ordering violated: {bilateral} <= {unilateral} <= {plain}"
        )
        diag_min = float(np.sum(evals_col)) * float(np.sum(evals_row))
        assert bilateral == pytest.approx(diag_min, rel=1e-9), (
            "two-sided rotation into the exact eigenbases must reach the diagonal minimum"
        )

    # rank-1 curvature from a rank-1 mean-gradient matrix: the same ordering
    # with the bases read off that matrix's singular directions
    for _ in range(n_rank1):
        m = int(gen.integers(2, 7))
        n = int(gen.integers(2, 7))
        u1 = gen.standard_normal(m)
        u1 /= math.sqrt(float(u1 @ u1))
        v1 = gen.standard_normal(n)
        v1 /= math.sqrt(float(v1 @ v1))
        sigma = float(gen.uniform(0.5, 3.0))

        row = np.outer(u1, u1)  # g_bar g_bar^T splits as (sigma^2 v1 v1^T) (x) (u1 u1^T)
        col = sigma * sigma * np.outer(v1, v1)
        land = KroneckerQuadraticSpec.make(col, row)
        _, q_col = jacobi_eigen(col)
        _, q_row = jacobi_eigen(row)

        plain = misalignment_trace(land)
        unilateral = misalignment_trace(land, BasisState(u=q_row, v=np.eye(n)))
        bilateral = misalignment_trace(land, BasisState(u=q_row, v=q_col))

        assert _ordered(bilateral, unilateral) and _ordered(unilateral, plain), (
            f"rank-1 norm ordering violated: {bilateral} <= {unilateral} <= {plain}"
        )
        assert bilateral == pytest.approx(sigma**2, rel=1e-9), (
            "rank-1 rotated norm must equal the squared singular value"
        )

    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"{n_full + n_rank1} Hessians took {elapsed:.2f}s, budget 10s"


# -- exact-basis equivariance ----------------------------------------------------


def test_fixed_basis_rotation_equivariance():
    gen = rng.stream(42, "oracle")
    row = _psd(gen, 4)
    col = _psd(gen, 3)
    w0 = gen.standard_normal((4, 3))
    evals_col, q_col = jacobi_eigen(col)
    evals_row, q_row = jacobi_eigen(row)

    original = KroneckerQuadraticSpec.make(col, row)
    diagonal = KroneckerQuadraticSpec.make(np.diag(evals_col), np.diag(evals_row))
    hyper = AdamHyper(eta=0.003, beta1=0.9, beta2=0.99, epsilon=1e-8, weight_decay=0.01, grad_clip=None)
    est = EstimationConfig(source="second", geometry="bilateral", beta2=0.99, update_frequency=None)

    w = w0.copy()
    state = init_rotated_state((4, 3), est)
    state = replace(state, basis=replace(state.basis, u=q_row.copy(), v=q_col.copy()))
    w_d = q_row.T @ w0 @ q_col
    state_d = init_adam_state((4, 3))

    worst = 0.0
    for _ in range(1000):
        _, g = kronecker_eval(original, w)
        _, g_d = kronecker_eval(diagonal, w_d)
        g = clip_global_norm((g,), 1.0)[0]
        g_d = clip_global_norm((g_d,), 1.0)[0]
        w, state = rotated_adam_step(w, g, state, hyper, est)
        w_d, state_d = adam_step(w_d, g_d, state_d, hyper)
        dev = float(np.max(np.abs(w_d - q_row.T @ w @ q_col)))
        worst = max(worst, dev)
        assert dev < 1e-10, f"trajectories split: per-step deviation {dev:.3e} >= 1e-10"
    assert worst < 1e-10

    # identity bases: the rotated step's arithmetic must be bit-identical to
    # the plain step, not merely close
    w_rot = w0.copy()
    w_plain = w0.copy()
    s_rot = init_rotated_state((4, 3), est)
    s_plain = init_adam_state((4, 3))
    for t in range(1000):
        _, g = kronecker_eval(original, w_rot)
        g = clip_global_norm((g,), 1.0)[0]
        w_rot, s_rot = rotated_adam_step(w_rot, g, s_rot, hyper, est)
        w_plain, s_plain = adam_step(w_plain, g, s_plain, hyper)
        assert np.array_equal(w_rot, w_plain), f"identity-basis run drifted at step {t}"


# -- delay phenomenology on quadratics -------------------------------------------


def _quadratic_cfg(angle_deg: float, optimizer: str, tau: int) -> RunConfig:
    start = rotation_2d(angle_deg) @ np.array([[2.0], [25.0]])
    return RunConfig(
        landscape=QuadraticSpec.make((10.0, 1.0), rotation_angle_deg=angle_deg),
        optimizer=optimizer,
        hyper=AdamHyper(eta=1.0, beta1=0.0, beta2=0.1, epsilon=1e-8, weight_decay=0.0, grad_clip=None),
        staleness=StalenessConfig(tau=tau),
        seed=1,
        max_steps=2000,
        loss_threshold=15.0,
        start=(float(start[0, 0]), float(start[1, 0])),
    )


def test_quadratic_delay_slowdown_phenomenology():
    t0 = time.perf_counter()
    mis_fresh = run_experiment(_quadratic_cfg(45.0, "adam", 0))
    mis_delay = run_experiment(_quadratic_cfg(45.0, "adam", 2))
    al_fresh = run_experiment(_quadratic_cfg(0.0, "adam", 0))
    al_delay = run_experiment(_quadratic_cfg(0.0, "adam", 2))
    rotated = run_experiment(_quadratic_cfg(45.0, "rotated_adam", 2))
    elapsed = time.perf_counter() - t0

    # (a) delay slows the misaligned quadratic outright
    assert mis_delay.summary.iterations_to_threshold > mis_fresh.summary.iterations_to_threshold

    # (b) the slowdown is concentrated where curvature is misaligned
    mis_ratio = slowdown_ratio(mis_delay, mis_fresh)
    al_ratio = slowdown_ratio(al_delay, al_fresh)
    assert mis_ratio >= 1.5 * al_ratio, (
        f"misaligned slowdown {mis_ratio:.3f} vs aligned {al_ratio:.3f}: factor below 1.5"
    )

    # (c) rotating the basis recovers iterations lost to the delay
    assert rotated.summary.iterations_to_threshold < mis_delay.summary.iterations_to_threshold

    assert elapsed < 5.0, f"five quadratic runs took {elapsed:.2f}s, budget 5s"


# -- spiral region sweep ----------------------------------------------------------


def test_spiral_region_slowdown_ordering():
    t0 = time.perf_counter()
    cfg = RunConfig(
        landscape=SpiralSpec(),
        optimizer="adam",
        hyper=AdamHyper(eta=0.1, beta1=0.0, beta2=0.9, epsilon=1e-8, weight_decay=0.01, grad_clip=None),
        staleness=StalenessConfig(tau=1),
        seed=11,
        max_steps=3000,
        start=(35.0, 0.0),
    )
    result = spiral_slowdown_sweep(cfg, n_probes=200, traversal_deg=3.0, fork_max_steps=30000)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"spiral sweep took {elapsed:.1f}s, budget 2min"

    assert len(result.probes) + result.n_skipped == 200
    assert result.aligned_mean is not None and result.misaligned_mean is not None
    assert 0.9 <= result.aligned_mean <= 1.5, (
        f"aligned-region mean slowdown {result.aligned_mean:.4f} outside [0.9, 1.5]"
    )

    # Known-red: at these settings the aligned regions slow down MORE than the
    # misaligned ones, because decoupled weight decay keeps acting during the
    # delay transient and dominates the short 3-degree traversals. The
    # inversion is a property of the dynamics, not a bug in the sweep; the
    # derivation lives in the build ledger at /root/notes/decisions.md
    # ("spiral slowdown ordering"). Left failing rather than faked.
    assert result.misaligned_mean > result.aligned_mean, (
        f"misaligned mean {result.misaligned_mean:.4f} <= aligned mean "
        f"{result.aligned_mean:.4f}; expected strict ordering, see ledger note"
    )


# -- estimation fidelity ordering on the MLP --------------------------------------


def _mlp_cfg(optimizer: str, est: EstimationConfig | None) -> RunConfig:
    return RunConfig(
        landscape=MlpSpec(
            layer_dims=(6, 8, 4),
            dataset_seed=3,
            n_samples=256,
            input_mixing=conditioned_mixing(6, 30.0, 99),
        ),
        optimizer=optimizer,
        hyper=AdamHyper(eta=0.005, beta1=0.9, beta2=0.999, epsilon=1e-8, weight_decay=0.0, grad_clip=None),
        estimation=est,
        staleness=StalenessConfig(tau=8),
        seed=3,
        max_steps=15000,
        loss_threshold=0.01,
        log_every=50,
        batch_size=64,
    )


def test_mlp_estimation_fidelity_ordering():
    def est(source: str, geometry: str) -> EstimationConfig:
        return EstimationConfig(source=source, geometry=geometry, beta2=0.99, update_frequency=10)

    runs = {
        "adam": run_experiment(_mlp_cfg("adam", None)),
        "second_bilateral": run_experiment(_mlp_cfg("rotated_adam", est("second", "bilateral"))),
        "second_unilateral": run_experiment(_mlp_cfg("rotated_adam", est("second", "unilateral"))),
        "first_bilateral": run_experiment(_mlp_cfg("rotated_adam", est("first", "bilateral"))),
        "first_unilateral": run_experiment(_mlp_cfg("rotated_adam", est("first", "unilateral"))),
    }
    iters = {name: rec.summary.iterations_to_threshold for name, rec in runs.items()}
    assert all(v is not None for v in iters.values()), f"a run never hit the threshold: {iters}"

    assert iters["second_bilateral"] <= iters["second_unilateral"] <= iters["first_unilateral"], (
        f"fidelity ordering violated: {iters}"
    )
    for name in ("second_bilateral", "second_unilateral", "first_bilateral", "first_unilateral"):
        assert iters[name] <= iters["adam"], f"{name} ({iters[name]}) slower than adam ({iters['adam']})"


# -- self-check suite --------------------------------------------------------------


def test_self_check_suite_green():
    from delaylab.verify import run_verify

    lines: list[str] = []
    t0 = time.perf_counter()
    failures = run_verify(out=lines.append)
    elapsed = time.perf_counter() - t0
    assert failures == 0, "\n".join(line for line in lines if line.startswith("FAIL"))
    assert elapsed < 60.0, f"self-check suite took {elapsed:.1f}s, budget 1min"


# -- scope statement ---------------------------------------------------------------


def test_llm_scale_results_declared_out_of_scope():
    text = README.read_text()
    for needle in ("76.8%", "54.3%", "scaling-law restoration", "out of scope"):
        assert needle in text, f"README must state the unreproduced large-scale result: {needle!r}"
    # the desk-scale stand-ins must be named alongside the disclaimer
    for surrogate in ("quadratic", "spiral", "MLP"):
        assert surrogate in text
