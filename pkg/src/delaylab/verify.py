"""Self-check suite behind `delaylab verify`.

Each check mirrors one module-level invariant and prints a single PASS or
FAIL line; run_verify returns the failure count so the CLI can exit nonzero
on any miss. Checks use only the package's own kernels plus finite
differences, so a pass means the shipped code is internally consistent, not
merely that two calls into the same library agree.
"""

from __future__ import annotations

import math
from dataclasses import replace
from importlib import resources

import numpy as np

from . import rng
from .eigenbasis import BasisState, EstimationConfig, accumulate_statistics, init_basis, refresh_basis
from .harness import (
    RunConfig,
    run_experiment,
    slowdown_ratio,
    summary_json_text,
    trace_csv_text,
)
from .landscapes import (
    MlpSpec,
    QuadraticSpec,
    SpiralSpec,
    mlp_dataset,
    mlp_eval,
    quadratic_eval,
    spiral_eval,
    spiral_polar_loss,
)
from .linalg import (
    frobenius_norm,
    jacobi_eigen,
    kronecker,
    matmul,
    one_one_norm,
    power_qr_step,
    qr_decompose,
)
from .optim import (
    AdamHyper,
    adam_step,
    adasgd_step,
    clip_global_norm,
    init_adam_state,
    init_adasgd_state,
    init_rotated_state,
    nesterov_adam_step,
    rotated_adam_step,
)
from .pipemodel import LLAMA_MODELS, GB, llama_reference_table, required_stages
from .staleness import StalenessConfig, advance, init_stash

__all__ = ["run_verify", "CHECKS"]

_SEED = 20240817


def _gen(name: str = "oracle"):
    return rng.stream(_SEED, name)


def _vnorm(x: np.ndarray) -> float:
    return math.sqrt(float(np.sum(x * x)))


def _fail(msg: str) -> str:
    return msg


# ---------------------------------------------------------------------------
# linalg invariants


def check_qr_reconstruction() -> str | None:
    gen = _gen()
    for shape in ((8, 5), (12, 12), (20, 7)):
        a = gen.standard_normal(shape)
        q, r = qr_decompose(a)
        ortho = frobenius_norm(matmul(q.T, q) - np.eye(shape[1]))
        recon = frobenius_norm(matmul(q, r) - a)
        if ortho >= 1e-10:
            return _fail(f"Q^T Q far from I at {shape}: {ortho:.3e}")
        if recon >= 1e-10 * frobenius_norm(a):
            return _fail(f"QR != A at {shape}: {recon:.3e}")
    return None


def check_power_qr_convergence() -> str | None:
    gen = _gen()
    evals = np.array([4.0, 2.0, 1.0, 0.5])  # gap ratio 0.5
    q_true, _ = qr_decompose(gen.standard_normal((4, 4)))
    a = matmul(q_true * evals, q_true.T)
    q = np.eye(4)
    for _ in range(100):
        q = power_qr_step(a, q)
    top = q_true[:, 0]
    angle = math.acos(min(1.0, abs(float(np.dot(q[:, 0], top)))))
    if angle >= 1e-6:
        return _fail(f"principal angle after 100 iterations: {angle:.3e}")
    return None


def check_jacobi_reconstruction() -> str | None:
    gen = _gen()
    for n in (2, 8, 32):
        s = gen.standard_normal((n, n))
        a = (s + s.T) / 2.0
        evals, q = jacobi_eigen(a)
        recon = frobenius_norm(matmul(q * evals, q.T) - a)
        if recon >= 1e-10 * max(1.0, frobenius_norm(a)):
            return _fail(f"reconstruction error at n={n}: {recon:.3e}")
    return None


def check_one_one_norm_rotation_floor() -> str | None:
    gen = _gen()
    lam = np.abs(gen.standard_normal(6)) + 0.1
    floor = one_one_norm(np.diag(lam))
    for _ in range(50):
        v, _ = qr_decompose(gen.standard_normal((6, 6)))
        rotated = one_one_norm(matmul(v * lam, v.T))
        if rotated < floor - 1e-9:
            return _fail(f"rotation dropped below diagonal floor: {rotated:.6f} < {floor:.6f}")
    return None


def check_kronecker_identities() -> str | None:
    gen = _gen()
    a, b = gen.standard_normal((3, 4)), gen.standard_normal((2, 5))
    c, d = gen.standard_normal((4, 2)), gen.standard_normal((5, 3))
    mixed = frobenius_norm(
        matmul(kronecker(a, b), kronecker(c, d)) - kronecker(matmul(a, c), matmul(b, d))
    )
    transpose = frobenius_norm(kronecker(a, b).T - kronecker(a.T, b.T))
    if mixed >= 1e-12 * max(1.0, frobenius_norm(kronecker(matmul(a, c), matmul(b, d)))):
        return _fail(f"mixed-product identity off by {mixed:.3e}")
    if transpose != 0.0:
        return _fail(f"transpose identity off by {transpose:.3e}")
    return None


# ---------------------------------------------------------------------------
# landscape gradients against central finite differences


def _fd_gradient(f, x: np.ndarray, h: float) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def check_quadratic_fd_gradient() -> str | None:
    gen = _gen()
    spec = QuadraticSpec.make((10.0, 1.0), rotation_angle_deg=37.0)
    for _ in range(5):
        x = gen.standard_normal(2) * 3.0
        _, g = quadratic_eval(spec, x)
        fd = _fd_gradient(lambda p: quadratic_eval(spec, p)[0], x, 1e-6)
        rel = _vnorm(g - fd) / max(1.0, _vnorm(g))
        if rel >= 1e-6:
            return _fail(f"gradient vs FD rel err {rel:.3e} at {x}")
    return None


def check_quadratic_fd_hessian() -> str | None:
    spec = QuadraticSpec.make((10.0, 1.0), rotation_angle_deg=63.0)
    h = 1e-4
    fd = np.empty((2, 2))
    x0 = np.array([0.7, -1.3])
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        gp = quadratic_eval(spec, x0 + e)[1]
        gm = quadratic_eval(spec, x0 - e)[1]
        fd[:, j] = (gp - gm) / (2.0 * h)
    rel = frobenius_norm(fd - spec.hessian) / frobenius_norm(np.asarray(spec.hessian))
    if rel >= 1e-4:
        return _fail(f"Hessian vs FD rel err {rel:.3e}")
    return None


def check_spiral_fd_gradient() -> str | None:
    gen = _gen()
    spec = SpiralSpec()
    for _ in range(5):
        r = 5.0 + 30.0 * gen.random()
        t = 2.0 * math.pi * gen.random()
        x = np.array([r * math.cos(t), r * math.sin(t)])
        _, g = spiral_eval(spec, x)
        fd = _fd_gradient(lambda p: spiral_eval(spec, p)[0], x, 1e-6)
        rel = _vnorm(g - fd) / max(1.0, _vnorm(g))
        if rel >= 1e-5:
            return _fail(f"gradient vs FD rel err {rel:.3e} at r={r:.2f}")
    return None


def check_mlp_fd_gradient() -> str | None:
    spec = MlpSpec(layer_dims=(3, 4, 2), dataset_seed=7, n_samples=32)
    batch = mlp_dataset(spec)
    gen = _gen()
    weights = [gen.standard_normal(s) * 0.5 for s in spec.weight_shapes]
    _, grads = mlp_eval(spec, weights, batch)
    h = 1e-5
    for li in range(len(weights)):
        flat = weights[li].ravel()
        probe = range(0, flat.size, max(1, flat.size // 6))
        for k in probe:
            orig = flat[k]
            flat[k] = orig + h
            lp = mlp_eval(spec, weights, batch)[0]
            flat[k] = orig - h
            lm = mlp_eval(spec, weights, batch)[0]
            flat[k] = orig
            fd = (lp - lm) / (2.0 * h)
            err = abs(fd - grads[li].ravel()[k]) / max(1.0, abs(fd))
            if err >= 1e-4:
                return _fail(f"layer {li} entry {k}: rel err {err:.3e}")
    return None


def check_spiral_ray_bound() -> str | None:
    spec = SpiralSpec()
    bound = (spec.amplitude + spec.offset) ** 2
    for theta in (0.0, 1.0, 2.5):
        for r in np.linspace(0.5, 40.0, 40):
            osc = spiral_polar_loss(spec, float(r), theta) - r * r
            if osc < -1e-12 or osc > bound + 1e-9:
                return _fail(f"oscillation {osc:.4f} outside [0, {bound:.1f}] at r={r:.2f}")
    return None


# ---------------------------------------------------------------------------
# eigenbasis invariants


def _orthonormality(b: BasisState) -> float:
    du = frobenius_norm(matmul(b.u.T, b.u) - np.eye(b.u.shape[1]))
    dv = frobenius_norm(matmul(b.v.T, b.v) - np.eye(b.v.shape[1]))
    return max(du, dv)


def check_basis_refresh_orthonormality() -> str | None:
    gen = _gen()
    est = EstimationConfig(source="second", geometry="bilateral", beta2=0.95, update_frequency=5)
    state = init_basis(5, 4, est)
    momentum = np.zeros((5, 4))
    for t in range(40):
        g = gen.standard_normal((5, 4))
        momentum = 0.9 * momentum + 0.1 * g
        state = accumulate_statistics(state, g, est)
        if t > 0 and t % est.update_frequency == 0:
            state = refresh_basis(state, momentum, est)
            dev = _orthonormality(state)
            if dev >= 1e-8:
                return _fail(f"orthonormality drift {dev:.3e} after refresh at t={t}")
    return None


def check_basis_fixed_point_signs() -> str | None:
    gen = _gen()
    evals = np.array([5.0, 2.0, 1.0, 0.3])
    q, _ = qr_decompose(gen.standard_normal((4, 4)))
    stat = matmul(q * evals, q.T)
    est = EstimationConfig(source="second", geometry="bilateral", beta2=0.9, update_frequency=1)
    state = init_basis(4, 4, est)
    state = replace(state, u=q.copy(), v=q.copy(), l_stat=stat.copy(), r_stat=stat.copy())
    refreshed = refresh_basis(state, np.zeros((4, 4)), est)
    for side, mat in (("U", refreshed.u), ("V", refreshed.v)):
        overlap = np.abs(matmul(mat.T, q))
        if frobenius_norm(overlap - np.eye(4)) >= 1e-9:
            return _fail(f"{side} moved beyond column signs: |U'^T U| deviates by "
                         f"{frobenius_norm(overlap - np.eye(4)):.3e}")
    return None


def _psd(gen, n: int) -> np.ndarray:
    a = gen.standard_normal((n, n))
    return matmul(a, a.T) / n + 0.1 * np.eye(n)


def check_theorem_ordering_second() -> str | None:
    gen = _gen()
    for trial in range(4):
        b = _psd(gen, 4)  # row side, m x m
        a = _psd(gen, 3)  # column side, n x n
        h = kronecker(a, b)
        _, qb = jacobi_eigen(b)
        _, qa = jacobi_eigen(a)
        bilateral = one_one_norm(matmul(matmul(kronecker(qa, qb).T, h), kronecker(qa, qb)))
        unilateral = one_one_norm(matmul(matmul(kronecker(np.eye(3), qb).T, h), kronecker(np.eye(3), qb)))
        plain = one_one_norm(h)
        if not (bilateral <= unilateral + 1e-9 and unilateral <= plain + 1e-9):
            return _fail(
                f"trial {trial}: ordering broken, bilateral={bilateral:.6f} "
                f"unilateral={unilateral:.6f} identity={plain:.6f}"
            )
    return None


def check_theorem_ordering_first() -> str | None:
    gen = _gen()
    for trial in range(4):
        m, n = 4, 3
        qu, _ = qr_decompose(gen.standard_normal((m, m)))
        qv, _ = qr_decompose(gen.standard_normal((n, n)))
        sigma = 1.0 + gen.random()
        gbar = sigma * np.outer(qu[:, 0], qv[:, 0])
        h = np.outer(gbar.T.ravel(), gbar.T.ravel())  # vec = column stacking
        vec = lambda u, v: kronecker(v, u)
        bilateral = one_one_norm(matmul(matmul(vec(qu, qv).T, h), vec(qu, qv)))
        unilateral = one_one_norm(matmul(matmul(vec(qu, np.eye(n)).T, h), vec(qu, np.eye(n))))
        plain = one_one_norm(h)
        if not (bilateral <= unilateral + 1e-9 and unilateral <= plain + 1e-9):
            return _fail(
                f"trial {trial}: ordering broken, bilateral={bilateral:.6f} "
                f"unilateral={unilateral:.6f} identity={plain:.6f}"
            )
    return None


# ---------------------------------------------------------------------------
# optimizer invariants


def check_second_moment_nonnegative() -> str | None:
    gen = _gen()
    hyper = AdamHyper(eta=0.01, grad_clip=None)
    est = EstimationConfig(update_frequency=10)
    shape = (4, 3)
    states = {
        "adam": init_adam_state(shape),
        "adasgd": init_adasgd_state(shape),
        "nesterov_adam": init_adam_state(shape),
        "rotated_adam": init_rotated_state(shape, est),
    }
    w = {name: gen.standard_normal(shape) for name in states}
    for t in range(50):
        g = gen.standard_normal(shape)
        for name in states:
            if name == "adam":
                w[name], states[name] = adam_step(w[name], g, states[name], hyper)
            elif name == "adasgd":
                w[name], states[name] = adasgd_step(w[name], g, states[name], hyper)
            elif name == "nesterov_adam":
                w[name], states[name] = nesterov_adam_step(w[name], g, states[name], hyper)
            else:
                w[name], states[name] = rotated_adam_step(w[name], g, states[name], hyper, est)
            if np.min(states[name].vt) < 0.0:
                return _fail(f"{name}: negative second-moment entry at step {t}")
    return None


def check_rotation_equivariance() -> str | None:
    gen = _gen()
    m, n = 4, 3
    u, _ = qr_decompose(gen.standard_normal((m, m)))
    v, _ = qr_decompose(gen.standard_normal((n, n)))
    est = EstimationConfig(source="second", geometry="bilateral", beta2=0.99, update_frequency=None)
    hyper = AdamHyper(eta=0.01, beta1=0.9, beta2=0.99, weight_decay=0.01, grad_clip=None)

    w = gen.standard_normal((m, n))
    s_orig = init_rotated_state((m, n), est)
    s_orig = replace(s_orig, basis=replace(s_orig.basis, u=u.copy(), v=v.copy()))
    w_rot = matmul(matmul(u.T, w), v)
    s_rot = init_adam_state((m, n))

    for _ in range(200):
        g = gen.standard_normal((m, n))
        w, s_orig = rotated_adam_step(w, g, s_orig, hyper, est)
        w_rot, s_rot = adam_step(w_rot, matmul(matmul(u.T, g), v), s_rot, hyper)
        dev = frobenius_norm(w - matmul(matmul(u, w_rot), v.T)) / max(1.0, frobenius_norm(w))
        if dev >= 1e-10:
            return _fail(f"trajectories split: rel dev {dev:.3e}")
    return None


def check_identity_basis_reduction() -> str | None:
    gen = _gen()
    est = EstimationConfig(source="second", geometry="bilateral", update_frequency=None)
    hyper = AdamHyper(eta=0.05, grad_clip=None)
    shape = (3, 3)
    w_rot = gen.standard_normal(shape)
    w_adam = w_rot.copy()
    s_rot = init_rotated_state(shape, est)
    s_adam = init_adam_state(shape)
    for t in range(300):
        g = gen.standard_normal(shape)
        w_rot, s_rot = rotated_adam_step(w_rot, g, s_rot, hyper, est)
        w_adam, s_adam = adam_step(w_adam, g, s_adam, hyper)
        if not (np.array_equal(w_rot, w_adam) and np.array_equal(s_rot.m, s_adam.m)
                and np.array_equal(s_rot.vt, s_adam.vt)):
            return _fail(f"identity-basis run diverged from plain run at step {t}")
    return None


def _misaligned_quadratic_cfg(tau: int) -> RunConfig:
    start = matmul(np.array([[math.cos(math.radians(45.0)), -math.sin(math.radians(45.0))],
                             [math.sin(math.radians(45.0)), math.cos(math.radians(45.0))]]),
                   np.array([[2.0], [25.0]]))
    return RunConfig(
        landscape=QuadraticSpec.make((10.0, 1.0), rotation_angle_deg=45.0),
        optimizer="adam",
        hyper=AdamHyper(eta=1.0, beta1=0.0, beta2=0.1, epsilon=1e-8, weight_decay=0.0, grad_clip=None),
        staleness=StalenessConfig(tau=tau),
        seed=1,
        max_steps=2000,
        loss_threshold=15.0,
        start=(float(start[0, 0]), float(start[1, 0])),
    )


def check_delay_monotonicity() -> str | None:
    iters = []
    for tau in (0, 1, 2, 4):
        rec = run_experiment(_misaligned_quadratic_cfg(tau))
        it = rec.summary.iterations_to_threshold
        if it is None:
            return _fail(f"tau={tau}: threshold never reached")
        iters.append(it)
    if any(b < a for a, b in zip(iters, iters[1:])):
        return _fail(f"iterations not monotone in tau: {iters}")
    return None


# ---------------------------------------------------------------------------
# staleness invariants


def check_tau_zero_bypass() -> str | None:
    cfg = _misaligned_quadratic_cfg(0)
    rec = run_experiment(replace(cfg, loss_threshold=None, max_steps=60, log_every=1))
    spec = cfg.landscape
    hyper = cfg.hyper
    w = np.array(cfg.start, dtype=float).reshape(-1, 1)
    state = init_adam_state(w.shape)
    for t, snap in enumerate(rec.trajectory[:-1]):
        if not np.array_equal(snap[0], w):
            return _fail(f"manual loop split from harness at step {t}")
        _, g = quadratic_eval(spec, w[:, 0])
        (g,) = clip_global_norm((g.reshape(-1, 1),), hyper.grad_clip)
        w, state = adam_step(w, g, state, hyper)
    if not np.array_equal(rec.trajectory[-1][0], w):
        return _fail("final parameters differ from a loop with no stash at all")
    return None


def check_stash_replay() -> str | None:
    tau = 2
    cfg = replace(_misaligned_quadratic_cfg(tau), loss_threshold=None, max_steps=80, log_every=1)
    rec = run_experiment(cfg)
    spec = cfg.landscape
    for row in rec.rows:
        snap = rec.trajectory[max(row.step - tau, 0)]
        _, g = quadratic_eval(spec, snap[0][:, 0])
        norm = _vnorm(g)
        if abs(norm - row.grad_norm) > 1e-12 * max(1.0, norm):
            return _fail(
                f"step {row.step}: served gradient norm {row.grad_norm!r} but replay "
                f"from the tau-old snapshot gives {norm!r}"
            )
        expect = min(row.step, tau)
        if row.effective_delay != expect:
            return _fail(f"step {row.step}: effective delay {row.effective_delay} != {expect}")
    return None


def check_stash_capacity() -> str | None:
    tau = 3
    params = (np.zeros((2, 1)),)
    stash = init_stash(params, tau)
    for t in range(12):
        if len(stash) != min(t + 1, tau + 1):
            return _fail(f"buffer holds {len(stash)} snapshots at t={t}, expected {min(t + 1, tau + 1)}")
        stash = advance(stash, (np.full((2, 1), float(t)),))
    if len(stash) != tau + 1:
        return _fail(f"buffer settled at {len(stash)} snapshots, expected {tau + 1}")
    return None


def check_prediction_tau0_degenerate() -> str | None:
    base = replace(_misaligned_quadratic_cfg(0), loss_threshold=None, max_steps=50, log_every=1)
    stash_rec = run_experiment(replace(base, staleness=StalenessConfig(tau=0, mode="stashing")))
    pred_rec = run_experiment(replace(base, staleness=StalenessConfig(tau=0, mode="prediction")))
    if trace_csv_text(stash_rec) != trace_csv_text(pred_rec):
        return _fail("prediction mode with tau=0 produced a different trace than stashing")
    for a, b in zip(stash_rec.trajectory, pred_rec.trajectory):
        if not np.array_equal(a[0], b[0]):
            return _fail("prediction mode with tau=0 produced different parameters")
    return None


# ---------------------------------------------------------------------------
# pipeline memory model


def check_stage_count_monotone_memory() -> str | None:
    for name, cfg in LLAMA_MODELS[:3]:
        last_p = None
        for mem_gb in np.linspace(4.0, 120.0, 30):
            res = required_stages(replace(cfg, device_bytes=int(mem_gb * GB)))
            if last_p is not None and res.p > last_p:
                return _fail(f"{name}: stage count rose from {last_p} to {res.p} as memory grew")
            last_p = res.p
    return None


def check_stage_capacity_bound() -> str | None:
    for name, cfg in LLAMA_MODELS:
        for mem_gb in (8, 16, 24, 48, 80):
            res = required_stages(replace(cfg, device_bytes=mem_gb * GB))
            if res.n_max >= 1 and res.p * res.n_max < cfg.n_blocks:
                return _fail(f"{name} at {mem_gb} GB: P*n_max = {res.p * res.n_max} < L = {cfg.n_blocks}")
    return None


def check_stage_table_golden() -> str | None:
    golden = resources.files("delaylab").joinpath("data/stages_golden.csv").read_text()
    table = llama_reference_table()
    if table != golden:
        lines_a = table.splitlines()
        lines_b = golden.splitlines()
        for i, (a, b) in enumerate(zip(lines_a, lines_b)):
            if a != b:
                return _fail(f"first mismatch at line {i}: {a!r} != {b!r}")
        return _fail(f"length mismatch: {len(lines_a)} vs {len(lines_b)} lines")
    return None


# ---------------------------------------------------------------------------
# harness invariants


def check_run_determinism() -> str | None:
    cfg = replace(_misaligned_quadratic_cfg(2), loss_threshold=None, max_steps=40, log_every=1)
    rec_a = run_experiment(cfg)
    rec_b = run_experiment(cfg)
    if trace_csv_text(rec_a) != trace_csv_text(rec_b):
        return _fail("two runs of one config produced different traces")
    if summary_json_text(rec_a) != summary_json_text(rec_b):
        return _fail("two runs of one config produced different summaries")
    return None


def check_slowdown_identity() -> str | None:
    rec = run_experiment(_misaligned_quadratic_cfg(0))
    ratio = slowdown_ratio(rec, rec)
    if ratio != 1.0:
        return _fail(f"slowdown_ratio(r, r) = {ratio!r}, expected exactly 1.0")
    return None


CHECKS: tuple[tuple[str, object], ...] = (
    ("qr_reconstruction", check_qr_reconstruction),
    ("power_qr_convergence", check_power_qr_convergence),
    ("jacobi_reconstruction", check_jacobi_reconstruction),
    ("one_one_norm_rotation_floor", check_one_one_norm_rotation_floor),
    ("kronecker_identities", check_kronecker_identities),
    ("quadratic_fd_gradient", check_quadratic_fd_gradient),
    ("quadratic_fd_hessian", check_quadratic_fd_hessian),
    ("spiral_fd_gradient", check_spiral_fd_gradient),
    ("mlp_fd_gradient", check_mlp_fd_gradient),
    ("spiral_ray_bound", check_spiral_ray_bound),
    ("basis_refresh_orthonormality", check_basis_refresh_orthonormality),
    ("basis_fixed_point_signs", check_basis_fixed_point_signs),
    ("theorem_ordering_second_source", check_theorem_ordering_second),
    ("theorem_ordering_first_source", check_theorem_ordering_first),
    ("second_moment_nonnegative", check_second_moment_nonnegative),
    ("rotation_equivariance", check_rotation_equivariance),
    ("identity_basis_reduction", check_identity_basis_reduction),
    ("delay_monotonicity", check_delay_monotonicity),
    ("tau_zero_bypass", check_tau_zero_bypass),
    ("stash_replay", check_stash_replay),
    ("stash_capacity", check_stash_capacity),
    ("prediction_tau0_degenerate", check_prediction_tau0_degenerate),
    ("stage_count_monotone_memory", check_stage_count_monotone_memory),
    ("stage_capacity_bound", check_stage_capacity_bound),
    ("stage_table_golden", check_stage_table_golden),
    ("run_determinism", check_run_determinism),
    ("slowdown_identity", check_slowdown_identity),
)


def run_verify(out=print) -> int:
    """Run every check; print one PASS/FAIL line each; return failure count."""
    failures = 0
    for name, fn in CHECKS:
        try:
            detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            detail = f"raised {type(exc).__name__}: {exc}"
        if detail is None:
            out(f"PASS {name}")
        else:
            failures += 1
            out(f"FAIL {name}: {detail}")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
