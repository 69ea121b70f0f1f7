"""Self-contained dense linear algebra kernels.

All values are 2-D float64 numpy arrays validated by :func:`matrix` /
:func:`check_matrix` (finite entries, explicit shapes). The kernels are
written for matrices of at most a few hundred rows, with fixed accumulation
orders and no parallel reductions, so results are bit-reproducible across
runs on the same platform.

Decompositions are hand-rolled on purpose: QR uses Householder reflections
with a non-negative R diagonal, and the symmetric eigensolver is a cyclic
Jacobi sweep. Both are deterministic, including eigenvector sign choices.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "LinalgError",
    "ShapeMismatchError",
    "NonFiniteError",
    "RankDeficientError",
    "NotSymmetricError",
    "matrix",
    "check_matrix",
    "frobenius_norm",
    "matmul",
    "qr_decompose",
    "power_qr_step",
    "jacobi_eigen",
    "kronecker",
    "one_one_norm",
    "JACOBI_OFFDIAG_TOL",
    "JACOBI_MAX_SWEEPS",
    "QR_RANK_TOL",
    "SYMMETRY_TOL",
]

# Convergence / validation thresholds, fixed for reproducibility.
JACOBI_OFFDIAG_TOL = 1e-12   # off-diagonal Frobenius norm at convergence
JACOBI_MAX_SWEEPS = 100
QR_RANK_TOL = 1e-12          # column norm below this is rank deficiency
SYMMETRY_TOL = 1e-9          # max |a - a^T| admitted as "symmetric"


class LinalgError(ValueError):
    """Base class for structured linear-algebra errors."""


class ShapeMismatchError(LinalgError):
    """Two operands have incompatible shapes."""

    def __init__(self, op: str, shape_a: tuple, shape_b: tuple):
        self.op = op
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        super().__init__(f"{op}: incompatible shapes {self.shape_a} and {self.shape_b}")


class NonFiniteError(LinalgError):
    """A matrix contains NaN or Inf entries."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"{name} contains non-finite entries")


class RankDeficientError(LinalgError):
    """QR hit a (numerically) dependent column."""

    def __init__(self, column: int, norm: float):
        self.column = column
        self.norm = norm
        super().__init__(
            f"rank-deficient column {column}: remaining norm {norm:.3e} < {QR_RANK_TOL:.0e}"
        )


class NotSymmetricError(LinalgError):
    """A symmetric-only operation received an asymmetric matrix."""

    def __init__(self, asymmetry: float):
        self.asymmetry = asymmetry
        super().__init__(
            f"matrix is not symmetric: max |a - a^T| = {asymmetry:.3e} > {SYMMETRY_TOL:.0e}"
        )


def matrix(data) -> np.ndarray:
    """Construct a validated matrix: 2-D, float64, every entry finite."""
    a = np.array(data, dtype=np.float64)
    if a.ndim != 2:
        raise LinalgError(f"matrix must be 2-D, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise LinalgError(f"matrix must have positive dimensions, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("matrix")
    return a


def check_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate an existing array-like without copying when already conforming."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise LinalgError(f"{name} must be 2-D, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(name)
    return a


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.einsum("ij,ij->", a, a)))


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed, single-threaded accumulation order."""
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    # einsum without optimize= runs the plain C triple loop: deterministic
    # left-to-right accumulation, no BLAS threading.
    return np.einsum("ij,jk->ik", a, b)


def qr_decompose(a) -> tuple[np.ndarray, np.ndarray]:
    """Householder QR with the sign convention diag(R) >= 0.

    Returns (Q, R) with Q of shape (m, n) having orthonormal columns and R
    upper-triangular (n, n). Requires m >= n. A column whose remaining norm
    falls below QR_RANK_TOL raises RankDeficientError naming that column.
    """
    a = check_matrix(a, "a")
    m, n = a.shape
    if m < n:
        raise LinalgError(f"qr_decompose needs rows >= cols, got {m}x{n}")
    r = a.copy()
    q = np.eye(m)
    for k in range(n):
        x = r[k:, k]
        xnorm = float(np.sqrt(np.einsum("i,i->", x, x)))
        if xnorm < QR_RANK_TOL:
            raise RankDeficientError(k, xnorm)
        # Reflect x onto -sign(x[0]) * |x| * e1; this choice never cancels.
        alpha = -xnorm if x[0] >= 0.0 else xnorm
        v = x.copy()
        v[0] -= alpha
        vnorm = float(np.sqrt(np.einsum("i,i->", v, v)))
        v /= vnorm
        r[k:, k:] -= 2.0 * np.outer(v, np.einsum("i,ij->j", v, r[k:, k:]))
        q[:, k:] -= 2.0 * np.outer(np.einsum("ij,j->i", q[:, k:], v), v)
    q = q[:, :n]
    r = np.triu(r[:n, :])
    for j in range(n):
        if r[j, j] < 0.0:
            r[j, j:] = -r[j, j:]
            q[:, j] = -q[:, j]
    return q, r


def power_qr_step(a, q) -> np.ndarray:
    """One power-iteration step with QR re-orthonormalization.

    Given symmetric a (n x n) and q (n x n, orthonormal columns), returns the
    Q factor of qr(a @ q). Iterating converges to an eigenbasis of a.
    """
    a = check_matrix(a, "a")
    q = check_matrix(q, "q")
    if a.shape[0] != a.shape[1]:
        raise LinalgError(f"power_qr_step needs a square matrix, got {a.shape}")
    if q.shape[0] != a.shape[0] or q.shape[1] != a.shape[1]:
        raise ShapeMismatchError("power_qr_step", a.shape, q.shape)
    return qr_decompose(matmul(a, q))[0]


def _offdiag_frobenius(a: np.ndarray) -> float:
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sqrt(np.einsum("ij,ij->", off, off)))


def jacobi_eigen(a) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending
    and eigenvectors in columns, satisfying a = V diag(w) V^T. Sweeps stop
    when the off-diagonal Frobenius norm drops below JACOBI_OFFDIAG_TOL
    (at most JACOBI_MAX_SWEEPS sweeps). Eigenvector sign is fixed by making
    the largest-magnitude entry of each column positive.
    """
    a = check_matrix(a, "a")
    n, nc = a.shape
    if n != nc:
        raise LinalgError(f"jacobi_eigen needs a square matrix, got {a.shape}")
    asym = float(np.max(np.abs(a - a.T)))
    if asym > SYMMETRY_TOL:
        raise NotSymmetricError(asym)
    d = (a + a.T) / 2.0
    v = np.eye(n)
    for _ in range(JACOBI_MAX_SWEEPS):
        if _offdiag_frobenius(d) < JACOBI_OFFDIAG_TOL:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = d[p, q]
                if apq == 0.0:
                    continue
                theta = (d[q, q] - d[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # d <- J^T d J with the rotation in the (p, q) plane.
                col_p = d[:, p].copy()
                col_q = d[:, q].copy()
                d[:, p] = c * col_p - s * col_q
                d[:, q] = s * col_p + c * col_q
                row_p = d[p, :].copy()
                row_q = d[q, :].copy()
                d[p, :] = c * row_p - s * row_q
                d[q, :] = s * row_p + c * row_q
                d[p, q] = d[q, p] = 0.0  # annihilated exactly by construction
                vcol_p = v[:, p].copy()
                vcol_q = v[:, q].copy()
                v[:, p] = c * vcol_p - s * vcol_q
                v[:, q] = s * vcol_p + c * vcol_q
    eigenvalues = np.diag(d).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    v = v[:, order]
    for j in range(n):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0.0:
            v[:, j] = -v[:, j]
    return eigenvalues, v


def kronecker(a, b) -> np.ndarray:
    """Kronecker product, shape (a.rows * b.rows, a.cols * b.cols)."""
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    return np.kron(a, b)


def one_one_norm(a) -> float:
    """Entrywise (1,1)-norm: the sum of absolute values of all entries.

    Over all rotations of a symmetric matrix this is minimized when the
    matrix is diagonal, which makes it a proxy for basis misalignment.
    """
    a = check_matrix(a, "a")
    return float(np.sum(np.abs(a)))
