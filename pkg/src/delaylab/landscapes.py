"""Differentiable test objectives with analytic gradients.

Four landscape families:

* ``QuadraticSpec``: f(w) = 1/2 w^T H w with a rotation-controlled Hessian,
  the minimal setting where basis misalignment is an exact, known quantity.
* ``SpiralSpec``: a polar-coordinate valley whose Hessian eigenbasis swings
  between axis-aligned and misaligned as the trajectory spirals inward.
* ``MlpSpec``: a small tanh network on seeded synthetic teacher data, the
  desk-scale stand-in for matrix-shaped training problems.
* ``KroneckerQuadraticSpec``: a matrix-parameter quadratic whose Hessian is
  an exact Kronecker product, used by the rotation-equivariance and
  norm-ordering oracles.

Finite-difference helpers live here too; they are the universal gradient
oracle for the test suite and the verify command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    LinalgError,
    NotSymmetricError,
    ShapeMismatchError,
    SYMMETRY_TOL,
    check_matrix,
    jacobi_eigen,
    kronecker,
    matmul,
    qr_decompose,
)
from . import rng

__all__ = [
    "NearOriginError",
    "QuadraticSpec",
    "SpiralSpec",
    "MlpSpec",
    "KroneckerQuadraticSpec",
    "rotation_2d",
    "quadratic_eval",
    "spiral_eval",
    "spiral_polar_loss",
    "mlp_dataset",
    "mlp_forward",
    "mlp_eval",
    "conditioned_mixing",
    "build_kronecker_quadratic",
    "kronecker_eval",
    "finite_difference_gradient",
    "finite_difference_hessian",
    "SPIRAL_ORIGIN_CUTOFF",
]

# Below this radius the polar chart (and hence the spiral gradient) is
# undefined; runs that get this close to the origin count as converged.
SPIRAL_ORIGIN_CUTOFF = 1e-9


class NearOriginError(ValueError):
    """Spiral evaluation requested inside the degenerate polar chart."""

    def __init__(self, radius: float):
        self.radius = radius
        super().__init__(
            f"spiral gradient undefined near origin: r = {radius:.3e} <= {SPIRAL_ORIGIN_CUTOFF:.0e}"
        )


def rotation_2d(angle_deg: float) -> np.ndarray:
    """Counterclockwise 2-D rotation matrix."""
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuadraticSpec:
    """f(w) = 1/2 w^T H w with H = rotation diag(eigenvalues) rotation^T."""

    eigenvalues: tuple[float, ...]
    rotation: np.ndarray
    hessian: np.ndarray = field(repr=False)

    @staticmethod
    def make(eigenvalues, rotation_angle_deg: float = 0.0) -> "QuadraticSpec":
        """2-D constructor from eigenvalues and a rotation angle in degrees."""
        if len(eigenvalues) != 2:
            raise ValueError("make() is the 2-D constructor; use from_rotation otherwise")
        return QuadraticSpec.from_rotation(eigenvalues, rotation_2d(rotation_angle_deg))

    @staticmethod
    def from_rotation(eigenvalues, rotation) -> "QuadraticSpec":
        eigenvalues = tuple(float(v) for v in eigenvalues)
        if any(v <= 0.0 for v in eigenvalues):
            raise ValueError(f"eigenvalues must be positive, got {eigenvalues}")
        if any(a < b for a, b in zip(eigenvalues, eigenvalues[1:])):
            raise ValueError(f"eigenvalues must be sorted descending, got {eigenvalues}")
        r = check_matrix(rotation, "rotation")
        n = len(eigenvalues)
        if r.shape != (n, n):
            raise ShapeMismatchError("quadratic rotation", r.shape, (n, n))
        h = matmul(matmul(r, np.diag(eigenvalues)), r.T)
        h = (h + h.T) / 2.0
        return QuadraticSpec(eigenvalues, _frozen(r), _frozen(h))

    @staticmethod
    def from_hessian(hessian) -> "QuadraticSpec":
        h = check_matrix(hessian, "hessian")
        eigenvalues, vectors = jacobi_eigen(h)
        if eigenvalues[-1] <= 0.0:
            raise ValueError(f"hessian must be positive definite, min eigenvalue {eigenvalues[-1]:.3e}")
        return QuadraticSpec(tuple(float(v) for v in eigenvalues), _frozen(vectors), _frozen((h + h.T) / 2.0))

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]


def quadratic_eval(spec: QuadraticSpec, w) -> tuple[float, np.ndarray]:
    """Loss 1/2 w^T H w and gradient H w for a 1-D parameter vector."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != spec.dim:
        raise ShapeMismatchError("quadratic_eval", (w.shape[0],), (spec.dim,))
    grad = np.einsum("ij,j->i", spec.hessian, w)
    loss = 0.5 * float(np.einsum("i,i->", w, grad))
    return loss, grad


@dataclass(frozen=True)
class SpiralSpec:
    """f(r, theta) = r^2 + (amplitude * sin(frequency * r - theta) + offset)^2."""

    amplitude: float = 20.0
    frequency: float = 4.0
    offset: float = 1.0

    def __post_init__(self):
        if self.amplitude <= 0.0 or self.frequency <= 0.0:
            raise ValueError("amplitude and frequency must be positive")


def spiral_polar_loss(spec: SpiralSpec, r: float, theta: float) -> float:
    swing = spec.amplitude * math.sin(spec.frequency * r - theta) + spec.offset
    return r * r + swing * swing


def spiral_eval(spec: SpiralSpec, xy) -> tuple[float, np.ndarray]:
    """Loss and analytic gradient in Cartesian coordinates.

    The chain rule runs through (r, theta) = (hypot(x, y), atan2(y, x));
    inside SPIRAL_ORIGIN_CUTOFF the chart degenerates and NearOriginError
    is raised.
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1)
    if xy.shape[0] != 2:
        raise ShapeMismatchError("spiral_eval", (xy.shape[0],), (2,))
    x, y = float(xy[0]), float(xy[1])
    r = math.hypot(x, y)
    if r <= SPIRAL_ORIGIN_CUTOFF:
        raise NearOriginError(r)
    theta = math.atan2(y, x)
    phase = spec.frequency * r - theta
    swing = spec.amplitude * math.sin(phase) + spec.offset
    pull = 2.0 * swing * spec.amplitude * math.cos(phase)
    df_dr = 2.0 * r + pull * spec.frequency
    df_dtheta = -pull
    gx = df_dr * x / r - df_dtheta * y / (r * r)
    gy = df_dr * y / r + df_dtheta * x / (r * r)
    loss = r * r + swing * swing
    return loss, np.array([gx, gy])


@dataclass(frozen=True)
class MlpSpec:
    """Tanh MLP on synthetic data from a seeded teacher network.

    layer_dims = (d0, d1, ..., dk): weights have shapes (d0, d1), (d1, d2), ...
    with tanh after every layer except the last. Inputs are standard normal
    (optionally mixed by ``input_mixing`` to shape their covariance) and
    targets come from a teacher of identical architecture whose weights are
    drawn from the "teacher" stream of ``dataset_seed``. Everything is a pure
    function of the spec, so runs are replayable from config alone.
    """

    layer_dims: tuple[int, ...]
    dataset_seed: int = 0
    n_samples: int = 256
    activation: str = "tanh"
    input_mixing: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims needs >= 2 positive entries, got {dims}")
        object.__setattr__(self, "layer_dims", dims)
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.input_mixing is not None:
            mix = check_matrix(self.input_mixing, "input_mixing")
            d0 = dims[0]
            if mix.shape != (d0, d0):
                raise ShapeMismatchError("input_mixing", mix.shape, (d0, d0))
            object.__setattr__(self, "input_mixing", _frozen(mix))

    @property
    def weight_shapes(self) -> tuple[tuple[int, int], ...]:
        dims = self.layer_dims
        return tuple((dims[i], dims[i + 1]) for i in range(len(dims) - 1))


def _teacher_weights(spec: MlpSpec) -> list[np.ndarray]:
    gen = rng.stream(spec.dataset_seed, "teacher")
    weights = []
    for fan_in, fan_out in spec.weight_shapes:
        w = gen.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
        weights.append(w)
    return weights


def mlp_dataset(spec: MlpSpec) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic (inputs, targets): pure function of the spec."""
    gen = rng.stream(spec.dataset_seed, "dataset")
    x = gen.standard_normal((spec.n_samples, spec.layer_dims[0]))
    if spec.input_mixing is not None:
        x = matmul(x, spec.input_mixing)
    y = mlp_forward(spec, _teacher_weights(spec), x)
    return x, y


def conditioned_mixing(dim: int, condition: float, seed: int) -> np.ndarray:
    """Symmetric mixing matrix with eigenvalues log-spaced over 1/condition.

    Shapes the input covariance of an MLP dataset so its layer-one Hessian
    block is ill-conditioned in a rotated (non-coordinate) basis.
    """
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    if condition < 1.0:
        raise ValueError(f"condition must be >= 1, got {condition}")
    gen = rng.stream(seed, "oracle")
    q, _ = qr_decompose(gen.standard_normal((dim, dim)))
    scales = np.logspace(0.0, -math.log10(condition), dim)
    return matmul(q * scales, q.T)


def mlp_forward(spec: MlpSpec, weights, x) -> np.ndarray:
    a = check_matrix(x, "x")
    last = len(weights) - 1
    for i, w in enumerate(weights):
        z = matmul(a, w)
        a = np.tanh(z) if i < last else z
    return a


def mlp_eval(spec: MlpSpec, weights, batch) -> tuple[float, list[np.ndarray]]:
    """Mean-squared-error loss and backprop gradients.

    loss = (1/n) sum_i ||f(x_i) - y_i||^2 (mean over samples, sum over
    output coordinates); gradients have the same shapes as the weights.
    """
    x, y = batch
    x = check_matrix(x, "x")
    y = check_matrix(y, "y")
    shapes = spec.weight_shapes
    if len(weights) != len(shapes):
        raise ShapeMismatchError("mlp_eval weights", (len(weights),), (len(shapes),))
    for w, shape in zip(weights, shapes):
        w = check_matrix(w, "weight")
        if w.shape != shape:
            raise ShapeMismatchError("mlp_eval weight", w.shape, shape)
    n = x.shape[0]
    last = len(weights) - 1
    acts = [x]
    a = x
    for i, w in enumerate(weights):
        z = matmul(a, w)
        a = np.tanh(z) if i < last else z
        acts.append(a)
    resid = acts[-1] - y
    loss = float(np.einsum("ij,ij->", resid, resid)) / n
    delta = 2.0 * resid / n
    grads: list[np.ndarray] = [None] * len(weights)  # type: ignore[list-item]
    for i in range(last, -1, -1):
        grads[i] = matmul(acts[i].T, delta)
        if i > 0:
            back = matmul(delta, weights[i].T)
            delta = back * (1.0 - acts[i] * acts[i])  # tanh'(z) = 1 - tanh(z)^2
    return loss, grads


def _check_symmetric(a, name: str) -> np.ndarray:
    a = check_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise LinalgError(f"{name} must be square, got {a.shape}")
    asym = float(np.max(np.abs(a - a.T)))
    if asym > SYMMETRY_TOL:
        raise NotSymmetricError(asym)
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class KroneckerQuadraticSpec:
    """Matrix-parameter quadratic with Hessian kron(a, b) over vec(W).

    W is m x n; with column-stacking vec, the gradient is b @ W @ a and the
    loss is 1/2 <W, b W a>. Factor b acts on the row side (size m), factor a
    on the column side (size n).
    """

    a: np.ndarray = field(repr=False)  # n x n symmetric PSD, column side
    b: np.ndarray = field(repr=False)  # m x m symmetric PSD, row side

    @staticmethod
    def make(a, b) -> "KroneckerQuadraticSpec":
        return KroneckerQuadraticSpec(_frozen(_check_symmetric(a, "a")), _frozen(_check_symmetric(b, "b")))

    @property
    def shape(self) -> tuple[int, int]:
        return self.b.shape[0], self.a.shape[0]

    @property
    def hessian(self) -> np.ndarray:
        return kronecker(self.a, self.b)


def kronecker_eval(spec: KroneckerQuadraticSpec, w) -> tuple[float, np.ndarray]:
    w = check_matrix(w, "w")
    if w.shape != spec.shape:
        raise ShapeMismatchError("kronecker_eval", w.shape, spec.shape)
    grad = matmul(matmul(spec.b, w), spec.a)
    loss = 0.5 * float(np.einsum("ij,ij->", w, grad))
    return loss, grad


def build_kronecker_quadratic(a, b) -> QuadraticSpec:
    """Vector-form quadratic over vec(W) with H = kron(a, b).

    Used by the norm-ordering oracles, which need the full Hessian and its
    exact eigendecomposition.
    """
    a = _check_symmetric(a, "a")
    b = _check_symmetric(b, "b")
    return QuadraticSpec.from_hessian(kronecker(a, b))


def finite_difference_gradient(fn, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a 1-D point."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def finite_difference_hessian(fn, x, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function of a 1-D point."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    hess = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        for j in range(i, n):
            ej = np.zeros(n)
            ej[j] = h
            fpp = fn(x + ei + ej)
            fpm = fn(x + ei - ej)
            fmp = fn(x - ei + ej)
            fmm = fn(x - ei - ej)
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
    return hess
