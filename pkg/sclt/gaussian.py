"""
Centered multivariate normal vectors: sampling, exact moments and tails, and the
perturbation estimates for a covariance matrix ``C`` moved to ``C + E``.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import special, stats
from typing_extensions import Literal, Optional, Sequence, Tuple

from .batches import SampleBatch
from .covariance import Matrix, check_pd
from .errors import CapacityError, DomainError, PreconditionError
from .streams import STREAM_DENSITY, STREAM_GAUSSIAN, standard_normal, uniform

logger = logging.getLogger(__name__)

CHOLESKY_TOLERANCE = 1e-10
DENSITY_NODES = 201
DENSITY_BOX_SIGMAS = 8.0
DENSITY_GRID_MAX_DIM = 3
DENSITY_MC_SAMPLES = 200_000
EIGEN_FALLBACK_DIM = 8
NEUMANN_SLACK = 1e-12
_DENSITY_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """
    A centered normal law on R^N, held through its covariance and Cholesky factor.
    """

    dim: int
    covariance: Matrix
    cholesky_factor: Matrix

    @classmethod
    def from_covariance(cls, covariance: Sequence[Sequence[float]]) -> "GaussianSpec":
        """
        Factor a positive-definite covariance.

        >>> GaussianSpec.from_covariance([[4.0, 0.0], [0.0, 1.0]]).cholesky_factor.tolist()
        [[2.0, 0.0], [0.0, 1.0]]

        :param covariance: symmetric positive-definite matrix
        :returns: the specification
        """

        matrix = np.array(covariance, dtype=np.float64)
        check = check_pd(matrix)
        if not check.pd:
            raise PreconditionError(f"Covariance is not positive definite (verdict {check.verdict})")

        factor = np.linalg.cholesky(matrix)
        error = np.linalg.norm(factor @ factor.T - matrix) / np.linalg.norm(matrix)
        if error > CHOLESKY_TOLERANCE:
            raise PreconditionError(f"Cholesky factor reproduces the covariance only to {error:.3g}")

        matrix.setflags(write=False)
        factor.setflags(write=False)
        return cls(dim=matrix.shape[0], covariance=matrix, cholesky_factor=factor)

    def quadratic_form(self, u: Sequence[float]) -> float:
        vector = _vector(u, self.dim)
        return float(vector @ self.covariance @ vector)


def _vector(u: Sequence[float], dim: int) -> npt.NDArray[np.float64]:
    vector = np.asarray(u, dtype=np.float64)
    if vector.shape != (dim,):
        raise ValueError(f"Expected a vector of length {dim}, got shape {vector.shape}")
    return vector


def sample_mvn(
    spec: GaussianSpec, n: int, seed: int, stream: int = STREAM_GAUSSIAN, threads: int = 1
) -> SampleBatch:
    """
    ``n`` independent draws of ``L·g`` with ``g`` standard normal.

    Draws come from counter-based blocks, so the batch depends on ``seed`` and
    ``stream`` only and never on ``threads``.

    :param spec: the Gaussian law
    :param n: number of rows, possibly 0
    :param seed: 64-bit seed
    :param stream: stream number
    :param threads: worker threads
    :returns: a ``Z_tilde`` batch
    """

    if n < 0:
        raise DomainError(f"Sample count must be non-negative, got {n}")

    g = standard_normal(seed, stream, n, spec.dim, threads)
    data = g @ spec.cholesky_factor.T
    logger.debug(f"Sampled {n} Gaussian rows in dimension {spec.dim}")
    return SampleBatch(stage="Z_tilde", data=data, seed=seed, meta={"N": spec.dim})


def mvn_even_moment(u: Sequence[float], spec: GaussianSpec, n: int) -> float:
    """
    ``E[(u·Z)^{2n}] = (2n)!/(n! 2^n) (uᵀKu)^n``.

    >>> mvn_even_moment([1.0, 1.0], GaussianSpec.from_covariance([[1, 0.5], [0.5, 1]]), 1)
    3.0
    """

    if n < 0:
        raise DomainError(f"Moment order must be non-negative, got {n}")

    double_factorial = math.factorial(2 * n) // (math.factorial(n) * 2**n)
    return float(double_factorial * spec.quadratic_form(u) ** n)


def mvn_odd_moment(u: Sequence[float], spec: GaussianSpec, n: int) -> float:
    """Odd moments of a centered normal vanish."""

    _vector(u, spec.dim)
    return 0.0


def gaussian_tail(r: float) -> float:
    """
    The bound ``sqrt(2/π) e^{-r²/2} / r`` on ``P(|N(0,1)| > r)``.

    >>> round(gaussian_tail(1.0), 4)
    0.4839
    """

    if not r > 0:
        raise DomainError(f"Tail threshold must be positive, got {r}")

    return math.sqrt(2 / math.pi) * math.exp(-r * r / 2) / r


def normal_two_sided_tail(r: float) -> float:
    """``P(|N(0,1)| > r) = erfc(r/√2)``."""

    return float(special.erfc(r / math.sqrt(2)))


@dataclass(frozen=True, eq=False)
class NeumannResult:
    """
    The truncated series with its error bound. ``residual`` is
    ``max|(C + E)·inverse_approx - I|``, which is at most
    ``residual_bound·N·max|C + E|`` when ``verified`` holds.
    """

    inverse_approx: Matrix
    residual_bound: float
    ratio: float
    residual: float = 0.0
    verified: bool = True


def _perturbation(C: Sequence[Sequence[float]], E: Sequence[Sequence[float]]) -> Tuple[Matrix, Matrix, Matrix, float]:
    """Validate a pair and return ``(C, E, C^{-1}, N²·γ·max|E|)``."""

    C_matrix = np.array(C, dtype=np.float64)
    E_matrix = np.array(E, dtype=np.float64)
    if C_matrix.shape != E_matrix.shape or C_matrix.ndim != 2:
        raise ValueError(f"Shape mismatch: {C_matrix.shape} and {E_matrix.shape}")
    if not np.allclose(E_matrix, E_matrix.T, rtol=0, atol=1e-14):
        raise DomainError("Perturbation is not symmetric")

    check = check_pd(C_matrix)
    if not check.pd:
        raise PreconditionError(f"Base covariance is not positive definite (verdict {check.verdict})")

    C_inv = np.linalg.inv(C_matrix)
    n = C_matrix.shape[0]
    gamma = float(np.max(np.abs(C_inv)))
    ratio = n * n * gamma * float(np.max(np.abs(E_matrix), initial=0.0))
    if ratio >= 1:
        raise PreconditionError(f"Perturbation is not admissible: N^2 * gamma * max|E| = {ratio:.4g} >= 1")

    return C_matrix, E_matrix, C_inv, ratio


def neumann_inverse(C: Sequence[Sequence[float]], E: Sequence[Sequence[float]], terms: int) -> NeumannResult:
    """
    ``(C + E)^{-1} ≈ (I + Σ_{k=1}^{terms} (-1)^k (C^{-1}E)^k) C^{-1}``.

    With ``ρ = N²γ max|E|`` and ``γ = max|C^{-1}|``, every entry of ``(C^{-1}E)^k``
    is at most ``ρ^k / N``, so every entry of the omitted tail is at most
    ``γ ρ^{terms+1} / (1 - ρ)``.

    :param C: positive-definite matrix
    :param E: symmetric perturbation
    :param terms: number of series terms
    :returns: the approximation and the entrywise bound on its error
    """

    if terms < 0:
        raise DomainError(f"terms must be non-negative, got {terms}")

    C_matrix, E_matrix, C_inv, ratio = _perturbation(C, E)
    step = -(C_inv @ E_matrix)
    power = np.eye(C_inv.shape[0])
    series = np.eye(C_inv.shape[0])
    for _ in range(terms):
        power = power @ step
        series = series + power

    gamma = float(np.max(np.abs(C_inv)))
    bound = gamma * ratio ** (terms + 1) / (1 - ratio)
    inverse = series @ C_inv

    perturbed = C_matrix + E_matrix
    residual = float(np.max(np.abs(perturbed @ inverse - np.eye(C_inv.shape[0]))))
    scale = C_inv.shape[0] * float(np.max(np.abs(perturbed)))
    verified = residual <= bound * scale + NEUMANN_SLACK * scale * gamma
    if not verified:
        logger.warning(f"Neumann residual {residual:.4g} exceeds {bound * scale:.4g} after {terms} terms")

    return NeumannResult(
        inverse_approx=inverse, residual_bound=bound, ratio=ratio, residual=residual, verified=verified
    )


def det_ratio(C: Sequence[Sequence[float]], E: Sequence[Sequence[float]]) -> float:
    """
    ``det(C + E) / det(C) = det(I + C^{-1}E)``.

    The result is checked against ``|det - 1| <= (1 + ρ)^N - 1``, which holds since
    the operator norm of ``C^{-1}E`` is at most ``N·max|C^{-1}E| <= ρ``.

    >>> round(det_ratio([[1.0, 0.0], [0.0, 1.0]], [[0.1, 0.0], [0.0, 0.1]]), 12)
    1.21
    """

    _, E_matrix, C_inv, ratio = _perturbation(C, E)
    n = C_inv.shape[0]
    value = float(np.linalg.det(np.eye(n) + C_inv @ E_matrix))

    expansion = (1 + ratio) ** n - 1
    if abs(value - 1) > expansion * (1 + 1e-9) + 1e-15:
        raise ArithmeticError(f"det(I + C^-1 E) = {value} leaves the expansion bound {expansion:.4g}")

    return value


def lambda_min_inverse(C: Sequence[Sequence[float]], iterations: int = 1000, tolerance: float = 1e-12) -> float:
    """
    Smallest eigenvalue of ``C^{-1}``, the reciprocal of the largest eigenvalue of
    ``C``, by power iteration on ``C``; falls back to a dense eigensolver for small
    matrices when the iteration stalls.

    >>> round(lambda_min_inverse([[2.0, 0.0], [0.0, 0.5]]), 12)
    0.5
    """

    matrix = np.asarray(C, dtype=np.float64)
    n = matrix.shape[0]
    vector = np.ones(n) / math.sqrt(n)
    estimate = 0.0

    for _ in range(iterations):
        image = matrix @ vector
        norm = float(np.linalg.norm(image))
        if norm == 0:
            raise PreconditionError("Matrix is zero")
        vector = image / norm
        if abs(norm - estimate) <= tolerance * norm:
            return 1.0 / norm
        estimate = norm

    if n <= EIGEN_FALLBACK_DIM:
        logger.debug("Power iteration did not settle, using a dense eigensolver")
        return 1.0 / float(np.max(np.linalg.eigvalsh(matrix)))

    logger.warning(f"Power iteration did not settle after {iterations} steps")
    return 1.0 / estimate


@dataclass(frozen=True)
class DensityDiff:
    """
    ``∫ |φ_{C+E} - φ_C|`` with its bound shape.

    ``ratio`` is ``f_sup·numeric_integral / bound_shape``; its size is reported
    because the implied constant of the bound is not explicit.
    """

    numeric_integral: float
    bound_shape: float
    ratio: float
    standard_error: float
    method: Literal["grid", "monte_carlo"]
    nodes: int


def _log_density(points: npt.NDArray[np.float64], covariance: Matrix) -> npt.NDArray[np.float64]:
    return np.asarray(stats.multivariate_normal(mean=np.zeros(covariance.shape[0]), cov=covariance).logpdf(points))


def _grid_integral(C: Matrix, E: Matrix, nodes: int, box: Optional[float]) -> float:
    n = C.shape[0]
    if box is None:
        sigma = math.sqrt(max(float(np.max(np.diag(C))), float(np.max(np.diag(C + E)))))
        box = DENSITY_BOX_SIGMAS * sigma

    axis = np.linspace(-box, box, nodes)
    h = axis[1] - axis[0]
    weights_1d = np.full(nodes, h)
    weights_1d[[0, -1]] = h / 2

    total = 0.0
    size = nodes**n
    for start in range(0, size, _DENSITY_CHUNK):
        index = np.arange(start, min(start + _DENSITY_CHUNK, size))
        digits = np.stack(np.unravel_index(index, (nodes,) * n), axis=1)
        points = axis[digits]
        weights = np.prod(weights_1d[digits], axis=1)
        difference = np.abs(np.exp(_log_density(points, C + E)) - np.exp(_log_density(points, C)))
        total += math.fsum((weights * difference).tolist())

    return total


def _monte_carlo_integral(C: Matrix, E: Matrix, samples: int, seed: int) -> Tuple[float, float]:
    # stratified in the first coordinate of g, then x = L g
    n = C.shape[0]
    factor = np.linalg.cholesky(C)
    g = standard_normal(seed, STREAM_DENSITY, samples, n)
    u = uniform(seed, STREAM_DENSITY + 1, samples)[:, 0]
    g[:, 0] = stats.norm.ppf((np.arange(samples) + u) / samples)
    points = g @ factor.T

    values = np.abs(np.exp(_log_density(points, C + E) - _log_density(points, C)) - 1)
    mean = float(np.mean(values))
    error = float(np.std(values, ddof=1) / math.sqrt(samples))
    return mean, error


def density_diff(
    C: Sequence[Sequence[float]],
    E: Sequence[Sequence[float]],
    f_sup: float = 1.0,
    box: Optional[float] = None,
    nodes: int = DENSITY_NODES,
    samples: int = DENSITY_MC_SAMPLES,
    seed: int = 0,
) -> DensityDiff:
    """
    ``∫ |φ_{C+E}(x) - φ_C(x)| dx`` for centered normal densities.

    Up to three dimensions the integral is a tensor trapezoid rule on
    ``[-box, box]^N`` (default ``box = 8σ``, 201 nodes per axis); above that a Monte
    Carlo estimate stratified in one coordinate, with its standard error.

    The bound shape is ``f_sup·max|E|·N²γ·(1 + 1/λ_min(C^{-1}))``.

    :param C: positive-definite base covariance
    :param E: admissible symmetric perturbation
    :param f_sup: sup norm of the test function
    :param box: half-width of the integration box
    :param nodes: grid nodes per axis
    :param samples: Monte Carlo sample count above three dimensions
    :param seed: Monte Carlo seed
    :returns: the integral, the bound shape and their ratio
    """

    C_matrix, E_matrix, C_inv, _ = _perturbation(C, E)
    n = C_matrix.shape[0]
    max_e = float(np.max(np.abs(E_matrix), initial=0.0))

    method: Literal["grid", "monte_carlo"] = "grid" if n <= DENSITY_GRID_MAX_DIM else "monte_carlo"
    if max_e == 0:
        return DensityDiff(0.0, 0.0, 0.0, 0.0, method, 0)

    if method == "grid":
        if nodes < 3:
            raise DomainError(f"Need at least 3 nodes per axis, got {nodes}")
        if nodes**n > 10**8:
            raise CapacityError(f"{nodes}^{n} grid points are too many", requested=nodes**n, capacity=10**8)
        integral, error, count = _grid_integral(C_matrix, E_matrix, nodes, box), 0.0, nodes**n
    else:
        integral, error = _monte_carlo_integral(C_matrix, E_matrix, samples, seed)
        count = samples

    gamma = float(np.max(np.abs(C_inv)))
    shape = f_sup * max_e * n * n * gamma * (1 + 1 / lambda_min_inverse(C_matrix))
    ratio = f_sup * integral / shape
    logger.debug(f"density_diff: integral {integral:.6g} ({method}), shape {shape:.6g}")
    return DensityDiff(integral, shape, ratio, error, method, count)
