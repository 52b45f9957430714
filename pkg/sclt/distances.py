"""
Dudley-type distances between sample batches, and between a batch and a centered
normal law.

The distance itself is a supremum over all L-Lipschitz, M-bounded test functions
and is not computable. Estimators here bracket it: ``bl_dictionary_lower`` from
below, ``coupling_l1_upper`` and ``abb_certificate`` from above.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt
from scipy import special, stats
from typing_extensions import Any, Callable, Dict, Literal, Optional, Sequence, Tuple, TypeAlias, Union

from .batches import SampleBatch
from .covariance import KAPPA2
from .errors import DomainError
from .gaussian import GaussianSpec, sample_mvn
from .streams import STREAM_DICTIONARY, STREAM_REFERENCE, uniform

logger = logging.getLogger(__name__)

Estimator: TypeAlias = Literal["coupling_l1", "bl_lower", "cf_grid", "abb_certificate", "ks_1d", "density_diff"]

ESTIMATORS = ("coupling_l1", "bl_lower", "cf_grid", "abb_certificate", "ks_1d", "density_diff")

DEFAULT_EPS1 = 0.3
DEFAULT_EPS2 = 0.5
DEFAULT_C2 = 8.0
MIN_C2 = 7.5
REFERENCE_SAMPLES = 100_000
CF_CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class DistanceReport:
    """
    One estimate of the distance between two stages.

    ``params`` holds whichever of L, M, R and F the estimator used. ``flags`` carries
    annotations such as ``unnormalized`` or ``excluded=3``.
    """

    pair: Tuple[str, str]
    estimator: str
    value: float
    uncertainty: float = 0.0
    params: Dict[str, float] = field(default_factory=dict)
    T: Optional[float] = None
    seed: Optional[int] = None
    N: Optional[int] = None
    theory_shape: float = math.nan
    flags: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"Unknown estimator {self.estimator}")
        if not self.value >= 0:
            raise ValueError(f"Distance estimates are non-negative, got {self.value}")

    def with_context(self, **kwargs: Any) -> "DistanceReport":
        return replace(self, **kwargs)


def _loglog(T: float) -> Tuple[float, float]:
    if not T > math.e**math.e:
        raise DomainError(f"log log log T must be positive, got T={T}")
    loglog_T = math.log(math.log(T))
    return loglog_T, math.log(loglog_T)


@dataclass(frozen=True)
class BoundParams:
    """
    Truncation and smoothing choices for comparing the P₁ vector with its Gaussian.

    ``N_trunc`` always equals ``C1·C2·r_threshold·u_norm1 / sqrt(½ log log T)``; the
    ``main`` regime makes it ``(log log log T)^{eps1+eps2}``, the ``identity`` regime
    (target covariance equal to the identity) makes it ``log log T / log log log T``.
    """

    r_threshold: float
    N_trunc: float
    u_norm1: float
    C1: float
    kappa2: float
    C2: float
    eps1: float
    eps2: float
    R: float
    F: float
    T: float
    regime: Literal["main", "identity"] = "main"

    def __post_init__(self) -> None:
        if not self.C2 > MIN_C2:
            raise DomainError(f"C2 must exceed {MIN_C2}, got {self.C2}")
        if not 0 < self.eps1 < self.eps2 or not self.eps1 + self.eps2 < 1:
            raise DomainError(f"Need 0 < eps1 < eps2 and eps1 + eps2 < 1, got {self.eps1}, {self.eps2}")
        if not math.isclose(self.kappa2, KAPPA2):
            raise DomainError(f"kappa2 is e/(e-1), got {self.kappa2}")

        loglog_T, _ = _loglog(self.T)
        expected = self.C1 * self.C2 * self.r_threshold * self.u_norm1 / math.sqrt(0.5 * loglog_T)
        if not math.isclose(self.N_trunc, expected, rel_tol=1e-9):
            raise DomainError(f"N_trunc {self.N_trunc} disagrees with C1*C2*r*|u|_1/sqrt(llT/2) = {expected}")

    @classmethod
    def main(
        cls,
        T: float,
        eps1: float = DEFAULT_EPS1,
        eps2: float = DEFAULT_EPS2,
        C2: float = DEFAULT_C2,
        C1: float = 1.0,
    ) -> "BoundParams":
        """
        >>> round(BoundParams.main(1e100).N_trunc, 6) == round(math.log(math.log(math.log(1e100))) ** 0.8, 6)
        True
        """

        loglog_T, lll = _loglog(T)
        u_norm1 = lll**eps1
        r = math.sqrt(0.5 * loglog_T) * lll**eps2 / (C1 * C2)
        n_trunc = C1 * C2 * r * u_norm1 / math.sqrt(0.5 * loglog_T)
        return cls(
            r_threshold=r, N_trunc=n_trunc, u_norm1=u_norm1, C1=C1, kappa2=KAPPA2, C2=C2,
            eps1=eps1, eps2=eps2, R=lll, F=lll**eps1, T=T, regime="main",
        )

    @classmethod
    def identity(cls, T: float, C2: float = DEFAULT_C2, C1: float = 1.0) -> "BoundParams":
        loglog_T, lll = _loglog(T)
        r = loglog_T
        u_norm1 = math.sqrt(0.5 * loglog_T) / (C1 * C2 * lll)
        n_trunc = C1 * C2 * r * u_norm1 / math.sqrt(0.5 * loglog_T)
        return cls(
            r_threshold=r, N_trunc=n_trunc, u_norm1=u_norm1, C1=C1, kappa2=KAPPA2, C2=C2,
            eps1=DEFAULT_EPS1, eps2=DEFAULT_EPS2, R=lll, F=u_norm1, T=T, regime="identity",
        )


def _rows(X: SampleBatch, Y: SampleBatch) -> npt.NDArray[np.bool_]:
    return ~(X.excluded() | Y.excluded())


def coupling_l1_upper(X: SampleBatch, Y: SampleBatch, L: float) -> DistanceReport:
    """
    ``L·Σ_j mean|X_j - Y_j|`` over rows drawn at the same heights.

    Rows flagged in either batch are left out and counted in the report flags.

    >>> batch = SampleBatch("Q_T", np.zeros((4, 2)), seed=1)
    >>> coupling_l1_upper(batch, batch, 1.0).value
    0.0

    :param X: first batch
    :param Y: second batch, co-sampled with ``X``
    :param L: Lipschitz constant
    :returns: the upper bound with the standard error of the row mean
    """

    if X.data.shape != Y.data.shape:
        raise ValueError(f"Batches are not co-sampled: shapes {X.data.shape} and {Y.data.shape}")
    if X.seed != Y.seed:
        raise ValueError(f"Batches are not co-sampled: seeds {X.seed} and {Y.seed}")
    if L < 0:
        raise DomainError(f"L must be non-negative, got {L}")

    keep = _rows(X, Y)
    excluded = int(np.count_nonzero(~keep))
    if not np.any(keep):
        raise ValueError("Every row is excluded")

    per_row = np.sum(np.abs(X.data[keep] - Y.data[keep]), axis=1)
    value = L * float(np.mean(per_row))
    error = L * float(np.std(per_row, ddof=1) / math.sqrt(per_row.size)) if per_row.size > 1 else 0.0

    flags = (f"excluded={excluded}",) if excluded else ()
    return DistanceReport(
        pair=(X.stage, Y.stage), estimator="coupling_l1", value=value, uncertainty=error,
        params={"L": L}, seed=X.seed, N=X.N, flags=flags,
    )


def _cones(
    points: npt.NDArray[np.float64],
    centers: npt.NDArray[np.float64],
    offsets: npt.NDArray[np.float64],
    L: float,
    M: float,
) -> npt.NDArray[np.float64]:
    distances = np.sqrt(np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2))
    return np.minimum(M, np.maximum(0.0, offsets[None, :] - L * distances))


def _cone_moments(
    points: npt.NDArray[np.float64],
    centers: npt.NDArray[np.float64],
    offsets: npt.NDArray[np.float64],
    L: float,
    M: float,
) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    sums = np.zeros(centers.shape[0])
    squares = np.zeros(centers.shape[0])
    step = max(1, CF_CHUNK_ENTRIES // max(1, centers.shape[0] * points.shape[1]))
    for start in range(0, points.shape[0], step):
        values = _cones(points[start:start + step], centers, offsets, L, M)
        sums += values.sum(axis=0)
        squares += (values**2).sum(axis=0)

    n = points.shape[0]
    mean = sums / n
    variance = np.maximum(squares / n - mean**2, 0.0)
    return mean, variance / n


def bl_dictionary_lower(
    X: SampleBatch,
    Y: Union[SampleBatch, GaussianSpec],
    L: float,
    M: float,
    dict_size: int,
    seed: int,
    reference_samples: int = REFERENCE_SAMPLES,
) -> DistanceReport:
    """
    ``max_f |mean f(X) - E f(Y)|`` over a random dictionary of cones
    ``f(x) = min(M, max(0, a - L‖x - c‖))``.

    Every cone is L-Lipschitz and bounded by M, so the value is a lower bound on the
    distance up to Monte Carlo error. Centers are drawn from the pooled samples and
    offsets uniformly from [0, 2M]; member ``k`` depends only on ``seed`` and ``k``,
    so a larger dictionary extends a smaller one. Against a ``GaussianSpec`` the
    expectation is a Monte Carlo mean over ``reference_samples`` draws.

    :param X: sample batch
    :param Y: second batch or the analytic Gaussian
    :param L: Lipschitz constant
    :param M: bound
    :param dict_size: dictionary size
    :param seed: dictionary seed
    :param reference_samples: Gaussian draws for the reference expectation
    :returns: the lower bound with the standard error of the winning member
    """

    if dict_size < 1:
        raise DomainError(f"dict_size must be positive, got {dict_size}")
    if L < 0 or M < 0:
        raise DomainError(f"L and M must be non-negative, got {L}, {M}")

    if isinstance(Y, GaussianSpec):
        if Y.dim != X.N:
            raise ValueError(f"Batch has {X.N} coordinates, Gaussian has {Y.dim}")
        other = sample_mvn(Y, reference_samples, seed, stream=STREAM_REFERENCE).data
        stage = "Z_tilde"
    else:
        if Y.N != X.N:
            raise ValueError(f"Batches have {X.N} and {Y.N} coordinates")
        other = Y.data[~Y.excluded()]
        stage = Y.stage

    mine = X.data[~X.excluded()]
    pooled = np.concatenate([mine, other])
    draws = uniform(seed, STREAM_DICTIONARY, dict_size, dim=2)
    centers = pooled[np.minimum((draws[:, 0] * pooled.shape[0]).astype(np.int64), pooled.shape[0] - 1)]
    offsets = 2 * M * draws[:, 1]

    mean_x, var_x = _cone_moments(mine, centers, offsets, L, M)
    mean_y, var_y = _cone_moments(other, centers, offsets, L, M)
    gaps = np.abs(mean_x - mean_y)
    best = int(np.argmax(gaps))

    logger.debug(f"Dictionary of {dict_size} cones: best gap {gaps[best]:.4g} at member {best}")
    return DistanceReport(
        pair=(X.stage, stage), estimator="bl_lower", value=float(gaps[best]),
        uncertainty=float(math.sqrt(var_x[best] + var_y[best])),
        params={"L": L, "M": M}, seed=X.seed, N=X.N,
    )


def cf_empirical(X: SampleBatch, u: Sequence[float]) -> complex:
    """
    ``(1/n) Σ_rows exp(i u·row)``.

    >>> cf_empirical(SampleBatch("R1_T", np.ones((3, 2)), seed=0), [0.0, 0.0])
    (1+0j)
    """

    vector = np.asarray(u, dtype=np.float64)
    if vector.shape != (X.N,):
        raise ValueError(f"Expected a vector of length {X.N}, got shape {vector.shape}")
    if X.n == 0:
        raise ValueError("Empty batch")

    return complex(np.mean(np.exp(1j * (X.data @ vector))))


def cf_gauss(spec: GaussianSpec, u: Sequence[float]) -> float:
    """``exp(-uᵀKu/2)``."""

    return math.exp(-0.5 * spec.quadratic_form(u))


@dataclass(frozen=True)
class CFSup:
    sup: float
    argmax: Tuple[float, ...]
    points: int


def _grid_axis(F: float, grid_per_axis: int) -> npt.NDArray[np.float64]:
    axis = np.linspace(-F, F, grid_per_axis + 2)[1:-1]
    return np.union1d(axis, [0.0])


def cf_sup_on_grid(X: SampleBatch, spec: GaussianSpec, F: float, grid_per_axis: int) -> CFSup:
    """
    ``sup |cf_empirical(X, u) - cf_gauss(spec, u)|`` over a tensor grid in ``(-F, F)^N``
    that always contains the origin.

    The grid is evaluated in chunks sized so that no intermediate array holds more
    than ``CF_CHUNK_ENTRIES`` entries.

    :param X: sample batch
    :param spec: Gaussian law
    :param F: half-width, positive
    :param grid_per_axis: interior nodes per axis
    :returns: the supremum and the grid point attaining it
    """

    if not F > 0:
        raise DomainError(f"F must be positive, got {F}")
    if grid_per_axis < 1:
        raise DomainError(f"grid_per_axis must be positive, got {grid_per_axis}")
    if spec.dim != X.N:
        raise ValueError(f"Batch has {X.N} coordinates, Gaussian has {spec.dim}")

    axis = _grid_axis(F, grid_per_axis)
    size = axis.size**X.N
    step = max(1, CF_CHUNK_ENTRIES // max(1, X.n))
    best, best_point = 0.0, np.zeros(X.N)

    for start in range(0, size, step):
        index = np.arange(start, min(start + step, size))
        grid = axis[np.stack(np.unravel_index(index, (axis.size,) * X.N), axis=1)]
        empirical = np.mean(np.exp(1j * (X.data @ grid.T)), axis=0)
        gauss = np.exp(-0.5 * np.einsum("ij,jk,ik->i", grid, spec.covariance, grid))
        gaps = np.abs(empirical - gauss)
        k = int(np.argmax(gaps))
        if gaps[k] > best:
            best, best_point = float(gaps[k]), grid[k]

    return CFSup(sup=best, argmax=tuple(float(x) for x in best_point), points=size)


def abb_certificate(
    L: float, M: float, R: float, F: float, cf_sup: float, tail_mu: float, tail_nu: float, N: int
) -> float:
    """
    ``L/F + M((RF)^N cf_sup + tail_mu + tail_nu)``, the smoothing bound without its
    dimension-dependent constant. Callers report it as unnormalized.

    >>> abb_certificate(1.0, 1.0, 2.0, 4.0, 0.0, 0.0, 0.0, 2)
    0.25
    """

    values = {"L": L, "M": M, "R": R, "cf_sup": cf_sup, "tail_mu": tail_mu, "tail_nu": tail_nu}
    for name, value in values.items():
        if value < 0:
            raise DomainError(f"{name} must be non-negative, got {value}")
    if not F > 0:
        raise DomainError(f"F must be positive, got {F}")

    return L / F + M * ((R * F) ** N * cf_sup + tail_mu + tail_nu)


def empirical_box_tail(X: SampleBatch, R: float) -> float:
    """Fraction of rows with some coordinate above ``R`` in size."""

    return float(np.mean(np.any(np.abs(X.data) > R, axis=1)))


def gaussian_box_tail(spec: GaussianSpec, R: float) -> float:
    """Union bound ``Σ_j P(|Z_j| > R)`` for the Gaussian leaving the box ``[-R, R]^N``."""

    variances = np.diag(spec.covariance)
    return float(min(1.0, np.sum(special.erfc(R / np.sqrt(2 * variances)))))


def kolmogorov_1d(
    samples: Sequence[float], reference: Union[str, Callable[..., Any]] = "std_normal"
) -> float:
    """
    ``sup_x |F_n(x) - F(x)|`` evaluated at the jump points of the empirical CDF.

    >>> kolmogorov_1d([0.0])
    0.5

    :param samples: observations
    :param reference: ``std_normal`` or a CDF callable
    :returns: the Kolmogorov distance
    """

    values = np.asarray(samples, dtype=np.float64)
    if values.size == 0:
        raise ValueError("Need at least one sample")

    if reference == "std_normal":
        cdf: Union[str, Callable[..., Any]] = "norm"
    elif callable(reference):
        cdf = reference
    else:
        raise ValueError(f"Unknown reference {reference}")

    return float(stats.kstest(values, cdf).statistic)
