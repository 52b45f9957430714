"""
Shift classification, the target covariance 𝔎, the empirical covariance 𝔎̃(T),
the quadratic forms 𝒱 and 𝒰, the normalizer 𝔐 and positive-definiteness checks.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt
from typing_extensions import Dict, List, Literal, Optional, Sequence, Tuple, TypeAlias

from .arith import SIEVE_CAPACITY, prime_sum
from .characters import DirichletCharacter, pair_delta
from .dirichlet_series import SMALL_PRIME_CUT, ApproxParams
from .errors import DomainError, EmptyRangeError

logger = logging.getLogger(__name__)

Matrix: TypeAlias = npt.NDArray[np.float64]
Verdict: TypeAlias = Literal["pd", "not_pd", "semidefinite", "indeterminate"]

PD_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-12
KAPPA2 = math.e / (math.e - 1)
DISTANCE_CONDITION_CAP = 10**7


def _loglog(T: float) -> float:
    if not T > math.e:
        raise DomainError(f"log log T must be positive, got T={T}")
    return math.log(math.log(T))


@dataclass(frozen=True)
class PairClass:
    """Classification of one pair of shifts."""

    c: float
    e: float
    cond1: bool
    violation: bool


def classify_shift_pair(
    alpha_i: float, alpha_j: float, T: float, delta_budget: float, c: Optional[float] = None
) -> PairClass:
    """
    Classify a pair of shifts by ``log(1/|α_i - α_j|) = c·log log T + e``.

    Without a prescribed ``c`` the class is ``c = min(1, log(1/|Δα|)/log log T)``
    clamped to [0, 1]. Equal shifts fall in the c = 1 branch with ``e = inf``.

    :param alpha_i: first shift
    :param alpha_j: second shift
    :param T: height scale
    :param delta_budget: δ(T), the tolerated size of ``e``
    :param c: prescribed class, for shifts built from a generator rule
    :returns: the class with its remainder and a violation flag
    """

    loglog_T = _loglog(T)
    gap = abs(alpha_i - alpha_j)

    if gap == 0:
        return PairClass(c=1.0, e=math.inf, cond1=True, violation=False)

    log_inverse = -math.log(gap)
    if c is None:
        c = min(1.0, max(0.0, log_inverse / loglog_T))

    e = log_inverse - c * loglog_T
    cond1 = c >= 1
    # the c = 1 condition is an inequality, so only a deficit counts against it
    violation = e < -delta_budget if cond1 else abs(e) > delta_budget
    return PairClass(c=float(c), e=e, cond1=cond1, violation=violation)


def v_min(T: float, alpha_i: float, alpha_j: float) -> float:
    """
    ``min(log log T, log(1/|α_i - α_j|))``; equal shifts give ``log log T``.

    >>> round(v_min(1e50, 0.0, 1e-3), 3)
    4.746
    """

    loglog_T = _loglog(T)
    gap = abs(alpha_i - alpha_j)
    if gap == 0:
        return loglog_T

    return min(loglog_T, -math.log(gap))


@dataclass(frozen=True)
class ShiftConfig:
    """
    Shifts at a working height with their pairwise classes.

    ``pair_class[i][j]`` is the class c_ij; ``cond1[i][j]`` marks pairs in the c = 1
    inequality branch and ``unclassified`` lists pairs whose remainder exceeds δ(T).
    """

    alphas: Tuple[float, ...]
    pair_class: Tuple[Tuple[float, ...], ...]
    remainders: Tuple[Tuple[float, ...], ...]
    cond1: Tuple[Tuple[bool, ...], ...]
    Delta_budget: float = 1.0
    delta_budget: float = 1.0
    epsilon: float = 0.5
    T: Optional[float] = None
    unclassified: Tuple[Tuple[int, int], ...] = field(default=())

    @property
    def N(self) -> int:
        return len(self.alphas)

    @classmethod
    def from_alphas(
        cls,
        alphas: Sequence[float],
        T: float,
        delta_budget: float = 1.0,
        Delta_budget: float = 1.0,
        epsilon: float = 0.5,
        c_matrix: Optional[Sequence[Sequence[float]]] = None,
    ) -> "ShiftConfig":
        """
        Classify every pair of ``alphas`` at height ``T``.

        :param alphas: shifts, each at most T/2 in size
        :param T: height scale
        :param delta_budget: δ(T)
        :param Delta_budget: Δ(T)
        :param epsilon: exponent ε in (0, 2/3)
        :param c_matrix: prescribed classes, when the shifts come from a rule
        :returns: the configuration
        """

        if not 0 < epsilon < 2 / 3:
            raise DomainError(f"epsilon must lie in (0, 2/3), got {epsilon}")
        if delta_budget < 0 or Delta_budget < 0:
            raise DomainError("Budgets must be non-negative")
        for alpha in alphas:
            if abs(alpha) > 0.5 * T:
                raise DomainError(f"Shift {alpha} exceeds T/2 at T={T:g}")

        n = len(alphas)
        classes = [[1.0] * n for _ in range(n)]
        remainders = [[0.0] * n for _ in range(n)]
        cond1 = [[True] * n for _ in range(n)]
        unclassified = []

        for i in range(n):
            for j in range(i + 1, n):
                prescribed = None if c_matrix is None else float(c_matrix[i][j])
                pair = classify_shift_pair(alphas[i], alphas[j], T, delta_budget, prescribed)
                classes[i][j] = classes[j][i] = pair.c
                remainders[i][j] = remainders[j][i] = pair.e
                cond1[i][j] = cond1[j][i] = pair.cond1
                if pair.violation:
                    logger.warning(
                        f"Shift pair ({i}, {j}) is unclassified at T={T:g}: |e|={abs(pair.e):.4g} "
                        f"exceeds delta={delta_budget:.4g}"
                    )
                    unclassified.append((i, j))

        return cls(
            alphas=tuple(float(a) for a in alphas),
            pair_class=tuple(tuple(row) for row in classes),
            remainders=tuple(tuple(row) for row in remainders),
            cond1=tuple(tuple(row) for row in cond1),
            Delta_budget=Delta_budget,
            delta_budget=delta_budget,
            epsilon=epsilon,
            T=T,
            unclassified=tuple(unclassified),
        )


def shifts_from_rule(T: float, c_matrix: Sequence[Sequence[float]]) -> List[float]:
    """
    Shifts with ``|α_j - α_{j+1}| = (log T)^{-c_{j,j+1}}``, starting from ``α_1 = 0``.

    Consecutive gaps realise the classes exactly; other pairs inherit the sum of the
    gaps between them and are logged when their class drifts from the matrix.

    :param T: height scale
    :param c_matrix: symmetric matrix of classes
    :returns: the shifts
    """

    log_T = math.log(T)
    alphas = [0.0]
    for j in range(len(c_matrix) - 1):
        alphas.append(alphas[-1] + log_T ** -float(c_matrix[j][j + 1]))

    loglog_T = _loglog(T)
    for i in range(len(alphas)):
        for j in range(i + 2, len(alphas)):
            realised = -math.log(abs(alphas[i] - alphas[j])) / loglog_T
            if abs(realised - float(c_matrix[i][j])) > 0.05:
                logger.info(f"Rule shifts give c={realised:.3f} for pair ({i}, {j}), matrix says {c_matrix[i][j]}")

    return alphas


def u_quadratic(
    a: Sequence[float], shifts: ShiftConfig, chars: Sequence[DirichletCharacter], T: float
) -> float:
    """
    ``Σ a_j² log log T + 2 Σ_{i<j} a_i a_j δ_ij 𝒱(T, α_i, α_j)``.

    :param a: coefficients, one per coordinate
    :param shifts: shift configuration
    :param chars: characters, one per coordinate
    :param T: height scale
    :returns: the quadratic form
    """

    if not len(a) == shifts.N == len(chars):
        raise ValueError(f"Dimension mismatch: {len(a)} coefficients, {shifts.N} shifts, {len(chars)} characters")

    loglog_T = _loglog(T)
    total = sum(x * x for x in a) * loglog_T
    for i in range(len(a)):
        for j in range(i + 1, len(a)):
            if pair_delta(chars[i], chars[j]):
                total += 2 * a[i] * a[j] * v_min(T, shifts.alphas[i], shifts.alphas[j])

    return total


@dataclass(frozen=True)
class PDResult:
    """Outcome of ``check_pd``."""

    pd: bool
    minors: Tuple[float, ...]
    verdict: Verdict
    cholesky_ok: bool
    min_eigenvalue: float


def check_pd(matrix: Matrix, tolerance: float = PD_TOLERANCE) -> PDResult:
    """
    Positive-definiteness by Sylvester's criterion, confirmed by a Cholesky attempt.

    Minors within ``tolerance·scale^k`` of zero and disagreements between the two
    methods are reported as indeterminate; a singular matrix with no negative
    eigenvalue is reported as semidefinite.

    :param matrix: symmetric matrix
    :param tolerance: relative tolerance on the minors
    :returns: the verdict with the leading principal minors
    """

    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"Expected a square matrix, got shape {matrix.shape}")

    scale = float(np.max(np.abs(matrix))) if matrix.size else 1.0
    scale = scale or 1.0
    if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
        raise DomainError("Matrix is not symmetric")

    n = matrix.shape[0]
    minors = tuple(float(np.linalg.det(matrix[:k, :k])) for k in range(1, n + 1))
    thresholds = [tolerance * scale**k for k in range(1, n + 1)]

    try:
        np.linalg.cholesky(matrix)
        cholesky_ok = True
    except np.linalg.LinAlgError:
        cholesky_ok = False

    min_eigenvalue = float(np.min(np.linalg.eigvalsh(matrix))) if n else 1.0
    sylvester = all(m > t for m, t in zip(minors, thresholds))
    borderline = any(abs(m) <= t for m, t in zip(minors, thresholds))

    verdict: Verdict
    if sylvester and cholesky_ok:
        verdict = "pd"
    elif not sylvester and not cholesky_ok:
        verdict = "semidefinite" if abs(min_eigenvalue) <= tolerance * scale * n else "not_pd"
    elif borderline:
        verdict = "indeterminate"
    else:
        logger.warning(f"Sylvester ({sylvester}) and Cholesky ({cholesky_ok}) disagree")
        verdict = "indeterminate"

    return PDResult(
        pd=verdict == "pd", minors=minors, verdict=verdict, cholesky_ok=cholesky_ok, min_eigenvalue=min_eigenvalue
    )


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """
    The target matrix 𝔎 and the empirical matrix 𝔎̃(T). Either side may be absent
    when only one was built; ``merged`` joins the two.
    """

    K_target: Optional[Matrix] = None
    K_empirical: Optional[Matrix] = None
    pd_target: Optional[bool] = None
    pd_empirical: Optional[bool] = None
    T: Optional[float] = None
    target_check: Optional[PDResult] = None
    empirical_check: Optional[PDResult] = None

    def merged(self, other: "CovarianceSpec") -> "CovarianceSpec":
        updates = {key: value for key, value in vars(other).items() if value is not None}
        return replace(self, **updates)


def build_K(shifts: ShiftConfig, chars: Sequence[DirichletCharacter]) -> CovarianceSpec:
    """
    ``k_ii = 1`` and ``k_ij = δ_ij·c_ij``.

    :param shifts: classified shifts
    :param chars: characters, one per coordinate
    :returns: the target side of the covariance specification
    """

    if shifts.N != len(chars):
        raise ValueError(f"{shifts.N} shifts but {len(chars)} characters")

    n = shifts.N
    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            matrix[i, j] = matrix[j, i] = pair_delta(chars[i], chars[j]) * shifts.pair_class[i][j]

    check = check_pd(matrix)
    return CovarianceSpec(K_target=matrix, pd_target=check.pd, T=shifts.T, target_check=check)


def _p1_covariance(
    chi_i: DirichletCharacter, chi_j: DirichletCharacter, lam: float, params: ApproxParams
) -> float:
    twisted = chi_i * chi_j.conjugate()
    return 0.5 * prime_sum(twisted, lam, 2 * params.sigma0, params.Y, lo=SMALL_PRIME_CUT).real


def build_K_tilde(
    T: float, shifts: ShiftConfig, chars: Sequence[DirichletCharacter], params: ApproxParams
) -> CovarianceSpec:
    """
    Correlations of the P₁ coordinates, computed from prime sums:
    ``Cov[P_{1,i}, P_{1,j}] = ½ Re Σ_{13<p<=Y} χ_iχ̄_j(p) p^{-i(α_i-α_j)} / p^{2σ₀}``.

    :param T: height scale
    :param shifts: shift configuration
    :param chars: characters, one per coordinate
    :param params: parameter bundle (σ₀ and Y)
    :returns: the empirical side of the covariance specification
    """

    if shifts.N != len(chars):
        raise ValueError(f"{shifts.N} shifts but {len(chars)} characters")
    if params.Y < SMALL_PRIME_CUT + 4:
        raise EmptyRangeError(f"P1 range (13, {params.Y:g}] contains no primes")

    n = shifts.N
    variances = [_p1_covariance(chi, chi, 0.0, params) for chi in chars]
    if min(variances) <= 0:
        raise EmptyRangeError("A character vanishes on every prime of the P1 range")

    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            cov = _p1_covariance(chars[i], chars[j], shifts.alphas[i] - shifts.alphas[j], params)
            matrix[i, j] = matrix[j, i] = cov / math.sqrt(variances[i] * variances[j])

    check = check_pd(matrix)
    return CovarianceSpec(K_empirical=matrix, pd_empirical=check.pd, T=T, empirical_check=check)


def covariance_spec(
    T: float, shifts: ShiftConfig, chars: Sequence[DirichletCharacter], params: ApproxParams
) -> CovarianceSpec:
    """Both sides of the covariance specification."""

    return build_K(shifts, chars).merged(build_K_tilde(T, shifts, chars, params))


@dataclass(frozen=True)
class Normalizer:
    M_T_chi: float
    C1: float
    within_kappa2: bool


def normalizer(T: float, chi: DirichletCharacter, params: ApproxParams) -> Normalizer:
    """
    ``𝔐 = Σ_{13<p<=Y} |χ(p)|²/p^{2σ₀}`` and ``C₁ = sqrt(log log T / 𝔐)``.

    ``𝔐 <= log log T`` holds for every consistent ``(T, params)`` and is enforced.
    ``within_kappa2`` reports whether ``C₁² < e/(e-1)``, which only holds once T is
    large; failures are logged, not raised.
    """

    if params.Y < SMALL_PRIME_CUT + 4:
        raise EmptyRangeError(f"P1 range (13, {params.Y:g}] contains no primes")

    M = 2 * _p1_covariance(chi, chi, 0.0, params)
    if M <= 0:
        raise EmptyRangeError("The character vanishes on every prime of the P1 range")

    loglog_T = _loglog(T)
    if M > loglog_T:
        raise ArithmeticError(f"Normalizer {M:.4g} exceeds log log T = {loglog_T:.4g} at T={T:g}")

    C1 = math.sqrt(loglog_T / M)
    within = C1 * C1 < KAPPA2
    if not within:
        logger.info(f"C1^2 = {C1 * C1:.4g} is not below e/(e-1) at T={T:g}")

    return Normalizer(M_T_chi=M, C1=C1, within_kappa2=within)


def dedekind_covariance(
    shifts: ShiftConfig, quadratic_chars: Sequence[DirichletCharacter]
) -> Matrix:
    """
    The matrix with entries ``½ c_ij (Δ_ij + 1)`` where ``Δ_ij`` marks a principal
    ``χ_{K_i} χ̄_{K_j}``.

    :param shifts: shift configuration (one shift per field)
    :param quadratic_chars: the quadratic characters of the fields
    :returns: symmetric matrix with unit diagonal
    """

    if shifts.N != len(quadratic_chars):
        raise ValueError(f"{shifts.N} shifts but {len(quadratic_chars)} characters")

    n = shifts.N
    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            delta = pair_delta(quadratic_chars[i], quadratic_chars[j])
            matrix[i, j] = matrix[j, i] = 0.5 * shifts.pair_class[i][j] * (delta + 1)

    return matrix


@dataclass(frozen=True)
class DistanceCondition:
    i: int
    j: int
    value: float
    budget: float
    cutoff: float


def distance_condition(
    shifts: ShiftConfig, chars: Sequence[DirichletCharacter], T: float
) -> List[DistanceCondition]:
    """
    ``|Σ_{p<=T} χ_iχ̄_j(p) p^{-i(α_i-α_j)}/p - δ_ij 𝒱(T, α_i, α_j)|`` for every pair,
    with the prime sum cut at ``DISTANCE_CONDITION_CAP``. Compared with Δ(T) by the
    caller; the q-dependent constant is unknown so nothing is asserted here.
    """

    cutoff = min(T, DISTANCE_CONDITION_CAP, SIEVE_CAPACITY)
    rows = []
    for i in range(shifts.N):
        for j in range(i + 1, shifts.N):
            twisted = chars[i] * chars[j].conjugate()
            total = prime_sum(twisted, shifts.alphas[i] - shifts.alphas[j], 1.0, cutoff)
            expected = pair_delta(chars[i], chars[j]) * v_min(T, shifts.alphas[i], shifts.alphas[j])
            rows.append(DistanceCondition(i, j, abs(total - expected), shifts.Delta_budget, cutoff))

    return rows


def orthogonality_gap(spec: CovarianceSpec) -> float:
    """Largest off-diagonal magnitude of 𝔎̃(T)."""

    if spec.K_empirical is None:
        raise ValueError("No empirical matrix")

    off = spec.K_empirical - np.diag(np.diag(spec.K_empirical))
    return float(np.max(np.abs(off), initial=0.0))


def as_lists(matrix: Optional[Matrix]) -> Optional[List[List[float]]]:
    return None if matrix is None else [[float(x) for x in row] for row in matrix]


def pd_summary(spec: CovarianceSpec) -> Dict[str, Optional[str]]:
    return {
        "target": spec.target_check.verdict if spec.target_check else None,
        "empirical": spec.empirical_check.verdict if spec.empirical_check else None,
    }
