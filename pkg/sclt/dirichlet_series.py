"""
Dirichlet polynomials: the prime polynomial P and its split at 13, Y and X, the
prime-power polynomial 𝒫, the mollifier M and the truncated L-series.
"""

import cmath
import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np
import numpy.typing as npt
from typing_extensions import Any, Dict, List, Literal, Optional, Sequence, Tuple, TypeAlias

from .arith import factorize, mobius, mobius_upto, prime_factor_counts, prime_table
from .characters import DirichletCharacter
from .errors import CapacityError, DegenerateParametersError, DomainError
from .phases import HeightLike, phase, phases, to_fixed

logger = logging.getLogger(__name__)

DEFAULT_K = 10.0
DEFAULT_K_PRIME = 4.0
DEFAULT_A = 400.0
DEFAULT_B = 80.0
SMALL_PRIME_CUT = 13
SMALL_PRIMES = (2, 3, 5, 7, 11, 13)
SMALL_PRIMORIAL = 30030
IDENTITY_SLACK = 1e-10
SIGMA_DEGENERACY = 0.1
FULL_L_BUDGET = 10**6
MOLLIFIER_BUDGET = 10**6

PrimeRange: TypeAlias = Literal["P0", "P1", "P2", "P_full"]
PowerRange: TypeAlias = Literal["full", "P0", "P1", "P2"]

PRIME_RANGES: Tuple[str, ...] = ("P0", "P1", "P2", "P_full")


@dataclass(frozen=True)
class ApproxParams:
    """
    The parameter bundle (T, K, K', A, B) and its derived quantities.

    ``X`` and ``Y`` are the values in effect: overrides replace the derived values
    and the overrides themselves stay recorded.
    """

    T: float
    K: float
    K_prime: float
    A: float
    B: float
    W: float
    X: float
    Y: float
    sigma0: float
    Y_override: Optional[float] = None
    X_override: Optional[float] = None
    asymptotically_invalid: bool = False

    @property
    def log_T(self) -> float:
        return math.log(self.T)

    @property
    def loglog_T(self) -> float:
        return math.log(math.log(self.T))

    @property
    def logloglog_T(self) -> float:
        return math.log(math.log(math.log(self.T)))

    def bounds(self, which: str) -> Tuple[float, float]:
        """
        Exclusive lower and inclusive upper bound of a named range.

        :param which: one of P0, P1, P2, P_full or full
        :returns: (lo, hi)
        """

        if which == "P0":
            return (1.0, float(SMALL_PRIME_CUT))
        if which == "P1":
            return (float(SMALL_PRIME_CUT), self.Y)
        if which == "P2":
            return (self.Y, self.X)
        if which in ("P_full", "full"):
            return (1.0, self.X)

        raise ValueError(f"Unknown range {which}")

    def snapshot(self) -> Dict[str, Any]:
        return asdict(self)


def derive_params(
    T: float,
    K: float = DEFAULT_K,
    K_prime: float = DEFAULT_K_PRIME,
    A: float = DEFAULT_A,
    B: float = DEFAULT_B,
    Y_override: Optional[float] = None,
    X_override: Optional[float] = None,
) -> ApproxParams:
    """
    Derive W, X, Y and σ₀ from T.

    Heights with ``log log log T <= 1`` and bundles with ``W / log T`` above
    ``SIGMA_DEGENERACY`` are accepted but flagged as asymptotically invalid.

    >>> params = derive_params(1e50)
    >>> round(params.W, 1), round(params.sigma0, 3), params.asymptotically_invalid
    (24.3, 0.711, True)

    :param T: height scale, above e^e
    :param K: constant K
    :param K_prime: constant K', with 2 < K' < K
    :param A: bound on prime factors in (Y, X] per log log log T
    :param B: tail exponent
    :param Y_override: replace the derived Y
    :param X_override: replace the derived X
    :returns: the parameter bundle
    """

    T = float(T)
    if not T > math.e**math.e:
        raise DomainError(f"T={T} is too small: log log log T must be positive")
    if not 2 < K_prime < K:
        raise DomainError(f"Constants must satisfy 2 < K' < K, got K={K}, K'={K_prime}")

    log_T = math.log(T)
    loglog_T = math.log(log_T)
    logloglog_T = math.log(loglog_T)

    W = K * logloglog_T**2
    X = math.exp(log_T / (K_prime * logloglog_T))
    Y = math.exp(log_T / (K_prime * loglog_T))
    sigma0 = 0.5 + W / log_T

    if X_override is not None:
        X = float(X_override)
    if Y_override is not None:
        Y = float(Y_override)

    values = {"T": T, "W": W, "X": X, "Y": Y, "sigma0": sigma0}
    if not SMALL_PRIME_CUT < Y < X < T:
        raise DegenerateParametersError(
            f"Parameters degenerate at T={T:g}: need 13 < Y < X < T, got Y={Y:g}, X={X:g}", values
        )

    invalid = logloglog_T <= 1 or W / log_T > SIGMA_DEGENERACY
    if invalid:
        logger.warning(f"Parameters at T={T:g} are asymptotically invalid (sigma0={sigma0:.4f})")

    return ApproxParams(
        T=T, K=K, K_prime=K_prime, A=A, B=B, W=W, X=X, Y=Y, sigma0=sigma0,
        Y_override=Y_override, X_override=X_override, asymptotically_invalid=invalid,
    )


def _split(s: complex) -> Tuple[float, int]:
    return s.real, to_fixed(Fraction(s.imag))


def prime_powers(lo: float, hi: float) -> List[Tuple[int, int, int]]:
    """
    Prime powers ``n = p^k`` with ``lo < n <= hi``, ascending.

    :returns: (n, p, k) triples
    """

    if hi < 2:
        return []

    table = prime_table(math.floor(hi))
    result = []
    for p in table.between(1, hi).tolist():
        n, k = p, 1
        while n <= hi:
            if n > lo:
                result.append((n, p, k))
            n *= p
            k += 1

    result.sort()
    return result


def dirichlet_sum(
    chars: Sequence[DirichletCharacter],
    shifts: Sequence[HeightLike],
    sigma: float,
    heights: npt.NDArray[Any],
    terms: Sequence[Tuple[int, float]],
) -> npt.NDArray[np.complex128]:
    """
    ``Σ_n w_n χ_j(n) n^{-σ - i(t + α_j)}`` for every fixed-point height ``t`` and
    coordinate ``j``.

    The phase ``t·log n`` is reduced exactly once per ``n`` and shared by all
    coordinates; ``α_j·log n`` is reduced separately.

    :param chars: one character per coordinate
    :param shifts: one shift per coordinate
    :param sigma: real part of s
    :param heights: object array of fixed-point heights
    :param terms: (n, w_n) pairs, summed in the given order
    :returns: complex array of shape (len(heights), len(chars))
    """

    if len(chars) != len(shifts):
        raise ValueError(f"{len(chars)} characters but {len(shifts)} shifts")

    fixed_shifts = [to_fixed(alpha) for alpha in shifts]
    result = np.zeros((len(heights), len(chars)), dtype=np.complex128)
    if not terms or not len(heights):
        return result

    for n, weight in terms:
        theta = phases(heights, n)
        amplitude = weight * n**-sigma
        for j, chi in enumerate(chars):
            value = chi.values([n])[0]
            if value == 0:
                continue
            shifted = theta + phase(fixed_shifts[j], n)
            result[:, j] += (amplitude * value) * np.exp(-1j * shifted)

    return result


def prime_terms(lo: float, hi: float) -> List[Tuple[int, float]]:
    """Unit-weight terms for the primes in ``(lo, hi]``."""

    if hi < 2:
        return []
    return [(p, 1.0) for p in prime_table(math.floor(hi)).between(lo, hi).tolist()]


def power_terms(lo: float, hi: float) -> List[Tuple[int, float]]:
    """Terms ``Λ(n)/log n = 1/k`` for the prime powers ``n = p^k`` in ``(lo, hi]``."""

    return [(n, 1.0 / k) for n, _, k in prime_powers(lo, hi)]


def prime_poly_parts(
    chars: Sequence[DirichletCharacter],
    shifts: Sequence[HeightLike],
    sigma: float,
    heights: npt.NDArray[Any],
    params: ApproxParams,
    powers: bool = False,
) -> Dict[str, npt.NDArray[np.complex128]]:
    """
    The three pieces over p <= 13, 13 < p <= Y and Y < p <= X, plus their sum
    ``full = P0 + P1 + P2`` in that order.

    :param powers: sum over prime powers with weight 1/k (the 𝒫 polynomial) instead of primes
    :returns: complex arrays keyed by P0, P1, P2 and full
    """

    terms = power_terms if powers else prime_terms
    parts = {
        name: dirichlet_sum(chars, shifts, sigma, heights, terms(*params.bounds(name)))
        for name in ("P0", "P1", "P2")
    }
    parts["full"] = (parts["P0"] + parts["P1"]) + parts["P2"]
    return parts


def eval_prime_poly(chi: DirichletCharacter, s: complex, which: PrimeRange, params: ApproxParams) -> float:
    """
    ``Re Σ_{p in range} χ(p)/p^s`` with exactly reduced phases.

    :param chi: character
    :param s: complex argument
    :param which: P0, P1, P2 or P_full
    :param params: parameter bundle fixing the range ends
    :returns: real part of the sum
    """

    if which not in PRIME_RANGES:
        raise ValueError(f"Unknown range {which}")

    sigma, t = _split(s)
    heights = np.empty(1, dtype=object)
    heights[0] = t

    if which == "P_full":
        return float(prime_poly_parts([chi], [0], sigma, heights, params)["full"][0, 0].real)

    return float(dirichlet_sum([chi], [0], sigma, heights, prime_terms(*params.bounds(which)))[0, 0].real)


def eval_lambda_poly(chi: DirichletCharacter, s: complex, which: PowerRange, params: ApproxParams) -> complex:
    """
    ``Σ_{n in range} Λ(n)χ(n)/(n^s log n)`` over prime powers.

    :param chi: character
    :param s: complex argument
    :param which: full, P0, P1 or P2
    :param params: parameter bundle fixing the range ends
    :returns: the complex sum
    """

    if which not in ("full", "P0", "P1", "P2"):
        raise ValueError(f"Unknown range {which}")

    sigma, t = _split(s)
    heights = np.empty(1, dtype=object)
    heights[0] = t

    if which == "full":
        return complex(prime_poly_parts([chi], [0], sigma, heights, params, powers=True)["full"][0, 0])

    return complex(dirichlet_sum([chi], [0], sigma, heights, power_terms(*params.bounds(which)))[0, 0])


def mollifier_coeff(n: int, params: ApproxParams) -> int:
    """
    The support indicator a(n) of the mollifier.

    :param n: positive integer
    :param params: parameter bundle
    :returns: 1 or 0
    """

    if n < 1:
        raise DomainError(f"n must be positive, got {n}")

    factors = factorize(n)
    if any(p > params.X for p, _ in factors):
        return 0

    small = sum(k for p, k in factors if p <= params.Y)
    large = sum(k for p, k in factors if params.Y < p <= params.X)
    return int(small <= 100 * params.loglog_T and large <= params.A * params.logloglog_T)


def mollifier_coefficients(cutoff: int, params: ApproxParams) -> npt.NDArray[np.int64]:
    """
    ``μ(n)a(n)`` for ``0 <= n <= cutoff`` (entry 0 is 0).

    :param cutoff: largest n
    :param params: parameter bundle
    :returns: integer array
    """

    if cutoff > MOLLIFIER_BUDGET:
        raise CapacityError(
            f"Mollifier cutoff {cutoff} exceeds {MOLLIFIER_BUDGET}", requested=cutoff, capacity=MOLLIFIER_BUDGET
        )

    mu = mobius_upto(cutoff)
    beyond = prime_factor_counts(cutoff, params.X)
    small = prime_factor_counts(cutoff, 1, params.Y)
    large = prime_factor_counts(cutoff, params.Y, params.X)
    support = (
        (beyond == 0)
        & (small <= 100 * params.loglog_T)
        & (large <= params.A * params.logloglog_T)
    )
    return np.where(support, mu, 0)


def mollifier_tail_bound(params: ApproxParams, cutoff: int, sigma: Optional[float] = None) -> float:
    """
    Crude bound ``Σ_{cutoff < n <= S} n^{-σ}`` for the truncated mollifier, with
    ``S = Y^{100 log log T} X^{A log log log T}`` and the sum compared with an integral.

    :returns: the bound, possibly ``inf``
    """

    sigma = params.sigma0 if sigma is None else sigma
    log_support = 100 * params.loglog_T * math.log(params.Y) + params.A * params.logloglog_T * math.log(params.X)
    log_cut = math.log(cutoff)
    if log_support <= log_cut:
        return 0.0

    if sigma == 1:
        return log_support - log_cut

    try:
        upper = math.exp((1 - sigma) * log_support)
    except OverflowError:
        return math.inf

    return abs(upper - math.exp((1 - sigma) * log_cut)) / abs(1 - sigma)


def _coefficient_sum(
    chi: DirichletCharacter, s: complex, coefficients: npt.NDArray[Any]
) -> complex:
    n = np.flatnonzero(coefficients)
    if n.size == 0:
        return 0j

    terms = coefficients[n] * chi.values(n) * np.exp(-s * np.log(n.astype(np.float64)))
    return complex(math.fsum(terms.real.tolist()), math.fsum(terms.imag.tolist()))


def eval_mollifier(chi: DirichletCharacter, s: complex, params: ApproxParams, cutoff: int) -> complex:
    """
    ``Σ_{n<=cutoff} μ(n)a(n)χ(n)/n^s``; the omitted tail is bounded by
    ``mollifier_tail_bound``.
    """

    if cutoff < 1:
        raise DomainError(f"cutoff must be positive, got {cutoff}")

    return _coefficient_sum(chi, s, mollifier_coefficients(cutoff, params))


@dataclass(frozen=True)
class IdentityCheck:
    residual: float
    tail_bound: float

    @property
    def holds(self) -> bool:
        return self.residual <= self.tail_bound


def small_prime_identity(
    chi: DirichletCharacter,
    s: complex,
    params: ApproxParams,
    cutoff: int = SMALL_PRIMORIAL,
    power_limit: int = 10**6,
) -> IdentityCheck:
    """
    ``|M₀(s)·exp(𝒫₀(s)) - 1|`` where ``M₀`` is the mollifier on the 13-smooth n <= cutoff
    and ``𝒫₀`` the prime-power polynomial on ``p^k <= power_limit`` with p <= 13.

    Untruncated, ``M₀ = Π_{p<=13} (1 - χ(p)p^{-s})`` and ``exp(𝒫₀)`` is its inverse.
    ``tail_bound`` covers both truncations: ``expm1`` of the omitted powers plus the
    omitted square-free n times ``|exp(𝒫₀)|``.

    :param chi: character
    :param s: complex argument with positive real part
    :param params: parameter bundle, for the mollifier support
    :param cutoff: largest n of the mollifier sum
    :param power_limit: largest prime power of the polynomial
    :returns: the residual and its bound
    """

    sigma, t = _split(s)
    if not sigma > 0:
        raise DomainError(f"Re s must be positive, got {sigma}")
    if cutoff < 1 or power_limit < SMALL_PRIME_CUT:
        raise DomainError(f"Need cutoff >= 1 and power_limit >= {SMALL_PRIME_CUT}, got {cutoff}, {power_limit}")

    heights = np.empty(1, dtype=object)
    heights[0] = t

    divisors = sorted(
        math.prod(subset) for size in range(len(SMALL_PRIMES) + 1) for subset in combinations(SMALL_PRIMES, size)
    )
    kept = [d for d in divisors if d <= cutoff]
    mollifier_terms = [(d, float(mobius(d) * mollifier_coeff(d, params))) for d in kept]
    mollifier_tail = math.fsum(d**-sigma for d in divisors if d > cutoff)

    power_tail = 0.0
    powers: List[Tuple[int, float]] = []
    for p in SMALL_PRIMES:
        n, k = p, 1
        while n <= power_limit:
            powers.append((n, 1.0 / k))
            n *= p
            k += 1
        power_tail += p ** (-k * sigma) / (k * (1 - p**-sigma))
    powers.sort()

    m0 = complex(dirichlet_sum([chi], [0], sigma, heights, mollifier_terms)[0, 0])
    p0 = complex(dirichlet_sum([chi], [0], sigma, heights, powers)[0, 0])
    residual = abs(m0 * cmath.exp(p0) - 1)
    bound = math.expm1(power_tail) + mollifier_tail * math.exp(p0.real) + IDENTITY_SLACK

    logger.debug(f"Small prime identity at s={s}: residual {residual:.3g}, bound {bound:.3g}")
    return IdentityCheck(residual=residual, tail_bound=bound)


def eval_L_truncated(chi: DirichletCharacter, s: complex, cutoff: int) -> complex:
    """
    ``Σ_{n<=cutoff} χ(n)/n^s``.

    The critical line itself is admitted so log|L| can be sampled on Re s = 1/2.

    >>> from sclt.characters import character
    >>> eval_L_truncated(character(1, 0), 2, 1)
    (1+0j)
    """

    if s.real < 0.5:
        raise DomainError(f"Re s must be at least 1/2, got {s.real}")
    if cutoff < 1:
        raise DomainError(f"cutoff must be positive, got {cutoff}")
    if cutoff > FULL_L_BUDGET * 10:
        raise CapacityError(f"cutoff {cutoff} too large", requested=cutoff, capacity=FULL_L_BUDGET * 10)

    coefficients = np.ones(cutoff + 1, dtype=np.int64)
    coefficients[0] = 0
    return _coefficient_sum(chi, complex(s), coefficients)


def truncated_series(
    chi: DirichletCharacter,
    coefficients: npt.NDArray[Any],
    sigma: float,
    heights: npt.NDArray[np.float64],
    chunk: int = 16,
) -> npt.NDArray[np.complex128]:
    """
    ``Σ_n c_n χ(n) n^{-σ-it}`` for many moderate heights ``t`` at once, with
    double-precision phases.

    :param chi: character
    :param coefficients: c_n for 0 <= n <= cutoff (entry 0 ignored)
    :param sigma: real part
    :param heights: float heights, at most ``FULL_L_BUDGET`` in size
    :param chunk: heights per dense block
    :returns: complex array with one value per height
    """

    n = np.flatnonzero(coefficients)
    n = n[n > 0]
    log_n = np.log(n.astype(np.float64))
    weights = coefficients[n] * chi.values(n) * np.exp(-sigma * log_n)

    result = np.empty(len(heights), dtype=np.complex128)
    for start in range(0, len(heights), chunk):
        block = np.asarray(heights[start:start + chunk], dtype=np.float64)
        theta = np.outer(block, log_n)
        result[start:start + chunk] = (np.cos(theta) - 1j * np.sin(theta)) @ weights

    return result


def sample_heights(T: float, draws: npt.NDArray[np.uint64]) -> npt.NDArray[Any]:
    """
    Fixed-point heights ``T·(1 + m/2^53)`` for 53-bit integer draws ``m``.

    :param T: height scale
    :param draws: integers in [0, 2^53)
    :returns: object array of exact fixed-point heights in [T, 2T)
    """

    base = to_fixed(T)
    values = [base + ((base * int(m)) >> 53) for m in draws.tolist()]
    return fixed_heights_from_ints(values)


def fixed_heights_from_ints(values: Sequence[int]) -> npt.NDArray[Any]:
    array = np.empty(len(values), dtype=object)
    array[:] = list(values)
    return array
