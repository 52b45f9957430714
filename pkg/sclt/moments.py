"""
Brute-force checks of the moment identities and auxiliary inequalities: moments of
the prime polynomial by quadrature and by exact enumeration, Chebyshev and
exponential tail bounds, the partial exponential sum, Stirling's formula and the
mean square of the mollified L-series.
"""

import logging
import math
from dataclasses import dataclass

import mpmath
import numpy as np
import numpy.typing as npt
from typing_extensions import Iterator, List, Optional, Sequence, Tuple

from .arith import prime_table
from .characters import DirichletCharacter
from .covariance import ShiftConfig
from .dirichlet_series import ApproxParams, mollifier_coefficients, mollifier_tail_bound, truncated_series
from .errors import CapacityError, DomainError, PreconditionError
from .phases import phase, to_fixed

logger = logging.getLogger(__name__)

MIN_NODES = 1000
ENUMERATION_BUDGET = 10**8
OFFDIAGONAL_TERMS = 5000
QUADRATURE_CHUNK = 1 << 15
DESK_HEIGHT = 10**5
DEFAULT_MEAN_SQUARE_NODES = 4096


@dataclass(frozen=True)
class MomentReport:
    """
    ``(1/T)∫_T^{2T} 𝒫^k conj(𝒫)^l dt`` by quadrature against its prediction.

    ``formula_value`` is the exact diagonal sum when ``k = l`` and 0 otherwise;
    ``error_budget`` adds the Richardson estimate of the quadrature error, a rigorous
    bound on the off-diagonal terms (``inf`` when there are too many to bound) and a
    roundoff allowance. ``leading_term`` is the leading term ``k!·S^k`` with
    ``S = Σ_{p<=Y} |ψ(p)|²/p^{2σ₀}``.
    """

    k: int
    l: int  # noqa: E741
    quad_value: complex
    formula_value: float
    error_budget: float
    nodes: int
    T: float
    Y: float
    N: int
    leading_term: float
    offdiagonal_bound: float
    richardson: float

    def __post_init__(self) -> None:
        if self.nodes < MIN_NODES:
            raise ValueError(f"A moment report needs at least {MIN_NODES} nodes, got {self.nodes}")

    @property
    def consistent(self) -> bool:
        return abs(self.quad_value - self.formula_value) <= self.error_budget

    @property
    def offdiagonal_shape(self) -> float:
        """``Y^{k+l}/T``."""

        return float(self.Y ** (self.k + self.l) / self.T)


def _weights(
    a: Sequence[float], shifts: ShiftConfig, chars: Sequence[DirichletCharacter], params: ApproxParams
) -> Tuple[npt.NDArray[np.int64], npt.NDArray[np.complex128]]:
    """Primes up to Y and ``ψ(p) p^{-σ₀}``."""

    if not len(a) == shifts.N == len(chars):
        raise ValueError(f"Dimension mismatch: {len(a)} coefficients, {shifts.N} shifts, {len(chars)} characters")

    primes = prime_table(math.floor(params.Y)).between(1, params.Y)
    psi = np.zeros(primes.size, dtype=np.complex128)
    for a_j, alpha, chi in zip(a, shifts.alphas, chars):
        fixed = to_fixed(alpha)
        turns = np.array([phase(fixed, p) for p in primes.tolist()])
        psi += a_j * chi.values(primes) * np.exp(-1j * turns)

    return primes, psi * primes.astype(np.float64) ** -params.sigma0


def _multiset_chunks(size: int, k: int) -> Iterator[npt.NDArray[np.int64]]:
    """Every non-decreasing ``k``-tuple of indices below ``size``, in lexicographic order."""

    if k == 0:
        yield np.zeros((1, 0), dtype=np.int64)
        return
    if k == 1:
        yield np.arange(size, dtype=np.int64)[:, None]
        return

    for first in range(size):
        for rest in _multiset_chunks(size - first, k - 1):
            yield np.concatenate([np.full((rest.shape[0], 1), first, dtype=np.int64), rest + first], axis=1)


def _multinomials(rows: npt.NDArray[np.int64]) -> npt.NDArray[np.float64]:
    """``k!/Π h_i!`` for sorted rows, ``h_i`` the multiplicities."""

    k = rows.shape[1]
    run = np.ones(rows.shape[0])
    denominator = np.ones(rows.shape[0])
    for t in range(1, k):
        run = np.where(rows[:, t] == rows[:, t - 1], run + 1, 1.0)
        denominator *= run

    return math.factorial(k) / denominator


def _products(values: npt.NDArray[np.float64], rows: npt.NDArray[np.int64]) -> npt.NDArray[np.float64]:
    result = np.ones(rows.shape[0])
    for t in range(rows.shape[1]):
        result = result * values[rows[:, t]]
    return result


def _elementary_symmetric(values: npt.NDArray[np.float64], k: int) -> float:
    e = [1.0] + [0.0] * k
    for x in values.tolist():
        for j in range(k, 0, -1):
            e[j] += e[j - 1] * x
    return e[k]


@dataclass(frozen=True)
class DiagonalMoment:
    """The diagonal sum split by square-freeness, with the product-formula check."""

    k: int
    total: float
    square_free: float
    non_square_free: float
    product_formula: float
    terms: int


def exact_diagonal_moment(
    a: Sequence[float],
    shifts: ShiftConfig,
    chars: Sequence[DirichletCharacter],
    params: ApproxParams,
    k: int,
) -> DiagonalMoment:
    """
    ``Σ_n b_k(n)² |Ψ_k(n)|² / n^{2σ₀}`` over all products ``n`` of ``k`` primes up to Y.

    ``b_k(n)`` is the multinomial coefficient of the prime multiset of ``n``. The
    square-free part must equal ``(k!)²·e_k(w)`` with ``w_p = |ψ(p)|²/p^{2σ₀}`` and
    ``e_k`` the elementary symmetric polynomial.

    :param a: coefficients, one per coordinate
    :param shifts: shift configuration
    :param chars: characters
    :param params: parameter bundle (Y and σ₀)
    :param k: 0 <= k <= 3
    :returns: the diagonal sum and its parts
    """

    if not 0 <= k <= 3:
        raise DomainError(f"k must lie in [0, 3], got {k}")

    _, weights = _weights(a, shifts, chars, params)
    if weights.size**k > ENUMERATION_BUDGET:
        raise CapacityError(
            f"{weights.size}^{k} prime tuples exceed the enumeration budget",
            requested=weights.size**k,
            capacity=ENUMERATION_BUDGET,
        )

    w = np.abs(weights) ** 2
    square_free: List[float] = []
    other: List[float] = []
    terms = 0
    for rows in _multiset_chunks(w.size, k):
        b = _multinomials(rows)
        values = b * b * _products(w, rows)
        distinct = b == math.factorial(k)
        square_free.append(float(np.sum(values[distinct])))
        other.append(float(np.sum(values[~distinct])))
        terms += rows.shape[0]

    sf, nsf = math.fsum(square_free), math.fsum(other)
    product = math.factorial(k) ** 2 * _elementary_symmetric(w, k)
    if abs(sf - product) > 1e-10 * max(abs(product), 1e-300):
        raise ArithmeticError(f"Square-free part {sf} disagrees with the product formula {product}")

    return DiagonalMoment(
        k=k, total=sf + nsf, square_free=sf, non_square_free=nsf, product_formula=product, terms=terms
    )


def _offdiagonal_bound(
    weights: npt.NDArray[np.complex128], log_p: npt.NDArray[np.float64], k: int, l: int, T: float  # noqa: E741
) -> float:
    """``Σ_{n≠m} |c_n||d_m| min(1, 2/(T|log(n/m)|))``, or ``inf`` beyond the term budget."""

    magnitude = np.abs(weights)

    def side(order: int) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        rows = np.concatenate(list(_multiset_chunks(magnitude.size, order)))
        return _multinomials(rows) * _products(magnitude, rows), np.sum(log_p[rows], axis=1)

    count_k = math.comb(magnitude.size + k - 1, k)
    count_l = math.comb(magnitude.size + l - 1, l)
    if max(count_k, count_l) > OFFDIAGONAL_TERMS:
        return math.inf

    c, log_n = side(k)
    d, log_m = side(l)
    total = []
    for start in range(0, c.size, 256):
        gap = np.abs(log_n[start:start + 256, None] - log_m[None, :])
        factor = np.minimum(1.0, 2.0 / (T * np.maximum(gap, 1e-300)))
        if k == l:
            # the diagonal n = m is the formula itself
            index = np.arange(start, min(start + 256, c.size))
            factor[index - start, index] = 0.0
        total.append(float(np.sum(c[start:start + 256, None] * d[None, :] * factor)))

    return math.fsum(total)


def required_nodes(T: float, Y: float, k: int, l: int) -> int:  # noqa: E741
    """Nodes needed for spacing ``π / (2·max(k+l, 2)·log Y)`` on [T, 2T]."""

    spacing = math.pi / (2 * max(k + l, 2) * math.log(Y))
    return math.ceil(T / spacing) + 1


def quad_moment(
    a: Sequence[float],
    shifts: ShiftConfig,
    chars: Sequence[DirichletCharacter],
    params: ApproxParams,
    k: int,
    l: int,  # noqa: E741
    nodes: int,
) -> MomentReport:
    """
    ``(1/T)∫_T^{2T} 𝒫(σ₀+it)^k conj(𝒫(σ₀+it))^l dt`` for
    ``𝒫(s) = Σ_{p<=Y} ψ(p)/p^s`` and ``ψ(p) = Σ_j a_j χ_j(p) p^{-iα_j}``, by the composite
    trapezoid rule.

    The phase ``T·log p`` is reduced exactly once per prime; the offset ``t - T`` is
    applied in double precision. The rule on every other node gives a Richardson
    estimate of the quadrature error.

    :param a: coefficients, one per coordinate
    :param shifts: shift configuration
    :param chars: characters
    :param params: parameter bundle (T, Y, σ₀)
    :param k: power of 𝒫
    :param l: power of its conjugate
    :param nodes: quadrature nodes, at least ``MIN_NODES``; made odd
    :returns: the report
    """

    if k < 0 or l < 0:
        raise DomainError(f"Moment orders must be non-negative, got ({k}, {l})")
    if nodes < MIN_NODES:
        raise DomainError(f"Need at least {MIN_NODES} nodes, got {nodes}")

    T, Y = params.T, params.Y
    primes, weights = _weights(a, shifts, chars, params)
    log_p = np.log(primes.astype(np.float64))
    leading = math.factorial(k) * float(np.sum(np.abs(weights) ** 2)) ** k if k == l else 0.0

    if k == l == 0:
        return MomentReport(k, l, 1 + 0j, 1.0, 0.0, nodes, T, Y, shifts.N, 1.0, 0.0, 0.0)

    needed = required_nodes(T, Y, k, l)
    if nodes < needed:
        raise PreconditionError(
            f"{nodes} nodes under-resolve frequencies up to {(k + l) * math.log(Y):.3g}; need {needed}",
            required_nodes=needed,
        )

    nodes += 1 - nodes % 2
    h = T / (nodes - 1)
    fixed_T = to_fixed(T)
    base = weights * np.exp(-1j * np.array([phase(fixed_T, p) for p in primes.tolist()]))

    fine: List[complex] = []
    coarse: List[complex] = []
    largest = 0.0
    for start in range(0, nodes, QUADRATURE_CHUNK):
        index = np.arange(start, min(start + QUADRATURE_CHUNK, nodes))
        offsets = index * h
        values = np.exp(-1j * np.outer(offsets, log_p)) @ base
        integrand = values**k * np.conj(values) ** l

        weight = np.where((index == 0) | (index == nodes - 1), 0.5, 1.0)
        fine.append(complex(np.sum(weight * integrand)))
        even = index % 2 == 0
        coarse.append(complex(np.sum(weight[even] * integrand[even])))
        largest = max(largest, float(np.max(np.abs(integrand))))

    fine_value = complex(math.fsum(z.real for z in fine), math.fsum(z.imag for z in fine)) * h / T
    coarse_value = complex(math.fsum(z.real for z in coarse), math.fsum(z.imag for z in coarse)) * 2 * h / T
    richardson = abs(fine_value - coarse_value) / 3
    quad = fine_value + (fine_value - coarse_value) / 3

    diagonal: Optional[float] = None
    if k == l:
        try:
            diagonal = exact_diagonal_moment(a, shifts, chars, params, k).total if k <= 3 else None
        except CapacityError:
            diagonal = None
    formula = (leading if diagonal is None else diagonal) if k == l else 0.0

    offdiagonal = _offdiagonal_bound(weights, log_p, k, l, T)
    roundoff = nodes * np.finfo(np.float64).eps * largest
    if k == l and diagonal is None:
        offdiagonal = math.inf
    budget = richardson + offdiagonal + roundoff

    logger.debug(f"quad_moment k={k} l={l}: {nodes} nodes, value {quad:.6g}, budget {budget:.3g}")
    return MomentReport(
        k=k, l=l, quad_value=quad, formula_value=formula, error_budget=budget, nodes=nodes, T=T, Y=Y,
        N=shifts.N, leading_term=leading, offdiagonal_bound=offdiagonal, richardson=richardson,
    )


def chebyshev_tail(moment_2k: float, threshold: float, k: int) -> float:
    """
    ``E|X|^{2k} / r^{2k}``.

    >>> round(chebyshev_tail(1.0, 3.0, 1), 6)
    0.111111
    """

    if moment_2k < 0:
        raise DomainError(f"Moments of |X| are non-negative, got {moment_2k}")
    if not threshold > 0:
        raise DomainError(f"threshold must be positive, got {threshold}")
    if k < 0:
        raise DomainError(f"k must be non-negative, got {k}")

    return moment_2k / threshold ** (2 * k)


@dataclass(frozen=True)
class Envelope:
    """A Chebyshev bound and the decay it is meant to reach, both as natural logs."""

    k: int
    log_bound: float
    log_target: float


def _log_gaussian_moment(k: int, variance: float) -> float:
    """``log((2k)!/(k! 2^k) variance^k)``."""

    return math.lgamma(2 * k + 1) - math.lgamma(k + 1) - k * math.log(2) + k * math.log(variance)


def chebyshev_envelope(T: float) -> Envelope:
    """
    The P₁ tail bound at threshold ``log log T`` with ``k = ⌊log log T⌋`` and moment
    ``(2k)!/(k! 2^k)(½ log log T)^k``, next to the target ``-log log T``.
    """

    if not T > math.e**math.e:
        raise DomainError(f"Need log log T > 1, got T={T}")

    loglog_T = math.log(math.log(T))
    k = math.floor(loglog_T)
    log_bound = _log_gaussian_moment(k, 0.5 * loglog_T) - 2 * k * math.log(loglog_T)
    return Envelope(k=k, log_bound=log_bound, log_target=-math.log(math.log(T)))


def p2_tail_shape(T: float, B: float) -> Envelope:
    """
    The P₂ tail bound at threshold ``B log log log T`` with ``k = ⌊B log log log T⌋``
    and moment ``(2k)!/(k! 2^k)(½ log log log T)^k``, next to ``-B log log log T``'s
    target ``(log log T)^{-B}``.
    """

    if not T > math.e**math.e or not B > 0:
        raise DomainError(f"Need log log log T > 0 and B > 0, got T={T}, B={B}")

    loglog_T = math.log(math.log(T))
    lll = math.log(loglog_T)
    threshold = B * lll
    if threshold < 2:
        raise DomainError(f"B log log log T = {threshold:.3g} is below 2")

    k = math.floor(threshold)
    log_bound = _log_gaussian_moment(k, 0.5 * lll) - 2 * k * math.log(threshold)
    return Envelope(k=k, log_bound=log_bound, log_target=-B * math.log(loglog_T))


def p1_exp_tail(r: float, T: float) -> float:
    """
    ``sqrt(1/π)·(sqrt(log log T)/r)·exp(-r²/log log T) + 1/T``.

    :param r: positive threshold
    :param T: height scale
    :returns: the bound on ``P(|P₁| > r)``
    """

    if not r > 0:
        raise DomainError(f"r must be positive, got {r}")
    if not T > math.e:
        raise DomainError(f"Need log log T > 0, got T={T}")

    loglog_T = math.log(math.log(T))
    return math.sqrt(1 / math.pi) * math.sqrt(loglog_T) / r * math.exp(-r * r / loglog_T) + 1 / T


@dataclass(frozen=True)
class PartialSumCheck:
    lhs: float
    rhs: float
    ok: bool
    hypothesis: bool


def exp_partial_bound_check(z: complex, n: int) -> PartialSumCheck:
    """
    ``|e^z - Σ_{j<=n} z^j/j!| < e^{-n}``, evaluated with enough bits to absorb the
    cancellation. ``hypothesis`` records whether ``n >= 7.5(|z| + 1)``, under which
    the inequality must hold.

    >>> exp_partial_bound_check(1, 15).ok
    True
    """

    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")

    z = complex(z)
    bits = 2 * n + 3 * math.ceil(abs(z)) + 64
    with mpmath.workprec(bits):
        w = mpmath.mpc(z.real, z.imag)
        term = mpmath.mpc(1)
        partial = mpmath.mpc(1)
        for j in range(1, n + 1):
            term = term * w / j
            partial += term
        lhs = mpmath.fabs(mpmath.exp(w) - partial)
        rhs = mpmath.exp(-n)
        ok = bool(lhs < rhs)

    hypothesis = n >= 7.5 * (abs(z) + 1)
    if hypothesis and not ok:
        logger.error(f"Partial exponential bound fails at z={z}, n={n}")

    return PartialSumCheck(lhs=float(lhs), rhs=float(rhs), ok=ok, hypothesis=hypothesis)


@dataclass(frozen=True)
class StirlingReport:
    """``n!`` against ``sqrt(2πn)(n/e)^n``, carried in logs so large ``n`` stays finite."""

    n: int
    log_value: float
    log_main: float
    rel_err: float


def stirling_bounds(n: int) -> StirlingReport:
    """
    ``rel_err = |main/n! - 1|``, checked against ``1/(4n)`` for ``n >= 2``.

    >>> round(stirling_bounds(1).rel_err, 4)
    0.0779
    """

    if n < 1:
        raise DomainError(f"n must be positive, got {n}")

    with mpmath.workprec(128):
        log_value = mpmath.loggamma(n + 1)
        log_main = mpmath.log(2 * mpmath.pi * n) / 2 + n * (mpmath.log(n) - 1)
        rel_err = float(abs(mpmath.expm1(log_main - log_value)))

    if n >= 2 and rel_err > 1 / (4 * n):
        raise ArithmeticError(f"Stirling error {rel_err} exceeds 1/(4n) at n={n}")

    return StirlingReport(n=n, log_value=float(log_value), log_main=float(log_main), rel_err=rel_err)


@dataclass(frozen=True)
class MeanSquare:
    """
    ``(1/T)∫_T^{2T} |1 - L·M|² dt`` with truncated L and M. ``resolved`` is False when
    the node spacing cannot follow the fastest oscillation; the value is then a
    sample mean at equally spaced heights rather than a converged integral.
    """

    value: float
    nodes: int
    L_cutoff: int
    M_cutoff: int
    tail_bound: float
    resolved: bool


def mollifier_mean_square(
    chi: DirichletCharacter,
    params: ApproxParams,
    cutoff: int,
    nodes: int = DEFAULT_MEAN_SQUARE_NODES,
    L_cutoff: Optional[int] = None,
) -> MeanSquare:
    """
    Mean square of ``1 - L(σ₀+it)·M(σ₀+it)`` over [T, 2T] by the trapezoid rule.

    :param chi: character
    :param params: parameter bundle, T at most ``DESK_HEIGHT``
    :param cutoff: mollifier length, at most ``DESK_HEIGHT``
    :param nodes: quadrature nodes
    :param L_cutoff: length of the L-series, ``min(⌊T⌋, DESK_HEIGHT)`` by default
    :returns: the mean square with its truncation data
    """

    if params.T > DESK_HEIGHT:
        raise CapacityError(f"T={params.T:g} is beyond desk scale", requested=params.T, capacity=DESK_HEIGHT)
    if not 1 <= cutoff <= DESK_HEIGHT:
        raise CapacityError(
            f"Mollifier cutoff {cutoff} outside [1, {DESK_HEIGHT}]", requested=cutoff, capacity=DESK_HEIGHT
        )
    if nodes < 2:
        raise DomainError(f"Need at least 2 nodes, got {nodes}")

    length = min(math.floor(params.T), DESK_HEIGHT) if L_cutoff is None else L_cutoff
    ones = np.ones(length + 1, dtype=np.int64)
    ones[0] = 0
    mollifier = mollifier_coefficients(cutoff, params)

    heights = np.linspace(params.T, 2 * params.T, nodes)
    L_values = truncated_series(chi, ones, params.sigma0, heights)
    M_values = truncated_series(chi, mollifier, params.sigma0, heights)
    integrand = np.abs(1 - L_values * M_values) ** 2

    weights = np.full(nodes, 1.0)
    weights[[0, -1]] = 0.5
    value = math.fsum((weights * integrand).tolist()) / (nodes - 1)

    spacing = params.T / (nodes - 1)
    resolved = spacing <= math.pi / (2 * math.log(max(length * cutoff, 2)))
    if not resolved:
        logger.info(f"Mean square at T={params.T:g} uses {nodes} nodes, below the oscillation scale")

    return MeanSquare(
        value=max(value, 0.0), nodes=nodes, L_cutoff=length, M_cutoff=cutoff,
        tail_bound=mollifier_tail_bound(params, cutoff), resolved=resolved,
    )
