"""
Prime sieving and the elementary arithmetic functions.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from typing_extensions import Dict, List, Optional, Tuple

from .errors import CapacityError, DomainError

if TYPE_CHECKING:
    from .characters import DirichletCharacter

logger = logging.getLogger(__name__)

SIEVE_CAPACITY = 10**8
SEGMENT_SIZE = 2**20
FACTORIZATION_CAP = 10**14
MERTENS_CONSTANT = 0.2614972128476427837554268386


@dataclass(frozen=True, eq=False)
class PrimeTable:
    """
    All primes up to ``limit`` with their natural logarithms.

    Instances are immutable: the arrays are marked read-only so a table can be
    shared between threads.
    """

    limit: int
    primes: npt.NDArray[np.int64]
    log_p: npt.NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        self.primes.setflags(write=False)
        self.log_p.setflags(write=False)

    def __len__(self) -> int:
        return int(self.primes.size)

    def span(self, lo: float, hi: float) -> Tuple[int, int]:
        """
        Index bounds of the primes ``p`` with ``lo < p <= hi``.

        :param lo: exclusive lower bound
        :param hi: inclusive upper bound
        :returns: (start, stop) suitable for slicing ``primes``
        """

        if hi > self.limit:
            raise CapacityError(
                f"Prime range up to {hi} exceeds the table limit {self.limit}",
                requested=hi,
                capacity=self.limit,
            )

        start = int(np.searchsorted(self.primes, math.floor(lo), side="right"))
        stop = int(np.searchsorted(self.primes, math.floor(hi), side="right"))
        return start, max(start, stop)

    def between(self, lo: float, hi: float) -> npt.NDArray[np.int64]:
        """
        The primes ``p`` with ``lo < p <= hi``.

        >>> sieve_primes(30).between(13, 23).tolist()
        [17, 19, 23]
        """

        start, stop = self.span(lo, hi)
        return self.primes[start:stop]


def _small_sieve(limit: int) -> npt.NDArray[np.int64]:
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    flags[4::2] = False

    for val in range(3, math.isqrt(limit) + 1, 2):
        if flags[val]:
            flags[val * val::2 * val] = False

    return np.flatnonzero(flags).astype(np.int64)


def sieve_primes(limit: int, capacity: int = SIEVE_CAPACITY) -> PrimeTable:
    """
    Segmented sieve of Eratosthenes.

    >>> sieve_primes(10).primes.tolist()
    [2, 3, 5, 7]

    :param limit: largest integer to test
    :param capacity: refuse limits above this
    :returns: the table of all primes up to ``limit``
    """

    if limit < 2:
        raise DomainError(f"Cannot sieve below 2: limit={limit}")
    if limit > capacity:
        raise CapacityError(
            f"Sieve limit {limit} exceeds capacity {capacity}", requested=limit, capacity=capacity
        )

    root = max(math.isqrt(limit), 2)
    base = _small_sieve(root)
    chunks = [base[base <= limit]]

    lo = root + 1
    while lo <= limit:
        hi = min(lo + SEGMENT_SIZE, limit + 1)
        segment = np.ones(hi - lo, dtype=bool)

        for p in base.tolist():
            if p * p >= hi:
                break
            start = max(p * p, -(-lo // p) * p)
            segment[start - lo::p] = False

        chunks.append(np.flatnonzero(segment).astype(np.int64) + lo)
        lo = hi

    primes = np.concatenate(chunks)
    logger.debug(f"Sieved {primes.size} primes up to {limit}")
    return PrimeTable(limit=limit, primes=primes, log_p=np.log(primes.astype(np.float64)))


_shared_lock = threading.Lock()
_shared: Dict[str, PrimeTable] = {}


def prime_table(limit: int) -> PrimeTable:
    """
    A process-wide table covering at least ``limit``; grown by doubling when needed.

    :param limit: smallest acceptable table limit
    :returns: a shared, read-only table
    """

    limit = max(int(limit), 2)
    with _shared_lock:
        table = _shared.get("table")
        if table is None or table.limit < limit:
            target = max(limit, 2 * table.limit if table else 2**16)
            target = min(target, SIEVE_CAPACITY) if limit <= SIEVE_CAPACITY else limit
            logger.info(f"Growing shared prime table to {target}")
            table = sieve_primes(target)
            _shared["table"] = table

    return table


def factorize(n: int) -> List[Tuple[int, int]]:
    """
    Trial division by sieved primes.

    >>> factorize(578)
    [(2, 1), (17, 2)]

    :param n: positive integer no larger than ``FACTORIZATION_CAP``
    :returns: (prime, exponent) pairs in increasing prime order
    """

    if n < 1:
        raise DomainError(f"Cannot factorize {n}")
    if n > FACTORIZATION_CAP:
        raise CapacityError(
            f"{n} exceeds the factorization cap {FACTORIZATION_CAP}",
            requested=n,
            capacity=FACTORIZATION_CAP,
        )

    factors: List[Tuple[int, int]] = []
    root = math.isqrt(n)
    if root >= 2:
        table = prime_table(root)
        for p in table.between(1, root).tolist():
            if p * p > n:
                break
            if n % p == 0:
                exponent = 0
                while n % p == 0:
                    n //= p
                    exponent += 1
                factors.append((p, exponent))

    if n > 1:
        factors.append((n, 1))

    return factors


def mobius(n: int) -> int:
    """
    The Möbius function.

    >>> [mobius(n) for n in (1, 12, 30)]
    [1, 0, -1]
    """

    if n < 1:
        raise DomainError(f"mobius is defined for n >= 1, got {n}")

    factors = factorize(n)
    if any(exponent > 1 for _, exponent in factors):
        return 0

    return -1 if len(factors) % 2 else 1


def von_mangoldt(n: int) -> float:
    """
    The von Mangoldt function: ``log p`` on prime powers, else 0.

    :param n: positive integer
    :returns: Λ(n)
    """

    if n < 1:
        raise DomainError(f"von_mangoldt is defined for n >= 1, got {n}")

    factors = factorize(n)
    if len(factors) != 1:
        return 0.0

    return math.log(factors[0][0])


def big_omega(n: int) -> int:
    """Number of prime factors of ``n`` counted with multiplicity."""

    return sum(exponent for _, exponent in factorize(n))


def count_prime_factors_in_range(n: int, lo: float, hi: float) -> int:
    """
    Count the prime divisors ``p`` of ``n`` with ``lo < p <= hi``, with multiplicity.

    >>> count_prime_factors_in_range(2 * 17 * 17, 13, 100)
    2

    :param n: positive integer
    :param lo: exclusive lower bound, non-negative
    :param hi: inclusive upper bound
    :returns: the count
    """

    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if lo < 0 or lo > hi:
        raise DomainError(f"Invalid range ({lo}, {hi}]")

    return sum(exponent for p, exponent in factorize(n) if lo < p <= hi)


def mobius_upto(limit: int) -> npt.NDArray[np.int64]:
    """
    μ(n) for ``0 <= n <= limit`` (entry 0 is 0).

    >>> mobius_upto(10).tolist()
    [0, 1, -1, -1, 0, -1, 1, -1, 0, 0, 1]
    """

    if limit < 1:
        raise DomainError(f"limit must be positive, got {limit}")

    mu = np.ones(limit + 1, dtype=np.int64)
    mu[0] = 0
    if limit >= 2:
        for p in prime_table(limit).between(1, limit).tolist():
            mu[::p] *= -1
            if p * p <= limit:
                mu[::p * p] = 0

    return mu


def prime_factor_counts(limit: int, lo: float, hi: Optional[float] = None) -> npt.NDArray[np.int64]:
    """
    For every ``n <= limit`` the number of prime factors ``p`` of ``n`` with
    ``lo < p <= hi`` counted with multiplicity.

    :param limit: table size
    :param lo: exclusive lower bound
    :param hi: inclusive upper bound, unbounded when omitted
    :returns: integer array of length ``limit + 1``
    """

    counts = np.zeros(limit + 1, dtype=np.int64)
    upper = limit if hi is None else min(math.floor(hi), limit)
    if limit < 2 or upper <= lo:
        return counts

    for p in prime_table(limit).between(lo, upper).tolist():
        power = p
        while power <= limit:
            counts[::power] += 1
            power *= p

    return counts


def prime_sum(
    chi: "DirichletCharacter",
    lam: float,
    sigma: float,
    z: float,
    table: Optional[PrimeTable] = None,
    lo: float = 0,
) -> complex:
    """
    The twisted prime sum ``Σ_{p<=z} χ(p) p^{-iλ} / p^σ``.

    Real and imaginary parts are accumulated with ``math.fsum`` so the result does
    not depend on summation order.

    :param chi: Dirichlet character
    :param lam: twist λ
    :param sigma: positive real exponent
    :param z: upper limit of the primes
    :param table: primes to use, the shared table by default
    :param lo: only primes above ``lo`` contribute
    :returns: the complex sum
    """

    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if z < 2 or z <= lo:
        return 0j

    table = table or prime_table(math.floor(z))
    start, stop = table.span(lo, z)
    primes = table.primes[start:stop]
    log_p = table.log_p[start:stop]

    terms = chi.values(primes) * np.exp(-1j * lam * log_p - sigma * log_p)
    return complex(math.fsum(terms.real.tolist()), math.fsum(terms.imag.tolist()))
