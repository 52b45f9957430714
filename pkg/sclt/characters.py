"""
Dirichlet characters with exact rational exponents.

A character mod q is stored as the map ``r -> a/b`` meaning ``χ(r) = e^{2πi a/b}``
for every residue ``r`` coprime to ``q``. Products, conjugates and the principal
test are carried out on the exponents, so none of them depends on floating point.
"""

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np
import numpy.typing as npt
from typing_extensions import Any, Dict, List, Mapping, Sequence, Tuple, Union

from .arith import factorize
from .errors import CapacityError, DomainError

GROUP_MODULUS_CAP = 5000
CHARACTER_MODULUS_CAP = 10**6

Exponent = Fraction
CharacterAddress = Tuple[int, int]

_EXACT_VALUES: Mapping[Fraction, complex] = {
    Fraction(0): 1 + 0j,
    Fraction(1, 4): 1j,
    Fraction(1, 2): -1 + 0j,
    Fraction(3, 4): -1j,
}


def root_of_unity(exponent: Fraction) -> complex:
    """
    ``e^{2πi·exponent}``, exact for the fourth roots of unity.

    >>> root_of_unity(Fraction(1, 4))
    1j
    """

    exponent = exponent % 1
    if exponent in _EXACT_VALUES:
        return _EXACT_VALUES[exponent]

    return cmath.exp(2j * math.pi * float(exponent))


@dataclass(frozen=True)
class _Component:
    """One prime-power factor of (Z/q)^x with its discrete-log table."""

    modulus: int
    orders: Tuple[int, ...]
    logs: Mapping[int, Tuple[int, ...]]


def _primitive_root(p: int, k: int) -> int:
    phi = p - 1
    prime_divisors = [f for f, _ in factorize(phi)] if phi > 1 else []

    for g in range(2 if p > 2 else 1, p + 1):
        if all(pow(g, phi // f, p) != 1 for f in prime_divisors):
            break

    if k >= 2 and pow(g, p - 1, p * p) == 1:
        g += p

    return g


@lru_cache(maxsize=256)
def _component(p: int, k: int) -> _Component:
    m = p**k

    if p != 2:
        g = _primitive_root(p, k)
        order = m - m // p
        logs: Dict[int, Tuple[int, ...]] = {}
        value = 1
        for a in range(order):
            logs[value] = (a,)
            value = value * g % m
        return _Component(m, (order,), logs)

    if k == 1:
        return _Component(2, (), {1: ()})
    if k == 2:
        return _Component(4, (2,), {1: (0,), 3: (1,)})

    half = 2 ** (k - 2)
    logs = {}
    for a in range(2):
        for b in range(half):
            logs[(-1) ** a * pow(5, b, m) % m] = (a, b)
    return _Component(m, (2, half), logs)


def _components(q: int) -> List[_Component]:
    if q < 1:
        raise DomainError(f"Modulus must be positive, got {q}")

    return [_component(p, k) for p, k in factorize(q)]


@dataclass(frozen=True)
class DirichletCharacter:
    """
    A Dirichlet character mod ``modulus``.

    :param modulus: q
    :param exponents: ``(r, a/b)`` pairs for every residue ``r`` coprime to ``q``, sorted by ``r``
    :param index: position in the canonical ordering of ``character_group(q)``, or -1
    """

    modulus: int
    exponents: Tuple[Tuple[int, Exponent], ...]
    index: int = field(default=-1, compare=False)
    _lookup: Dict[int, Exponent] = field(init=False, repr=False, compare=False, hash=False)
    _table: npt.NDArray[np.complex128] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        lookup = dict(self.exponents)
        table = np.zeros(self.modulus, dtype=np.complex128)
        for residue, exponent in self.exponents:
            table[residue] = root_of_unity(exponent)
        table.setflags(write=False)

        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_table", table)

    @property
    def value_exponents(self) -> Mapping[int, Exponent]:
        return dict(self._lookup)

    @property
    def principal(self) -> bool:
        return all(exponent == 0 for _, exponent in self.exponents)

    @property
    def order(self) -> int:
        """Smallest ``d`` with ``χ^d`` principal."""

        return math.lcm(*(exponent.denominator for _, exponent in self.exponents))

    @property
    def address(self) -> CharacterAddress:
        return (self.modulus, self.index)

    def exponent(self, n: int) -> Union[Exponent, None]:
        """The exponent ``a/b`` of ``χ(n)``, or None when ``χ(n) = 0``."""

        return self._lookup.get(n % self.modulus)

    def __call__(self, n: int) -> complex:
        return evaluate(self, n)

    def values(self, n: Union[Sequence[int], npt.NDArray[Any]]) -> npt.NDArray[np.complex128]:
        """
        Vectorised evaluation.

        :param n: integers
        :returns: complex array of χ(n)
        """

        return self._table[np.mod(np.asarray(n, dtype=np.int64), self.modulus)]

    def conjugate(self) -> "DirichletCharacter":
        return DirichletCharacter(
            self.modulus, tuple((r, (-e) % 1) for r, e in self.exponents)
        )

    def __mul__(self, other: "DirichletCharacter") -> "DirichletCharacter":
        modulus = math.lcm(self.modulus, other.modulus)
        exponents = []
        for r in range(modulus):
            if math.gcd(r, modulus) != 1:
                continue
            a = self._lookup[r % self.modulus]
            b = other._lookup[r % other.modulus]
            exponents.append((r, (a + b) % 1))

        return DirichletCharacter(modulus, tuple(exponents))


def _coprime_residues(q: int) -> List[int]:
    return [r for r in range(q) if math.gcd(r, q) == 1]


def _build(q: int, components: List[_Component], digits: Tuple[int, ...], index: int) -> DirichletCharacter:
    orders = [order for comp in components for order in comp.orders]
    exponents = []

    for r in _coprime_residues(q):
        logs = [log for comp in components for log in comp.logs[r % comp.modulus]]
        total = sum((Fraction(d * log, order) for d, log, order in zip(digits, logs, orders)), Fraction(0))
        exponents.append((r, total % 1))

    return DirichletCharacter(q, tuple(exponents), index)


def _digits(components: List[_Component], index: int) -> Tuple[int, ...]:
    orders = [order for comp in components for order in comp.orders]
    digits = []
    for order in reversed(orders):
        index, digit = divmod(index, order)
        digits.append(digit)

    return tuple(reversed(digits))


def euler_phi(q: int) -> int:
    """
    Euler's totient.

    >>> euler_phi(12)
    4
    """

    result = q
    for p, _ in factorize(q):
        result -= result // p

    return result


def character_group(q: int) -> List[DirichletCharacter]:
    """
    All ``φ(q)`` characters mod ``q`` in canonical order.

    The order is lexicographic in the tuple of CRT exponents: prime-power factors in
    increasing prime order, the factor mod ``2^k`` (k >= 3) contributing the exponent
    of ``-1`` before the exponent of ``5``. Index 0 is the principal character.

    >>> [chi(3) for chi in character_group(4)]
    [(1+0j), (-1+0j)]

    :param q: positive modulus no larger than ``GROUP_MODULUS_CAP``
    :returns: list of characters
    """

    if q < 1:
        raise DomainError(f"Modulus must be positive, got {q}")
    if q > GROUP_MODULUS_CAP:
        raise CapacityError(
            f"Building all characters mod {q} exceeds the cap {GROUP_MODULUS_CAP}; use character(q, index)",
            requested=q,
            capacity=GROUP_MODULUS_CAP,
        )

    components = _components(q)
    orders = [order for comp in components for order in comp.orders]

    return [
        _build(q, components, digits, index)
        for index, digits in enumerate(product(*(range(order) for order in orders)))
    ]


def character(q: int, index: int) -> DirichletCharacter:
    """
    The character at position ``index`` of the canonical ordering mod ``q``.

    :param q: modulus
    :param index: 0 <= index < φ(q)
    :returns: the character
    """

    if q > CHARACTER_MODULUS_CAP:
        raise CapacityError(
            f"Modulus {q} exceeds the cap {CHARACTER_MODULUS_CAP}", requested=q, capacity=CHARACTER_MODULUS_CAP
        )

    components = _components(q)
    size = math.prod(order for comp in components for order in comp.orders)
    if not 0 <= index < size:
        raise DomainError(f"Character index {index} out of range for modulus {q} (group order {size})")

    return _build(q, components, _digits(components, index), index)


def principal_character(q: int = 1) -> DirichletCharacter:
    return character(q, 0)


def evaluate(chi: DirichletCharacter, n: int) -> complex:
    """
    ``χ(n)``: an exact fourth root of unity where possible, otherwise the nearest double.

    >>> evaluate(character(4, 1), 7)
    (-1+0j)
    """

    exponent = chi.exponent(n)
    if exponent is None:
        return 0j

    return root_of_unity(exponent)


def pair_delta(chi_i: DirichletCharacter, chi_j: DirichletCharacter) -> int:
    """
    1 when ``χ_i·conj(χ_j)`` is principal mod ``lcm(q_i, q_j)``, else 0.

    >>> pair_delta(character(3, 0), character(4, 0))
    1
    """

    modulus = math.lcm(chi_i.modulus, chi_j.modulus)
    for r in _coprime_residues(modulus):
        if chi_i.exponent(r) != chi_j.exponent(r):
            return 0

    return 1


def character_sum(chi: DirichletCharacter) -> int:
    """
    ``Σ_{r mod q} χ(r)`` computed exactly from the exponents.

    The values of a character are equidistributed over its image, the ``d``-th roots of
    unity, so the sum is ``φ(q)`` when ``d = 1`` and 0 otherwise. The equidistribution
    is checked rather than assumed.
    """

    counts: Dict[Fraction, int] = {}
    for _, exponent in chi.exponents:
        counts[exponent] = counts.get(exponent, 0) + 1

    d = chi.order
    expected = {Fraction(k, d) for k in range(d)}
    if set(counts) != expected or len(set(counts.values())) != 1:
        raise ValueError(f"Exponent table mod {chi.modulus} is not a character")

    return len(chi.exponents) if d == 1 else 0
