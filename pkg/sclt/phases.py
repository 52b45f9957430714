"""
Fixed-point reduction of ``t·log n`` modulo 2π for very large heights.

Heights are carried as Python integers scaled by ``2**HEIGHT_FRAC_BITS``; logarithms
as integers scaled by ``2**LOG_FRAC_BITS``. Their product is reduced modulo a
fixed-point 2π, so the only rounding before the final conversion comes from the
stored constants.
"""

import math
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
import numpy.typing as npt
from typing_extensions import Any, Iterable, SupportsFloat, TypeAlias, Union

from .errors import DomainError, PrecisionError

HEIGHT_FRAC_BITS = 96
LOG_FRAC_BITS = 320
PHASE_ERROR_BITS = 60

# heights above 2**MAX_HEIGHT_BITS would let the log rounding exceed 2**-PHASE_ERROR_BITS
MAX_HEIGHT_BITS = LOG_FRAC_BITS - PHASE_ERROR_BITS - 1

_SCALE_BITS = HEIGHT_FRAC_BITS + LOG_FRAC_BITS
_FLOAT_SHIFT = _SCALE_BITS - 56

HeightLike: TypeAlias = Union[int, float, str, Fraction, "mpmath.mpf", SupportsFloat]
LogLike: TypeAlias = Union[int, float, "mpmath.mpf"]


def _two_pi_fixed() -> int:
    with mpmath.workprec(_SCALE_BITS + 64):
        return int(mpmath.nint(2 * mpmath.pi * mpmath.mpf(2) ** _SCALE_BITS))


TWO_PI_FIXED = _two_pi_fixed()


def to_fixed(t: HeightLike) -> int:
    """
    Convert a height to fixed point, exactly for integers, dyadic floats, decimal
    strings and fractions with a power-of-two denominator; otherwise to the nearest
    representable value.

    >>> to_fixed(1) == 2**HEIGHT_FRAC_BITS
    True

    :param t: height
    :returns: ``round(t * 2**HEIGHT_FRAC_BITS)``
    """

    if isinstance(t, bool):
        raise TypeError("Heights must be numbers, not bool")

    if isinstance(t, int):
        fixed = t << HEIGHT_FRAC_BITS
    else:
        try:
            if isinstance(t, mpmath.mpf):
                if not mpmath.isfinite(t):
                    raise ValueError(t)
                # man_exp carries no sign
                man, exp = t.man_exp
                value = Fraction(int(man)) * Fraction(2) ** int(exp)
                value = -value if t < 0 else value
            elif isinstance(t, (str, Fraction)):
                value = Fraction(t)
            else:
                value = Fraction(float(t))
        except (ValueError, TypeError, OverflowError):
            raise TypeError(f"Cannot interpret {t!r} as a finite height") from None
        fixed = round(value * 2**HEIGHT_FRAC_BITS)

    if abs(fixed).bit_length() - HEIGHT_FRAC_BITS > MAX_HEIGHT_BITS:
        raise PrecisionError(
            f"Height {t} exceeds the phase-reduction budget of 2**{MAX_HEIGHT_BITS}"
        )

    return fixed


@lru_cache(maxsize=1 << 17)
def fixed_log(n: int) -> int:
    """``round(log(n) * 2**LOG_FRAC_BITS)`` for an integer ``n >= 1``."""

    if n < 1:
        raise DomainError(f"log of {n} is not defined")

    with mpmath.workprec(LOG_FRAC_BITS + 64):
        return int(mpmath.nint(mpmath.log(n) * mpmath.mpf(2) ** LOG_FRAC_BITS))


def _log_fixed(logp: LogLike) -> int:
    if isinstance(logp, int):
        return fixed_log(logp)

    with mpmath.workprec(LOG_FRAC_BITS + 64):
        return int(mpmath.nint(mpmath.mpf(logp) * mpmath.mpf(2) ** LOG_FRAC_BITS))


def reduce_phase(t: HeightLike, logp: LogLike) -> "mpmath.mpf":
    """
    ``t·logp mod 2π`` with absolute error below ``2**-60``.

    An integer ``logp`` is read as ``log(logp)`` evaluated internally at full precision;
    any other value is taken as the logarithm itself.

    >>> float(reduce_phase(0, 2))
    0.0

    :param t: height
    :param logp: integer whose log is wanted, or the log value
    :returns: the reduced phase as a 128-bit mpf in [0, 2π)
    """

    residue = (to_fixed(t) * _log_fixed(logp)) % TWO_PI_FIXED
    with mpmath.workprec(128):
        return mpmath.mpf(residue) / mpmath.mpf(2) ** _SCALE_BITS


def fixed_heights(heights: Iterable[HeightLike]) -> npt.NDArray[Any]:
    """Object array of fixed-point heights."""

    values = [to_fixed(t) for t in heights]
    array = np.empty(len(values), dtype=object)
    array[:] = values
    return array


def phases(heights: npt.NDArray[Any], n: int) -> npt.NDArray[np.float64]:
    """
    Vectorised ``t·log n mod 2π`` over an object array of fixed-point heights,
    rounded once to double precision.

    :param heights: output of ``fixed_heights``
    :param n: positive integer
    :returns: float array in [0, 2π]
    """

    residue = (heights * fixed_log(n)) % TWO_PI_FIXED
    return (residue >> _FLOAT_SHIFT).astype(np.float64) * math.ldexp(1.0, -56)


def phase(height: int, n: int) -> float:
    """Scalar counterpart of ``phases`` for a single fixed-point height."""

    return math.ldexp(float(((height * fixed_log(n)) % TWO_PI_FIXED) >> _FLOAT_SHIFT), -56)


def height_to_float(height: int) -> float:
    return float(Fraction(height, 2**HEIGHT_FRAC_BITS))
