"""
Rate shapes: the size each distance is expected to have at height T, up to the
unknown implied constants. Rows of the distance tables carry them so measured values
can be compared with the predicted decay.
"""

import math
from dataclasses import dataclass

from typing_extensions import Callable, Dict, Optional, Tuple, TypeAlias

from .dirichlet_series import DEFAULT_B, DEFAULT_K, DEFAULT_K_PRIME, ApproxParams
from .distances import DEFAULT_EPS1, DEFAULT_EPS2

DEFAULT_SHIFT_EPS = 0.5
DEFAULT_EPS3 = 0.05
DEFAULT_EPS4 = 0.05
MOLLIFIER_SURROGATE_EXPONENT = 100


@dataclass(frozen=True)
class ShapeContext:
    """Everything a shape depends on besides the pair."""

    T: float
    L: float
    M: float
    N: int
    K: float = DEFAULT_K
    K_prime: float = DEFAULT_K_PRIME
    B: float = DEFAULT_B
    eps1: float = DEFAULT_EPS1
    eps2: float = DEFAULT_EPS2
    eps: float = DEFAULT_SHIFT_EPS
    eps3: float = DEFAULT_EPS3
    eps4: float = DEFAULT_EPS4

    @classmethod
    def from_params(
        cls, params: ApproxParams, L: float, M: float, N: int, eps1: float = DEFAULT_EPS1, eps2: float = DEFAULT_EPS2
    ) -> "ShapeContext":
        return cls(T=params.T, L=L, M=M, N=N, K=params.K, K_prime=params.K_prime, B=params.B, eps1=eps1, eps2=eps2)

    @property
    def loglog(self) -> Optional[float]:
        return math.log(math.log(self.T)) if self.T > math.e else None

    @property
    def logloglog(self) -> Optional[float]:
        ll = self.loglog
        return math.log(ll) if ll is not None and ll > 1 else None


Shape: TypeAlias = Callable[[ShapeContext, float, float], float]


def _x_pair(c: ShapeContext, ll: float, lll: float) -> float:
    return c.L * c.N * lll**2 / math.sqrt(ll)


def _mollifier_pair(c: ShapeContext, ll: float, lll: float) -> float:
    return c.L * c.N / math.sqrt(ll) + c.M * c.N * ll ** (-c.K / c.K_prime)


def _surrogate_pair(c: ShapeContext, ll: float, lll: float) -> float:
    return c.N * (c.L + c.M) * ll**-MOLLIFIER_SURROGATE_EXPONENT


def _q_pair(c: ShapeContext, ll: float, lll: float) -> float:
    return c.N * (c.L + c.M) * ll**-c.B


def _r_pair(c: ShapeContext, ll: float, lll: float) -> float:
    return c.L * c.N / math.sqrt(ll)


def _normalizer_pair(c: ShapeContext, ll: float, lll: float) -> float:
    return c.L * math.sqrt(c.N) * math.sqrt(1 + lll) / math.sqrt(ll)


def _gaussian_pair(c: ShapeContext, ll: float, lll: float) -> float:
    power = lll ** (c.eps1 + c.eps2)
    return c.L / lll**c.eps1 + c.M * lll ** (c.N * (c.eps1 + c.eps2)) * math.exp(-0.5 * power)


def _covariance_pair(c: ShapeContext, ll: float, lll: float) -> float:
    return c.M * ll ** (-1 + c.eps + c.eps3)


PAIR_SHAPES: Dict[Tuple[str, str], Shape] = {
    ("X_T", "X0_T"): _x_pair,
    ("X0_T", "M_T"): _mollifier_pair,
    ("X0_T", "M_T_surrogate"): _mollifier_pair,
    ("M_T", "M_T_surrogate"): _surrogate_pair,
    ("M_T", "Q_T"): _q_pair,
    ("M_T_surrogate", "Q_T"): _q_pair,
    ("Q_T", "R_T"): _r_pair,
    ("R_T", "R1_T"): _normalizer_pair,
    ("R1_T", "Z_tilde"): _gaussian_pair,
    ("Z_tilde", "X_tilde"): _covariance_pair,
}


def theory_shape(pair: Tuple[str, str], context: ShapeContext) -> float:
    """
    The rate shape for a pair of consecutive stages; NaN for unknown pairs and for
    heights where ``log log log T`` is not positive.

    >>> theory_shape(("Q_T", "R_T"), ShapeContext(T=1e100, L=1.0, M=1.0, N=1)) > 0
    True
    """

    shape = PAIR_SHAPES.get(pair)
    ll, lll = context.loglog, context.logloglog
    if shape is None or ll is None or lll is None:
        return math.nan

    return shape(context, ll, lll)


@dataclass(frozen=True)
class OverallShapes:
    """
    End-to-end shapes: the Lipschitz and bounded parts of the general rate, and the
    rate for identity covariance (NaN above three coordinates).
    """

    main_lipschitz: float
    main_bounded: float
    identity: float


def overall_shapes(context: ShapeContext) -> OverallShapes:
    ll, lll = context.loglog, context.logloglog
    if ll is None or lll is None:
        return OverallShapes(math.nan, math.nan, math.nan)

    lipschitz = context.L * lll**-context.eps1
    bounded = context.M * math.exp(-0.5 * lll ** (context.eps1 + context.eps2))

    identity = context.L * context.N * lll**2 / math.sqrt(ll)
    if context.N <= 2:
        identity += context.M * ll ** (-1 + context.eps + context.eps3)
    elif context.N == 3:
        identity += context.M * ll ** (-0.5 + context.eps4)
    else:
        identity = math.nan

    return OverallShapes(main_lipschitz=lipschitz, main_bounded=bounded, identity=identity)
