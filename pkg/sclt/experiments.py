"""
Experiments: sampling the approximation chain at shared random heights, distance
tables between consecutive stages, sweeps over T and the Dedekind composition.
"""

import hashlib
import logging
import math
from abc import abstractmethod
from dataclasses import dataclass, field
from inspect import getmembers, ismethod

import numpy as np
import numpy.typing as npt
from typing_extensions import (
    Any,
    Dict,
    Iterator,
    List,
    Literal,
    Mapping,
    MutableMapping,
    Optional,
    Sequence,
    Self,
    Tuple,
    Type,
    TypeAlias,
    override,
)

from .batches import SampleBatch
from .characters import DirichletCharacter, character
from .covariance import (
    CovarianceSpec,
    ShiftConfig,
    as_lists,
    build_K,
    build_K_tilde,
    dedekind_covariance,
    distance_condition,
    normalizer,
    orthogonality_gap,
    pd_summary,
    shifts_from_rule,
)
from .dirichlet_series import (
    FULL_L_BUDGET,
    MOLLIFIER_BUDGET,
    ApproxParams,
    derive_params,
    mollifier_coefficients,
    mollifier_tail_bound,
    prime_poly_parts,
    sample_heights,
    truncated_series,
)
from .distances import (
    DEFAULT_C2,
    DEFAULT_EPS1,
    DEFAULT_EPS2,
    BoundParams,
    DistanceReport,
    abb_certificate,
    bl_dictionary_lower,
    cf_sup_on_grid,
    coupling_l1_upper,
    empirical_box_tail,
    gaussian_box_tail,
    kolmogorov_1d,
)
from .errors import CapacityError, ConfigError, PreconditionError
from .gaussian import GaussianSpec, density_diff, sample_mvn
from .moments import MIN_NODES, exact_diagonal_moment, quad_moment, required_nodes
from .phases import height_to_float
from .shapes import ShapeContext, overall_shapes, theory_shape
from .streams import BLOCK_ROWS, STREAM_GAUSSIAN, STREAM_HEIGHTS, map_blocks, uniform_integers

logger = logging.getLogger(__name__)

StageName: TypeAlias = str
OutputFormat: TypeAlias = Literal["csv", "json"]
Batches: TypeAlias = Dict[StageName, SampleBatch]

CHAIN: Tuple[StageName, ...] = ("X_T", "X0_T", "M_T", "M_T_surrogate", "Q_T", "R_T", "R1_T", "Z_tilde", "X_tilde")
FULL_L_STAGES = ("X_T", "X0_T")
SINGULAR_THRESHOLD = 1e-12
DEFAULT_SAMPLES = 1000
DEFAULT_M_CUTOFF = 10**4
DEFAULT_DICT_SIZE = 256
DEFAULT_GRID = 21
STREAM_TARGET = 6

RATE_HEADER = (
    "T", "pair_a", "pair_b", "estimator", "value", "uncertainty", "theory_shape", "L", "M", "N", "seed", "flags",
    "main_shape_lipschitz", "main_shape_bounded", "identity_shape", "status",
)


def heights_digest(draws: npt.NDArray[np.uint64]) -> str:
    """SHA-256 of the height draws, stored with every batch of a run."""

    return hashlib.sha256(np.ascontiguousarray(draws, dtype="<u8").tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class ChainContext:
    """Everything fixed before sampling starts."""

    T: float
    params: ApproxParams
    chars: Tuple[DirichletCharacter, ...]
    shifts: ShiftConfig
    stages: Tuple[StageName, ...]
    covariance: CovarianceSpec
    normalizers: Tuple[float, ...] = ()
    C1: Tuple[float, ...] = ()
    L_cutoff: int = 0
    M_cutoff: int = 0
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.chars)

    @property
    def scale(self) -> float:
        return math.sqrt(0.5 * self.params.loglog_T)

    def snapshot(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "N": self.N,
            "characters": [list(chi.address) for chi in self.chars],
            "shifts": list(self.shifts.alphas),
            "params": self.params.snapshot(),
            "L_cutoff": self.L_cutoff,
            "M_cutoff": self.M_cutoff,
        }


class Experiment:
    """
    Base class for all experiments. Settings are applied with chainable methods; a
    JSON configuration is applied key by key through ``parameters``.
    """

    _format: OutputFormat = "csv"
    _valid_formats = ["csv", "json"]

    def __init__(self) -> None:
        self.params: MutableMapping[str, Any] = {
            "samples": DEFAULT_SAMPLES,
            "seed": 0,
            "threads": 1,
            "approx": {},
            "distance": {},
            "bounds": {},
            "moments": {},
            "delta_budget": 1.0,
            "M_cutoff": DEFAULT_M_CUTOFF,
        }

    def parameters(self, **kwargs: Any) -> Self:
        """
        Provide settings as keyword arguments. The keyword needs to match the name of
        the method, and the value should either be the value or a tuple of values.

        Example: parameters(height=1e4, characters=[[5, 1], [5, 2]])

        :returns: self
        """

        methods = dict(getmembers(self, predicate=ismethod))

        for key, val in kwargs.items():
            if key not in methods:
                raise ConfigError(f"Unknown key {key}")

            if isinstance(val, tuple):
                methods[key](*val)
            else:
                methods[key](val)

        return self

    def format(self, output_format: str = "csv") -> Self:
        """
        Sets the format of the result files.

        :param output_format: csv or json
        :returns: self
        """

        if not output_format:
            output_format = "csv"

        if output_format not in self._valid_formats:
            raise ConfigError(f"Unsupported format: '{output_format}'")

        self._format = "json" if output_format == "json" else "csv"
        return self

    @property
    def output_format(self) -> OutputFormat:
        return self._format

    def height(self, T: float) -> Self:
        """
        The height scale; heights are drawn uniformly from [T, 2T].

        :param T: height scale
        :returns: self
        """

        T = float(T)
        if not T > math.e**math.e:
            raise ConfigError(f"Height must exceed e^e, got {T}")

        self.params["height"] = T
        return self

    def samples(self, n: int) -> Self:
        if int(n) < 1:
            raise ConfigError(f"Sample count must be positive, got {n}")

        self.params["samples"] = int(n)
        return self

    def seed(self, seed: int) -> Self:
        if not 0 <= int(seed) < 2**64:
            raise ConfigError(f"Seed must be a 64-bit unsigned integer, got {seed}")

        self.params["seed"] = int(seed)
        return self

    def threads(self, threads: int) -> Self:
        if int(threads) < 1:
            raise ConfigError(f"Thread count must be positive, got {threads}")

        self.params["threads"] = int(threads)
        return self

    def characters(self, addresses: Sequence[Sequence[int]]) -> Self:
        """
        Characters by (modulus, index) in the canonical ordering of each group.

        :param addresses: list of [q, index] pairs
        :returns: self
        """

        try:
            chars = [character(int(q), int(index)) for q, index in addresses]
        except (TypeError, ValueError) as error:
            raise ConfigError(f"Invalid characters {addresses}: {error}") from None

        if not chars:
            raise ConfigError("At least one character is required")

        self.params["characters"] = chars
        return self

    def shifts(self, alphas: Sequence[float]) -> Self:
        self.params["shifts"] = [float(alpha) for alpha in alphas]
        self.params.pop("shift_rule", None)
        return self

    def shift_rule(self, rule: Mapping[str, Any]) -> Self:
        """
        Shifts generated at every height from a class matrix: ``{"c": [[...], ...]}``.

        :param rule: mapping with the symmetric matrix ``c``
        :returns: self
        """

        matrix = rule.get("c") if isinstance(rule, Mapping) else None
        if matrix is None or any(len(row) != len(matrix) for row in matrix):
            raise ConfigError(f"Shift rule needs a square matrix 'c', got {rule}")

        self.params["shift_rule"] = [[float(x) for x in row] for row in matrix]
        self.params.pop("shifts", None)
        return self

    def approx(self, settings: Mapping[str, Any]) -> Self:
        """
        Constants of the parameter bundle: any of K, K_prime, A, B, Y_override, X_override.

        :returns: self
        """

        allowed = {"K", "K_prime", "A", "B", "Y_override", "X_override"}
        unknown = set(settings) - allowed
        if unknown:
            raise ConfigError(f"Unknown approx keys {sorted(unknown)}")

        self.params["approx"] = dict(settings)
        return self

    def distance(self, settings: Mapping[str, Any]) -> Self:
        """Distance settings: any of L, M, R, F, dict_size, grid."""

        unknown = set(settings) - {"L", "M", "R", "F", "dict_size", "grid"}
        if unknown:
            raise ConfigError(f"Unknown distance keys {sorted(unknown)}")

        self.params["distance"] = dict(settings)
        return self

    def bounds(self, settings: Mapping[str, Any]) -> Self:
        """Bound regime settings: any of eps1, eps2, C2, regime (main or identity)."""

        unknown = set(settings) - {"eps1", "eps2", "C2", "regime"}
        if unknown:
            raise ConfigError(f"Unknown bounds keys {sorted(unknown)}")
        if settings.get("regime", "main") not in ("main", "identity"):
            raise ConfigError(f"Unknown regime {settings['regime']}")

        self.params["bounds"] = dict(settings)
        return self

    def stages(self, names: Sequence[str]) -> Self:
        """
        Stages to sample, a contiguous run of the chain; ``M_T`` and ``X_tilde`` may be
        added or left out freely.

        :returns: self
        """

        unknown = [name for name in names if name not in CHAIN]
        if unknown:
            raise ConfigError(f"Unknown stages {unknown}")

        ordered = sorted(set(names), key=CHAIN.index)
        core = [CHAIN.index(name) for name in ordered if name not in ("M_T", "X_tilde")]
        positions = [p for p in range(len(CHAIN)) if CHAIN[p] not in ("M_T", "X_tilde")]
        if core and positions[positions.index(core[0]):positions.index(core[0]) + len(core)] != core:
            raise ConfigError(f"Stages must form a contiguous run of the chain, got {ordered}")

        self.params["stages"] = ordered
        return self

    def L_cutoff(self, cutoff: int) -> Self:
        if int(cutoff) < 1:
            raise ConfigError(f"L cutoff must be positive, got {cutoff}")

        self.params["L_cutoff"] = int(cutoff)
        return self

    def M_cutoff(self, cutoff: int) -> Self:
        if not 1 <= int(cutoff) <= MOLLIFIER_BUDGET:
            raise ConfigError(f"M cutoff must lie in [1, {MOLLIFIER_BUDGET}], got {cutoff}")

        self.params["M_cutoff"] = int(cutoff)
        return self

    def heights(self, T_list: Sequence[float]) -> Self:
        """Heights for a rate sweep."""

        self.params["heights"] = [float(T) for T in T_list]
        return self

    def moments(self, settings: Mapping[str, Any]) -> Self:
        """Moment oracle settings: any of a, k, l, nodes."""

        unknown = set(settings) - {"a", "k", "l", "nodes"}
        if unknown:
            raise ConfigError(f"Unknown moments keys {sorted(unknown)}")

        self.params["moments"] = dict(settings)
        return self

    def delta_budget(self, delta: float) -> Self:
        if float(delta) < 0:
            raise ConfigError(f"delta budget must be non-negative, got {delta}")

        self.params["delta_budget"] = float(delta)
        return self

    @abstractmethod
    def _valid_state(self) -> bool:
        """
        Determines if the experiment is in a valid state based on the settings applied
        so far. This should be implemented by the subclasses.

        :returns: True if the state is valid, otherwise False
        """

        raise NotImplementedError()

    def _require_valid(self) -> None:
        if not self._valid_state():
            raise ConfigError("An experiment needs a height and at least one character")

    def copy_with(self, **kwargs: Any) -> Self:
        """A fresh experiment of the same kind with these settings replaced."""

        clone = type(self)()
        clone.params = {key: value for key, value in self.params.items()}
        clone._format = self._format
        for key, value in kwargs.items():
            clone.params[key] = value
        return clone


class ChainExperiment(Experiment):
    """
    Samples the approximation chain X_T → X0_T → (M_T) → M_T_surrogate → Q_T → R_T →
    R1_T and the Gaussian Z_tilde at one height.
    """

    @override
    def _valid_state(self) -> bool:
        chars = self.params.get("characters")
        if "height" not in self.params or not chars:
            return False

        shifts = self.params.get("shifts")
        rule = self.params.get("shift_rule")
        if shifts is not None and len(shifts) != len(chars):
            return False
        if rule is not None and len(rule) != len(chars):
            return False

        return True

    def _alphas(self, T: float) -> List[float]:
        rule = self.params.get("shift_rule")
        if rule is not None:
            return shifts_from_rule(T, rule)

        shifts = self.params.get("shifts")
        return list(shifts) if shifts is not None else [0.0] * len(self.params["characters"])

    def _default_stages(self, T: float) -> List[StageName]:
        start = 0 if T <= FULL_L_BUDGET else CHAIN.index("M_T_surrogate")
        return [name for name in CHAIN[start:] if name not in ("M_T", "X_tilde")]

    def context(self) -> ChainContext:
        """
        Derive parameters, classify shifts, build the covariances and check every
        precondition. Nothing here draws a random number.

        :returns: the context sampling runs in
        """

        self._require_valid()
        T = self.params["height"]
        chars = tuple(self.params["characters"])
        stages = tuple(self.params.get("stages") or self._default_stages(T))

        params = derive_params(T, **self.params["approx"])
        rule = self.params.get("shift_rule")
        shifts = ShiftConfig.from_alphas(self._alphas(T), T, delta_budget=self.params["delta_budget"], c_matrix=rule)

        covariance = build_K(shifts, list(chars))
        if not covariance.pd_target:
            raise PreconditionError(f"Target covariance is not positive definite ({covariance.target_check})")

        normalizers: Tuple[float, ...] = ()
        C1: Tuple[float, ...] = ()
        if {"R1_T", "Z_tilde"} & set(stages):
            covariance = covariance.merged(build_K_tilde(T, shifts, list(chars), params))
            if "Z_tilde" in stages and not covariance.pd_empirical:
                raise PreconditionError("Empirical covariance is not positive definite")
            norms = [normalizer(T, chi, params) for chi in chars]
            normalizers = tuple(norm.M_T_chi for norm in norms)
            C1 = tuple(norm.C1 for norm in norms)

        L_cutoff = int(self.params.get("L_cutoff") or math.floor(T))
        if set(FULL_L_STAGES) & set(stages):
            if T > FULL_L_BUDGET:
                raise CapacityError(
                    f"Stages {FULL_L_STAGES} need T <= {FULL_L_BUDGET}, got {T:g}",
                    requested=T,
                    capacity=FULL_L_BUDGET,
                )
            if L_cutoff > FULL_L_BUDGET:
                raise CapacityError(f"L cutoff {L_cutoff} exceeds {FULL_L_BUDGET}", requested=L_cutoff,
                                    capacity=FULL_L_BUDGET)

        return ChainContext(
            T=T, params=params, chars=chars, shifts=shifts, stages=stages, covariance=covariance,
            normalizers=normalizers, C1=C1, L_cutoff=L_cutoff, M_cutoff=self.params["M_cutoff"],
        )

    def sample(self) -> Batches:
        """Sample every configured stage; see ``sample_chain``."""

        return sample_chain(self)

    def distances(self, batches: Optional[Batches] = None) -> List[DistanceReport]:
        return stage_distance_table(batches if batches is not None else self.sample(), self)

    def results(self) -> Iterator[Dict[str, Any]]:
        """
        Rows of a rate sweep over the configured heights, one height at a time. A
        height that fails produces a single row with its status and the sweep goes on.

        :returns: rate rows as an iterator (generator)
        """

        heights = self.params.get("heights") or [self.params.get("height")]
        for T in heights:
            yield from _sweep_rows(self, float(T))


class DedekindExperiment(ChainExperiment):
    """
    Vectors of ``log|ζ_K|`` for quadratic fields K: each field contributes a principal
    coordinate and a coordinate for its quadratic character at the same shift.
    """

    @override
    def _valid_state(self) -> bool:
        if not super()._valid_state():
            return False

        return all(chi.order == 2 for chi in self.params["characters"])

    @override
    def context(self) -> ChainContext:
        self._require_valid()
        fields = list(self.params["characters"])
        T = self.params["height"]
        alphas = self._alphas(T)

        chain = ChainExperiment()
        chain.params = dict(self.params)
        chain.params["characters"] = [character(1, 0)] * len(fields) + fields
        chain.params["shifts"] = alphas + alphas
        chain.params.pop("shift_rule", None)
        context = chain.context()

        field_shifts = ShiftConfig.from_alphas(
            alphas, T, delta_budget=self.params["delta_budget"], c_matrix=self.params.get("shift_rule")
        )
        context.extras["Q_target"] = dedekind_covariance(field_shifts, fields)
        return context

    def run(self) -> Dict[str, Any]:
        """
        Sample the doubled chain and combine it into Y_T.

        :returns: the Y_T batch with its target and empirical covariance
        """

        context = self.context()
        batches = sample_chain(self, context)
        n = len(self.params["characters"])
        source = next((stage for stage in ("X_T", "X0_T", "Q_T", "R_T") if stage in batches), None)
        if source is None:
            raise ConfigError("Dedekind mode needs one of the stages X_T, X0_T, Q_T or R_T")

        combined = dedekind_vectors(batches, [(j, n + j) for j in range(n)], stage=source)
        keep = ~combined.excluded()
        empirical = np.atleast_2d(np.cov(combined.data[keep], rowvar=False))
        return {
            "batch": combined,
            "source": source,
            "Q_target": context.extras["Q_target"],
            "Q_empirical": empirical,
        }


def _float_heights(heights: npt.NDArray[Any]) -> npt.NDArray[np.float64]:
    return np.array([height_to_float(t) for t in heights.tolist()], dtype=np.float64)


def _log_abs(values: npt.NDArray[np.complex128]) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.bool_]]:
    modulus = np.abs(values)
    singular = modulus < SINGULAR_THRESHOLD
    return np.log(np.maximum(modulus, SINGULAR_THRESHOLD)), singular


def _stage_rows(context: ChainContext, heights: npt.NDArray[Any]) -> Dict[str, npt.NDArray[Any]]:
    """Stage values for one block of fixed-point heights, plus singular-row masks."""

    n, N = len(heights), context.N
    stages = set(context.stages)
    params, scale = context.params, context.scale
    out: Dict[str, npt.NDArray[Any]] = {}

    if stages & {"X_T", "X0_T", "M_T"}:
        base = _float_heights(heights)
        ones = np.ones(context.L_cutoff + 1, dtype=np.int64)
        ones[0] = 0

        for stage, sigma, coefficients in (
            ("X_T", 0.5, ones),
            ("X0_T", params.sigma0, ones),
            ("M_T", params.sigma0, context.extras.get("mollifier")),
        ):
            if stage not in stages:
                continue
            values = np.empty((n, N))
            singular = np.zeros(n, dtype=bool)
            for j, (chi, alpha) in enumerate(zip(context.chars, context.shifts.alphas)):
                series = truncated_series(chi, coefficients, sigma, base + alpha)
                logs, flags = _log_abs(series)
                values[:, j] = (-logs if stage == "M_T" else logs) / scale
                singular |= flags
            out[stage] = values
            out[f"{stage}:flags"] = singular

    if stages & {"M_T_surrogate", "Q_T"}:
        powers = prime_poly_parts(context.chars, context.shifts.alphas, params.sigma0, heights, params, powers=True)
        surrogate = powers["full"].real / scale
        for stage in ("M_T_surrogate", "Q_T"):
            if stage in stages:
                out[stage] = surrogate

    if stages & {"R_T", "R1_T"}:
        parts = prime_poly_parts(context.chars, context.shifts.alphas, params.sigma0, heights, params)
        if "R_T" in stages:
            out["R_T"] = parts["full"].real / scale
        if "R1_T" in stages:
            out["R1_T"] = parts["P1"].real / np.sqrt(0.5 * np.asarray(context.normalizers))

    return out


def sample_chain(config: ChainExperiment, context: Optional[ChainContext] = None) -> Batches:
    """
    Draw heights ``t_1..t_n`` uniformly from [T, 2T] once and evaluate every
    configured stage at them, coordinate ``j`` at ``t + α_j``.

    Every precondition is checked before the first draw. Heights are
    ``T(1 + m/2^53)`` with ``m`` from the counter-based height stream, so a run
    depends only on its configuration and seed, never on the thread count.

    :param config: the experiment
    :param context: a context built earlier by ``config.context()``
    :returns: one batch per stage
    """

    context = context or config.context()
    n, seed, threads = config.params["samples"], config.params["seed"], config.params["threads"]

    if "M_T" in context.stages:
        context.extras["mollifier"] = mollifier_coefficients(context.M_cutoff, context.params)
        context.extras["mollifier_tail"] = mollifier_tail_bound(context.params, context.M_cutoff)

    draws = uniform_integers(seed, STREAM_HEIGHTS, n, threads=threads)
    heights = sample_heights(context.T, draws)
    meta = context.snapshot()
    meta["heights_digest"] = heights_digest(draws)
    logger.info(f"Sampling {n} heights at T={context.T:g} for stages {list(context.stages)}")

    def work(block: int, rows: int) -> Dict[str, npt.NDArray[Any]]:
        start = block * BLOCK_ROWS
        logger.debug(f"Block {block}: rows {start}..{start + rows}")
        return _stage_rows(context, heights[start:start + rows])

    blocks = map_blocks(n, work, threads)
    batches: Batches = {}
    for stage in context.stages:
        if stage in ("Z_tilde", "X_tilde"):
            continue

        data = np.concatenate([block[stage] for block in blocks])
        flags = None
        if f"{stage}:flags" in blocks[0]:
            flags = np.concatenate([block[f"{stage}:flags"] for block in blocks])
            if np.any(flags):
                logger.warning(f"{int(np.sum(flags))} near-zero rows flagged in stage {stage}")

        stage_meta = dict(meta)
        if stage == "M_T":
            stage_meta["mollifier_tail"] = context.extras["mollifier_tail"]
        batches[stage] = SampleBatch(stage=stage, data=data, seed=seed, meta=stage_meta, flags=flags)
        logger.info(f"Stage {stage}: {n} rows")

    if "Q_T" in batches and "M_T_surrogate" in batches:
        if not np.array_equal(batches["Q_T"].data, batches["M_T_surrogate"].data):
            raise ArithmeticError("Q_T and M_T_surrogate must coincide")

    if "Z_tilde" in context.stages:
        assert context.covariance.K_empirical is not None
        spec = GaussianSpec.from_covariance(context.covariance.K_empirical)
        z = sample_mvn(spec, n, seed, STREAM_GAUSSIAN, threads)
        batches["Z_tilde"] = SampleBatch("Z_tilde", z.data, seed, meta=dict(meta))

    if "X_tilde" in context.stages:
        assert context.covariance.K_target is not None
        spec = GaussianSpec.from_covariance(context.covariance.K_target)
        x = sample_mvn(spec, n, seed, STREAM_TARGET, threads)
        batches["X_tilde"] = SampleBatch("X_tilde", x.data, seed, meta=dict(meta))

    return batches


def _distance_settings(config: Experiment) -> Dict[str, Any]:
    settings = {"L": 1.0, "M": 1.0, "R": None, "F": None, "dict_size": DEFAULT_DICT_SIZE, "grid": DEFAULT_GRID}
    settings.update(config.params.get("distance") or {})
    return settings


def bound_params(config: Experiment, T: float, C1: Sequence[float]) -> BoundParams:
    """The bound regime configured for ``config`` at height ``T``."""

    settings = config.params.get("bounds") or {}
    C1_max = max(C1) if C1 else 1.0
    C2 = float(settings.get("C2", DEFAULT_C2))
    if settings.get("regime", "main") == "identity":
        return BoundParams.identity(T, C2=C2, C1=C1_max)

    return BoundParams.main(
        T, eps1=float(settings.get("eps1", DEFAULT_EPS1)), eps2=float(settings.get("eps2", DEFAULT_EPS2)),
        C2=C2, C1=C1_max,
    )


def _batch_T(batches: Batches) -> float:
    for batch in batches.values():
        if "T" in batch.meta:
            return float(batch.meta["T"])
    raise ValueError("No batch carries its height")


def stage_distance_table(batches: Batches, config: ChainExperiment) -> List[DistanceReport]:
    """
    Distances between consecutive stages.

    Co-sampled pairs get a coupling upper bound and a dictionary lower bound. The
    pair (R1_T, Z_tilde) gets the characteristic-function grid, the smoothing
    certificate and a dictionary lower bound against the analytic Gaussian. The
    empirical covariance against the target gets the density difference. Every row
    carries the rate shape of its pair, and X_T and R1_T coordinates get a
    Kolmogorov distance to the standard normal.

    :param batches: stage batches from one run
    :param config: the experiment that produced them
    :returns: the reports
    """

    present = [stage for stage in CHAIN if stage in batches and stage != "X_tilde"]
    if len(present) < 2:
        raise ConfigError(f"Need at least two stages, got {present}")

    T = _batch_T(batches)
    seed = config.params["seed"]
    settings = _distance_settings(config)
    L, M = float(settings["L"]), float(settings["M"])
    N = next(iter(batches.values())).N
    context = ShapeContext(T=T, L=L, M=M, N=N, **_shape_constants(config))
    chain = config.context() if "Z_tilde" in batches else None
    reports: List[DistanceReport] = []

    for a, b in zip(present, present[1:]):
        pair = (a, b)
        shape = theory_shape(pair, context)
        if pair == ("R1_T", "Z_tilde") and chain is not None:
            reports.extend(_gaussian_rows(batches, config, chain, T, L, M, shape, settings))
            continue

        reports.append(coupling_l1_upper(batches[a], batches[b], L).with_context(T=T, theory_shape=shape))
        lower = bl_dictionary_lower(batches[a], batches[b], L, M, int(settings["dict_size"]), seed)
        reports.append(lower.with_context(T=T, theory_shape=shape))

    if chain is not None:
        reports.extend(_covariance_rows(chain, config, T, M, context))

    for stage in ("X_T", "R1_T"):
        if stage not in batches:
            continue
        batch = batches[stage]
        keep = ~batch.excluded()
        for j in range(batch.N):
            value = kolmogorov_1d(batch.data[keep, j])
            reports.append(DistanceReport(
                pair=(stage, "std_normal"), estimator="ks_1d", value=value, params={"coordinate": float(j)},
                T=T, seed=seed, N=batch.N,
            ))

    return reports


def _shape_constants(config: Experiment) -> Dict[str, float]:
    approx = config.params.get("approx") or {}
    bounds = config.params.get("bounds") or {}
    constants = {key: float(approx[key]) for key in ("K", "K_prime", "B") if key in approx}
    constants.update({key: float(bounds[key]) for key in ("eps1", "eps2") if key in bounds})
    return constants


def _gaussian_rows(
    batches: Batches,
    config: ChainExperiment,
    context: ChainContext,
    T: float,
    L: float,
    M: float,
    shape: float,
    settings: Mapping[str, Any],
) -> List[DistanceReport]:
    assert context.covariance.K_empirical is not None
    spec = GaussianSpec.from_covariance(context.covariance.K_empirical)
    bounds = bound_params(config, T, context.C1)
    R = float(settings["R"]) if settings.get("R") is not None else bounds.R
    F = float(settings["F"]) if settings.get("F") is not None else bounds.F

    batch = batches["R1_T"]
    grid = cf_sup_on_grid(batch, spec, F, int(settings["grid"]))
    tail_mu = empirical_box_tail(batch, R)
    tail_nu = gaussian_box_tail(spec, R)
    certificate = abb_certificate(L, M, R, F, grid.sup, tail_mu, tail_nu, batch.N)
    seed = config.params["seed"]
    common: Dict[str, Any] = {"T": T, "seed": seed, "N": batch.N, "theory_shape": shape}

    return [
        DistanceReport(
            pair=("R1_T", "Z_tilde"), estimator="cf_grid", value=grid.sup, params={"F": F}, **common,
        ),
        DistanceReport(
            pair=("R1_T", "Z_tilde"), estimator="abb_certificate", value=certificate,
            params={"L": L, "M": M, "R": R, "F": F}, flags=("unnormalized",), **common,
        ),
        bl_dictionary_lower(batch, spec, L, M, int(settings["dict_size"]), seed).with_context(
            T=T, theory_shape=shape
        ),
    ]


def _covariance_rows(
    chain: ChainContext, config: ChainExperiment, T: float, M: float, context: ShapeContext
) -> List[DistanceReport]:
    covariance = chain.covariance
    if covariance.K_target is None or covariance.K_empirical is None or covariance.K_target.shape[0] > 3:
        return []

    perturbation = covariance.K_empirical - covariance.K_target
    try:
        diff = density_diff(covariance.K_target, perturbation, f_sup=M, seed=config.params["seed"])
    except PreconditionError as error:
        logger.warning(f"Skipping the covariance comparison at T={T:g}: {error}")
        return []

    return [DistanceReport(
        pair=("Z_tilde", "X_tilde"), estimator="density_diff", value=M * diff.numeric_integral,
        uncertainty=M * diff.standard_error, params={"M": M}, T=T, seed=config.params["seed"],
        N=covariance.K_target.shape[0], theory_shape=theory_shape(("Z_tilde", "X_tilde"), context),
        flags=(f"ratio={diff.ratio:.6g}",),
    )]


def _sweep_rows(config: ChainExperiment, T: float) -> Iterator[Dict[str, Any]]:
    experiment = config.copy_with(height=T)
    settings = _distance_settings(config)
    N = len(config.params.get("characters") or [])
    shapes = overall_shapes(ShapeContext(T=T, L=float(settings["L"]), M=float(settings["M"]), N=N,
                                         **_shape_constants(config)))
    theory = {
        "main_shape_lipschitz": shapes.main_lipschitz,
        "main_shape_bounded": shapes.main_bounded,
        "identity_shape": shapes.identity,
    }

    try:
        reports = experiment.distances()
    except (ValueError, RuntimeError, ArithmeticError) as error:
        logger.warning(f"Sweep row at T={T:g} failed: {error}")
        yield {
            "T": T, "pair_a": "", "pair_b": "", "estimator": "", "value": math.nan, "uncertainty": math.nan,
            "theory_shape": math.nan, "L": settings["L"], "M": settings["M"], "N": N,
            "seed": config.params["seed"], "flags": "", **theory,
            "status": f"{type(error).__name__}: {error}",
        }
        return

    for report in reports:
        logger.info(f"T={T:g} {report.pair} {report.estimator}: {report.value:.6g}")
        yield {
            "T": T, "pair_a": report.pair[0], "pair_b": report.pair[1], "estimator": report.estimator,
            "value": report.value, "uncertainty": report.uncertainty, "theory_shape": report.theory_shape,
            "L": report.params.get("L", settings["L"]), "M": report.params.get("M", settings["M"]),
            "N": report.N, "seed": report.seed, "flags": "|".join(report.flags), **theory, "status": "ok",
        }


def rate_sweep(config: ChainExperiment, T_list: Sequence[float]) -> List[Dict[str, Any]]:
    """
    One row per (T, pair, estimator) over ``T_list``, with the end-to-end rate shapes.

    :param config: the experiment; its height is replaced by each entry of ``T_list``
    :param T_list: heights
    :returns: rows keyed by ``RATE_HEADER``
    """

    return list(config.copy_with(heights=list(T_list)).results())


def dedekind_vectors(
    batches: Batches, pairing: Sequence[Tuple[int, int]], stage: StageName = "X_T"
) -> SampleBatch:
    """
    ``Y_T`` coordinate ``j`` = (zeta coordinate + L coordinate) rescaled from the
    ``½ log log T`` scale to the ``log log T`` scale, i.e. divided by ``√2``.

    :param batches: stage batches with 2N coordinates
    :param pairing: (zeta index, L index) per field
    :param stage: the stage to combine
    :returns: the Y_T batch
    """

    if stage not in batches:
        raise ConfigError(f"No batch for stage {stage}")

    batch = batches[stage]
    used = [index for pair in pairing for index in pair]
    if (
        2 * len(pairing) != batch.N
        or sorted(used) != list(range(batch.N))
    ):
        raise ConfigError(f"Pairing {list(pairing)} does not match {batch.N} coordinates")

    zeta = batch.data[:, [z for z, _ in pairing]]
    twisted = batch.data[:, [t for _, t in pairing]]
    data = (zeta + twisted) * math.sqrt(0.5)

    meta = dict(batch.meta)
    meta["N"] = len(pairing)
    meta["source_stage"] = stage
    return SampleBatch("Y_T", data, batch.seed, meta=meta, flags=batch.flags)


def covariance_report(config: ChainExperiment) -> Dict[str, Any]:
    """Covariance matrices, verdicts, normalizers and the orthogonality gap at one height."""

    config._require_valid()
    T = config.params["height"]
    context = config.copy_with(stages=["R1_T", "Z_tilde"]).context()
    conditions = distance_condition(context.shifts, list(context.chars), T)

    return {
        "T": T,
        "characters": [list(chi.address) for chi in context.chars],
        "shifts": list(context.shifts.alphas),
        "pair_class": [list(row) for row in context.shifts.pair_class],
        "unclassified": [list(pair) for pair in context.shifts.unclassified],
        "K_target": as_lists(context.covariance.K_target),
        "K_empirical": as_lists(context.covariance.K_empirical),
        "verdicts": pd_summary(context.covariance),
        "normalizers": list(context.normalizers),
        "C1": list(context.C1),
        "orthogonality_gap": orthogonality_gap(context.covariance),
        "distance_condition": [
            {"i": row.i, "j": row.j, "value": row.value, "budget": row.budget, "cutoff": row.cutoff}
            for row in conditions
        ],
        "params": context.params.snapshot(),
    }


MODES: Dict[str, Type[ChainExperiment]] = {"chain": ChainExperiment, "dedekind": DedekindExperiment}


def experiment_from_config(config: Mapping[str, Any]) -> ChainExperiment:
    """
    Build an experiment from a parsed configuration. ``mode`` picks the experiment
    class and every other key is applied through ``parameters``.

    :param config: configuration with ``schema_version`` 1
    :returns: the configured experiment
    """

    settings = dict(config)
    version = settings.pop("schema_version", 1)
    if version != 1:
        raise ConfigError(f"Unsupported schema_version {version}")

    mode = settings.pop("mode", "chain")
    if mode not in MODES:
        raise ConfigError(f"Unknown mode '{mode}'")

    experiment: ChainExperiment = MODES[mode]()
    return experiment.parameters(**settings)


MOMENT_HEADER = (
    "k", "l", "quad_re", "quad_im", "formula", "error_budget", "consistent", "leading_term", "offdiagonal_bound",
    "richardson", "diagonal_total", "diagonal_square_free", "product_formula", "T", "Y", "N", "nodes",
)


def moment_rows(config: ChainExperiment) -> List[Dict[str, Any]]:
    """
    Quadrature moments of the configured prime polynomial, with the exact diagonal
    sum beside every ``k = l`` row.

    The ``moments`` setting gives the coefficients ``a`` (default all ones), the
    orders ``k`` and ``l`` (integers or lists) and the node count (default the
    smallest resolving one).

    :param config: the experiment
    :returns: one row per (k, l)
    """

    config._require_valid()
    settings = config.params.get("moments") or {}
    T = config.params["height"]
    chars = list(config.params["characters"])
    params = derive_params(T, **config.params["approx"])
    shifts = ShiftConfig.from_alphas(
        config._alphas(T), T, delta_budget=config.params["delta_budget"], c_matrix=config.params.get("shift_rule")
    )
    a = [float(x) for x in settings.get("a", [1.0] * len(chars))]
    orders_k = settings.get("k", 1)
    orders_l = settings.get("l", orders_k)
    ks = list(orders_k) if isinstance(orders_k, (list, tuple)) else [int(orders_k)]
    ls = list(orders_l) if isinstance(orders_l, (list, tuple)) else [int(orders_l)]

    rows = []
    for k in ks:
        for order_l in ls:
            nodes = settings.get("nodes") or max(MIN_NODES, required_nodes(T, params.Y, k, order_l))
            report = quad_moment(a, shifts, chars, params, k, order_l, int(nodes))
            logger.info(f"Moment ({k}, {order_l}) at T={T:g}: {report.quad_value:.6g} with {report.nodes} nodes")
            row: Dict[str, Any] = {
                "k": k, "l": order_l, "quad_re": report.quad_value.real, "quad_im": report.quad_value.imag,
                "formula": report.formula_value, "error_budget": report.error_budget,
                "consistent": report.consistent, "leading_term": report.leading_term,
                "offdiagonal_bound": report.offdiagonal_bound, "richardson": report.richardson,
                "T": T, "Y": params.Y, "N": len(chars), "nodes": report.nodes,
            }
            if k == order_l and 0 < k <= 3:
                try:
                    diagonal = exact_diagonal_moment(a, shifts, chars, params, k)
                except CapacityError as error:
                    logger.warning(f"No exact diagonal for k={k}: {error}")
                    rows.append(row)
                    continue
                row.update({
                    "diagonal_total": diagonal.total,
                    "diagonal_square_free": diagonal.square_free,
                    "product_formula": diagonal.product_formula,
                })
            rows.append(row)

    return rows
