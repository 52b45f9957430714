"""
Command line entry point: ``sclt <command> --config run.json``.
"""

import argparse
import logging

from typing_extensions import Any, Callable, Dict, Optional, Sequence

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateParametersError,
    DomainError,
    EmptyRangeError,
    PrecisionError,
    PreconditionError,
)
from .experiments import (
    MOMENT_HEADER,
    RATE_HEADER,
    ChainExperiment,
    DedekindExperiment,
    covariance_report,
    experiment_from_config,
    moment_rows,
)
from .output import emit, emit_batches, emit_document, load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_IO = 4

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def _sample(experiment: ChainExperiment, out: Optional[str]) -> None:
    emit_batches(experiment.sample(), experiment.output_format, out)


def _distances(experiment: ChainExperiment, out: Optional[str]) -> None:
    emit(experiment.distances(), experiment.output_format, out)


def _moments(experiment: ChainExperiment, out: Optional[str]) -> None:
    emit(moment_rows(experiment), experiment.output_format, out, header=MOMENT_HEADER, kind="moments")


def _covariance(experiment: ChainExperiment, out: Optional[str]) -> None:
    emit_document({"kind": "covariance", **covariance_report(experiment)}, out)


def _rates(experiment: ChainExperiment, out: Optional[str]) -> None:
    emit(list(experiment.results()), experiment.output_format, out, header=RATE_HEADER, kind="rates")


def _dedekind(experiment: ChainExperiment, out: Optional[str]) -> None:
    if not isinstance(experiment, DedekindExperiment):
        raise ConfigError("The dedekind command needs \"mode\": \"dedekind\" in the configuration")

    result = experiment.run()
    batch = result["batch"]
    document = {
        "kind": "dedekind",
        "source_stage": result["source"],
        "Q_target": result["Q_target"],
        "Q_empirical": result["Q_empirical"],
        "excluded": int(batch.excluded().sum()),
        "meta": batch.meta,
    }
    if experiment.output_format == "json":
        document["Y_T"] = batch.data
        emit_document(document, out)
        return

    rows = [
        {"i": i, "j": j, "target": result["Q_target"][i][j], "empirical": result["Q_empirical"][i][j]}
        for i in range(batch.N)
        for j in range(batch.N)
    ]
    emit(rows, "csv", out, header=("i", "j", "target", "empirical"), kind="dedekind")


COMMANDS: Dict[str, Callable[[ChainExperiment, Optional[str]], None]] = {
    "sample": _sample,
    "distances": _distances,
    "moments": _moments,
    "covariance": _covariance,
    "rates": _rates,
    "dedekind": _dedekind,
}

HELP = {
    "sample": "sample the approximation chain at shared random heights",
    "distances": "distances between consecutive stages",
    "moments": "quadrature moments of the prime polynomial against the diagonal formula",
    "covariance": "target and empirical covariance with positive-definiteness verdicts",
    "rates": "distance table over the configured list of heights",
    "dedekind": "log|zeta_K| vectors for quadratic fields",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sclt", description="Multivariate central limit experiments for shifted L-functions."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        command = commands.add_parser(name, help=HELP[name])
        command.add_argument("--config", required=True, help="JSON configuration with schema_version 1")
        command.add_argument("--seed", type=int, default=None, help="override the configured seed")
        command.add_argument("--out", default=None, help="result file, standard output when omitted")
        command.add_argument("--threads", type=int, default=None, help="override the configured thread count")
        command.add_argument("--format", choices=["csv", "json"], default=None, help="override the output format")
        command.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    return parser


def configure(args: argparse.Namespace) -> ChainExperiment:
    """Load the configuration and apply the command line overrides."""

    config: Dict[str, Any] = load_config(args.config)
    experiment = experiment_from_config(config)

    if args.seed is not None:
        experiment.seed(args.seed)
    if args.threads is not None:
        experiment.threads(args.threads)
    if args.format is not None:
        experiment.format(args.format)

    return experiment


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.

    :param argv: arguments without the program name, default ``sys.argv[1:]``
    :returns: 0 on success, 2 for configuration and domain errors, 3 for failed
        preconditions and exhausted budgets, 4 for I/O errors
    """

    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose >= 2 else logging.INFO if args.verbose == 1 else logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        experiment = configure(args)
        COMMANDS[args.command](experiment, args.out)
    except (ConfigError, DomainError, DegenerateParametersError, EmptyRangeError) as error:
        logger.error(f"{type(error).__name__}: {error}")
        return EXIT_CONFIG
    except (PreconditionError, CapacityError, PrecisionError) as error:
        logger.error(f"{type(error).__name__}: {error}")
        return EXIT_PRECONDITION
    except ValueError as error:
        logger.error(f"{type(error).__name__}: {error}")
        return EXIT_CONFIG
    except OSError as error:
        logger.error(f"{error}")
        return EXIT_IO

    return EXIT_OK

