"""Python bindings for the federated adaptive optimization simulator."""

from ._core import (
    Algorithm,
    CSV_HEADER,
    EtaMode,
    HyperParams,
    Problem,
    ProblemKind,
    cli,
    default_hyper_params,
    eta_schedule,
    finite_diff_check,
    make_counterexample,
    make_logistic,
    make_quadratic,
    metric_Mt,
    parse_algorithm,
    reproduce_counterexample,
    run_experiment,
)

__all__ = [
    "Algorithm",
    "CSV_HEADER",
    "EtaMode",
    "HyperParams",
    "Problem",
    "ProblemKind",
    "cli",
    "default_hyper_params",
    "eta_schedule",
    "finite_diff_check",
    "make_counterexample",
    "make_logistic",
    "make_quadratic",
    "metric_Mt",
    "parse_algorithm",
    "reproduce_counterexample",
    "run_experiment",
]
