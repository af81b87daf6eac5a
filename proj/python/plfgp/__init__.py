"""Probabilistic load flow with Gaussian-process voltage surrogates.

Quantities are per-unit on the case base unless a name says otherwise.
Reports come back as dictionaries decoded from the native JSON form.
"""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    DimensionMismatch,
    Error,
    ExcessiveFailures,
    FactorizationFailure,
    GPModel,
    InjectionDim,
    InputDistribution,
    LearnResult,
    NetworkCase,
    NonConvergence,
    PowerFlowSolution,
    RejectionStall,
    SemanticError,
    SingularJacobian,
    SyntaxError,
    UnknownBus,
    case_from_json,
    eps_v,
    fit,
    learn,
    load_case,
    oracle_values,
    parse_case,
    result_from_json,
    sample,
    solve_power_flow,
)

__all__ = [
    "ConfigError",
    "DimensionMismatch",
    "Error",
    "ExcessiveFailures",
    "FactorizationFailure",
    "GPModel",
    "InjectionDim",
    "InputDistribution",
    "LearnResult",
    "NetworkCase",
    "NonConvergence",
    "PowerFlowSolution",
    "RejectionStall",
    "SemanticError",
    "SingularJacobian",
    "SyntaxError",
    "UnknownBus",
    "case_from_json",
    "eps_v",
    "fit",
    "learn",
    "load_case",
    "mcs",
    "oracle_values",
    "parse_case",
    "result_from_json",
    "run_study",
    "sample",
    "solve_power_flow",
    "test",
]


def test(result, dist, n, seed, jobs=1):
    """Surrogate testing report for `n` draws of `dist`."""
    return _json.loads(_core.test(result, dist, n, seed, jobs))


# Keep pytest from collecting the re-export as a test.
test.__test__ = False


def mcs(net, target, dims, dist, n, seed, jobs=1):
    """Monte Carlo report from full power flow solves."""
    return _json.loads(_core.mcs(net, target, dims, dist, n, seed, jobs))


def run_study(config, command, out="", jobs=1, format="csv"):
    """Runs a CLI subcommand in-process; returns (exit_code, log_text)."""
    return _core.run_study(config, command, out, jobs, format)
