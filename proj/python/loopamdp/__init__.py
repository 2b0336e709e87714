"""Python access to the LOOP / MLE-LOOP simulator core."""

import json
import os

from ._core import (
    RuntimeFailure,
    SolveResult,
    TabularAMDP,
    ValidationError,
    bellman_error_table,
    evi_solve,
    generate_instance,
    greedy_policy,
    report,
    stationary_average_reward,
    tv_distance,
)
from . import _core

__all__ = [
    "RuntimeFailure",
    "SolveResult",
    "TabularAMDP",
    "ValidationError",
    "bellman_error_table",
    "de_dim",
    "effective_dim",
    "eluder_dim",
    "evi_solve",
    "fit_slope",
    "generate_instance",
    "greedy_policy",
    "report",
    "run_config",
    "run_experiment",
    "stationary_average_reward",
    "tv_distance",
]


def run_experiment(config_text, base_dir=".", output_dir=None):
    """Run a `key = value` config given as text; returns the summary dict."""
    return json.loads(_core._run_experiment(config_text, base_dir, output_dir or ""))


def run_config(path, output_dir=None):
    """Run a config file; relative paths inside it resolve against its directory."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return run_experiment(text, os.path.dirname(os.path.abspath(path)), output_dir)


def fit_slope(cum, t_lo, t_hi):
    """Log-log slope of cumulative regret over [t_lo, t_hi]; cum[t - 1] is regret after t steps."""
    return json.loads(_core._fit_slope(list(cum), t_lo, t_hi))


def eluder_dim(table, eps, max_nodes=5_000_000):
    """table[i][x] = f_i(x). Returns the witness dict."""
    return json.loads(_core._eluder_dim(table, eps, max_nodes))


def de_dim(table, measures, eps, max_nodes=5_000_000):
    return json.loads(_core._de_dim(table, measures, eps, max_nodes))


def effective_dim(vectors, eps):
    return json.loads(_core._effective_dim(vectors, eps))
