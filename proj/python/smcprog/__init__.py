"""SMC evolutionary program search: thin Python layer over the C++ core."""

import json as _json

from . import _core
from ._core import (
    MockLlmServer,
    SmcError,
    bitflip_invariance_residual,
    compute_weights,
    ess,
    exact_tilted,
    export,
    fnv1a64,
    next_lambda,
    oracle_check,
    path_gamma,
    resume,
    run,
    systematic_resample,
)

__all__ = [
    "MockLlmServer",
    "SmcError",
    "bitflip_invariance_residual",
    "compute_weights",
    "diagnostics",
    "ess",
    "exact_tilted",
    "export",
    "fnv1a64",
    "next_lambda",
    "oracle_check",
    "path_gamma",
    "resume",
    "run",
    "summarize",
    "systematic_resample",
    "theorem1",
]


def summarize(run_dir, tolerate_torn_tail=True):
    return _json.loads(_core.summarize_json(str(run_dir), tolerate_torn_tail))


def diagnostics(run_dir):
    return _json.loads(_core.diagnostics_json(str(run_dir)))


def theorem1(n_runs=25, epsilon=0.05, seed=1):
    """Concentration experiment on {0,1}^8 with the reference configuration."""
    return _json.loads(_core.theorem1_json(n_runs, epsilon, seed))
