"""Hybrid inexact block coordinate descent for coupled matrix factorization."""

import os

# cap BLAS threads before numpy loads; must precede any numpy import
_threads = os.environ.get("HIBCD_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from hibcd._backend import BACKEND  # noqa: E402
from hibcd.cosmf import CosmfProblem, CosmfSolution, SolveConfig, init, solve  # noqa: E402
from hibcd.engine import (  # noqa: E402
    FPG,
    FW,
    BlockProblem,
    BlockSpec,
    ExtrapolationSchedule,
    SolverTrace,
    StopRule,
    fw_gap,
    inner_repeat_bound,
    recommend_inner_repeats,
    run,
)
from hibcd.errors import ConfigError, NumericalFailure  # noqa: E402
from hibcd.sensing import ScenePair, wald_scene  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BlockProblem", "BlockSpec", "ConfigError", "CosmfProblem",
    "CosmfSolution", "ExtrapolationSchedule", "FPG", "FW", "NumericalFailure",
    "ScenePair", "SolveConfig", "SolverTrace", "StopRule", "fw_gap", "init",
    "inner_repeat_bound", "recommend_inner_repeats", "run", "solve", "wald_scene",
]
