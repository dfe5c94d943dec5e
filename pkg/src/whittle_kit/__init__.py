"""Whittle and Gittins indices of two-action Markov arms: exact computation, brute-force checks, and learning."""
from .arm import (
    Arm,
    ArmEstimate,
    advantage_definitional,
    advantage_lines,
    diameter,
    gain_bias,
    generate_dirichlet_arm,
    is_unichain,
    random_arm,
    validate_arm,
)
from .baselines import QParams, qgi_run, qwi_run
from .errors import *  # noqa: F401,F403
from .learner import (
    ArmSimulator,
    EmpiricalCounts,
    LearningTrace,
    Schedule,
    blinq_run,
    error_metrics,
    estimate_arm,
)
from .oracle import LambdaScan, bo_policies_at, lambda_scan, search_non_indexable
from .solver import (
    IndexBounds,
    IndexComputation,
    Indexable,
    NonIndexable,
    classify_indexability,
    ewisc,
    index_bounds,
    sherman_morrison_update,
)

__version__ = "0.1.0"
