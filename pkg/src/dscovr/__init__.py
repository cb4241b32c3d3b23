"""Doubly stochastic primal-dual coordinate methods for distributed ERM."""

from .accelerated import run_accelerated
from .baselines import optimality_residual, run_apg, run_pgd, saddle_oracle
from .core import RunResult, run_dscovr_saga, run_dscovr_svrg, run_framework
from .data import make_problem, normalize_rows, parse_libsvm, serialize_libsvm, synth_problem
from .losses import L2, ElasticNet, Logistic, Quadratic, SmoothedHinge, get_loss
from .problem import (
    BlockMatrix,
    ErmProblem,
    Partition,
    SaddleState,
    build_even_partition,
    dual_value,
    duality_gap,
    lagrangian,
    omega,
    partition_matrix,
    primal_value,
)
from .stepsizes import (
    SamplingScheme,
    accel_plan,
    condition_numbers,
    plan_theorem1,
    practical_plan,
    stepsizes_saga,
    stepsizes_theorem2,
)

__version__ = "0.1.0"
