"""Scalar automatic differentiation, derivative verification, and a pitfall lab."""

from .core import (
    Dual,
    Tape,
    TapeNode,
    TapeVar,
    apply_elementary,
    cos,
    exp,
    forward_jvp,
    gradient,
    log,
    maximum,
    minimum,
    reverse_vjp,
    sin,
    sqrt,
)
from .errors import DiagnosticError, DomainWarning, UsageError
from .highlevel import (
    DenseSystem,
    FixedPointProblem,
    SineTable,
    fixed_point_implicit,
    heron_sqrt_lowlevel,
    identity_fastpath,
    identity_fastpath_consistent,
    linear_solve,
    linear_solve_jvp,
    linear_solve_vjp,
    mul_fastpath,
    sin_lut,
    sin_poly,
    vec_max,
)
from .verify import (
    DotProductReport,
    FdVjpReport,
    GradCheckReport,
    Stage,
    StagedProgram,
    dot_product_test,
    fd_central,
    fd_forward,
    fd_vjp_check,
    gradcheck,
)

__version__ = "0.1.0"

__all__ = [
    "Dual", "Tape", "TapeNode", "TapeVar", "apply_elementary",
    "sin", "cos", "exp", "log", "sqrt", "minimum", "maximum",
    "forward_jvp", "reverse_vjp", "gradient",
    "UsageError", "DiagnosticError", "DomainWarning",
    "FixedPointProblem", "DenseSystem", "SineTable",
    "heron_sqrt_lowlevel", "fixed_point_implicit",
    "linear_solve", "linear_solve_jvp", "linear_solve_vjp",
    "sin_lut", "sin_poly", "identity_fastpath", "identity_fastpath_consistent",
    "mul_fastpath", "vec_max",
    "Stage", "StagedProgram", "GradCheckReport", "DotProductReport", "FdVjpReport",
    "fd_forward", "fd_central", "gradcheck", "dot_product_test", "fd_vjp_check",
    "__version__",
]
