"""Gradient methods with cyclic and Yuan-type steplengths for SPD systems."""
from .linalg import (
    CsrOperator, DiagonalOperator, DimensionError, NumericalBreakdown, SpdOperator,
    SpectrumInfo, ZeroGradient, as_vector, dot, matvec, power_apply, rayleigh_step,
)
from .parallel import (
    CommTrace, PartitionPlan, ga_steplength, partition_rows, ra_steplength,
    simulate_parallel_solve,
)
from .problems import (
    ConfigError, FormatError, ProblemInstance, SpectrumSpec, build_problem, generate_diagonal,
    generate_spd_2d, load_matrix_market,
)
from .solver import (
    ConvergenceHistory, PropertyACheckConfig, SolveConfig, Status, check_property_a,
    partial_gradient_energy, solve, solve_cg, solve_gradient,
)
from .steplengths import Branch, SolverContext, SteplengthRule, StepResult, parse_rule

__version__ = "0.1.0"
