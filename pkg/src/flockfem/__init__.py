"""1D periodic FEM laboratory for alignment-model hydrodynamics.

Solves the Cucker-Smale, Motsch-Tadmor and adaptive-strength (weight-form)
systems on the unit torus with P3/P2 Lagrange elements and semi-implicit
backward Euler stepping, and measures the models' conservation, alignment
and entropy statements at runtime.
"""

from .errors import (
    BlowUpSuspected,
    CFLViolation,
    ConfigError,
    DegenerateSeries,
    FlockFemError,
    FloorViolation,
    SolverFailure,
)
from .kernels import (
    KernelSpec,
    KernelTable,
    build_kernel_table,
    constant_kernel,
    convolve,
    favre_velocity,
    kernel_from_name,
    rational_sqrt_kernel,
    table_kernel,
)
from .mesh import (
    FEFunction,
    LocalBasis,
    PeriodicMesh,
    build_local_basis,
    build_mesh,
    error_norms,
    interpolate,
)
from .stepping import RunResult, SimState, StepConfig, Stepper, constant_state, run

__version__ = "0.1.0"

__all__ = [
    "BlowUpSuspected", "CFLViolation", "ConfigError", "DegenerateSeries",
    "FlockFemError", "FloorViolation", "SolverFailure",
    "KernelSpec", "KernelTable", "build_kernel_table", "constant_kernel",
    "convolve", "favre_velocity", "kernel_from_name", "rational_sqrt_kernel",
    "table_kernel",
    "FEFunction", "LocalBasis", "PeriodicMesh", "build_local_basis",
    "build_mesh", "error_norms", "interpolate",
    "RunResult", "SimState", "StepConfig", "Stepper", "constant_state", "run",
    "__version__",
]
