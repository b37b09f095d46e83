"""Gradient-recovery C0 linear finite elements for the triharmonic equation."""
from .mesh import (
    Mesh,
    MeshError,
    MeshPattern,
    boundary_frames,
    generate_disk,
    generate_lshape,
    generate_uniform,
    load_mesh,
    refine_regular,
    write_mesh,
)
from .fem import (
    BoundaryData,
    ErrorNorms,
    ProblemSpec,
    assemble_load,
    assemble_stiffness,
    error_norms,
    interpolate,
    quadrature_rule,
)
from .recovery import (
    Method,
    RecoveryOperator,
    build_ppr,
    build_recovery,
    build_spr,
    build_wa,
    recovered_hessian,
    third_derivative_field,
)
from .solver import assemble_system, build_constraints, select_constraints, solve_bvp
from .problems import Example, get_example
from .convergence import (
    ConvergenceReport,
    LevelResult,
    estimate_order,
    format_report,
    read_report,
    run_convergence,
    write_report,
)

__version__ = "0.1.0"
