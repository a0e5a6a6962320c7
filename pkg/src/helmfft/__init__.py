"""FFT-based fast direct solver for the Helmholtz equation on rectangular
grids with first-order absorbing boundary conditions in x_1.

Typical use::

    import numpy as np
    from helmfft import Grid, plan2d, solve2d

    grid = Grid((257, 257))
    plan = plan2d(grid, 2 * np.pi)          # absorbing x_1 ends, omega = 2 pi
    u = solve2d(plan, f)                    # f: complex vector, lexicographic

The solvers run in O(N log N) time and never form a volumetric matrix; the
`oracle` module provides an independent dense reference for verification.
"""

from ._tridiag import SingularBlock
from .assembly import (CorrectionMatrix, Pencil1D, PencilDifference,
                       assemble_pencil, assemble_periodic_pencil,
                       build_correction, build_operator_A, build_operator_B,
                       pencil_difference)
from .core import (BoundaryKind, Grid, KroneckerOperator, TriCornerMatrix,
                   kron_apply, lex_index, tune_allocator, unlex_index)
from .oracle import (DenseProblem, SizeLimit, dense_eigensolve_pencil,
                     dense_partial_solution, dense_problem, dense_solve)
from .solver2d import (PartialSolution, SolverPlan2D, plan2d,
                       solve2d, solve_aux_partial, solve_correction,
                       solve_final)
from .solver3d import SolverPlan3D, plan3d, solve3d, solve_block_system
from .spectral import (EigenBasis, EigensolverFailure, LineTransformPlan,
                       NormalizationFailure, boundary_restricted_product,
                       circulant_eigenbasis, circulant_eigenvalues,
                       circulant_mass_eigenvalues, clear_eigen_cache,
                       dft_entry, forward_line_transform,
                       inverse_line_transform, solve_pencil_eigen)

__version__ = "0.1.0"

__all__ = [
    "BoundaryKind", "Grid", "KroneckerOperator", "TriCornerMatrix",
    "kron_apply", "lex_index", "unlex_index", "tune_allocator",
    "Pencil1D", "PencilDifference", "CorrectionMatrix",
    "assemble_pencil", "assemble_periodic_pencil", "pencil_difference",
    "build_operator_A", "build_operator_B", "build_correction",
    "EigenBasis", "LineTransformPlan", "EigensolverFailure",
    "NormalizationFailure", "circulant_eigenvalues",
    "circulant_mass_eigenvalues", "circulant_eigenbasis", "dft_entry",
    "solve_pencil_eigen", "clear_eigen_cache", "forward_line_transform",
    "inverse_line_transform", "boundary_restricted_product",
    "SolverPlan2D", "PartialSolution", "SingularBlock", "plan2d", "solve2d",
    "solve_aux_partial", "solve_correction", "solve_final",
    "SolverPlan3D", "plan3d", "solve3d", "solve_block_system",
    "DenseProblem", "SizeLimit", "dense_problem", "dense_solve",
    "dense_partial_solution", "dense_eigensolve_pencil",
    "__version__",
]
