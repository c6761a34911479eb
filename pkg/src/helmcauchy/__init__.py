"""Mollifier regularisation for the Cauchy problem of the 2D Helmholtz equation."""
from .problem import CauchyCase, RectDomain, example1, example2, get_case, verify_compatibility
from .assembly import (ForwardSystem, Grid2D, apply_forward, assemble_level, assemble_rhs,
                       assemble_system, build_grid, exact_rhs, march_solve, truncation_residual)
from .mollifier import (ExtendedGrid, GaussianKernel, RegularizerStack, build_convolution,
                        build_extension, build_penalty, lemma_bounds, symbol)
from .solver import NormalSystem, SolveResult, SolverError, assemble_normal, solve_direct, solve_spd
from .experiment import (AlphaGrid, NoiseSpec, SweepReport, add_noise, run_sweep, select_alpha,
                         slice_error)

__version__ = "0.1.0"
