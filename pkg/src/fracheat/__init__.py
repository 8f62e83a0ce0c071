"""Numerical laboratory for the fractional-sheet driven heat equation."""

__version__ = "0.1.0"

from .parabolic import (GriddedField, GridError, MultiIndex, Rect, ScaledPoint, SpaceTimeGrid,
                        dyadic_lattice, holder_norm, rect_increment, scaled_degree, scaled_norm)
from .spectral_field import (AxisParams, NoiseRealization, SheetSpec, eval_noise_density, eval_sheet,
                             evaluate, evaluate_grid, exact_increment_moment, exact_second_moment, exact_test_moment,
                             normalization_constant, sample_noise)
from .heat_kernel import KernelDecomposition, convolve, fourier_K, heat_kernel, kernel_pieces
from .besov import (TestFunction, besov_estimate, pair, regularity_slope, scale_test,
                    standard_family)
from .rough_model import (RenormConstant, area_moment_scan, chen_defect, levy_area,
                          renorm_constant, renorm_limit_check)
from .solver import (SolutionPath, SolverConfig, VectorFieldSpec, convergence_study, heat_step,
                     solve_ito_reference, solve_renormalized, solve_young)
