"""One-step linearized EIT reconstruction on the unit disk."""

from .analysis import (ErrorReport, analysis_space_solve, coeff_beta, coeff_gamma, error_report,
                       explicit_gap_bound, filter_factors, gap_expression, project_true,
                       spectrum_check)
from .assemble import AreaMatrix, SensitivityTensor, apply_S, area_matrix, sensitivity
from .basis import (CurrentBasis, SpectralModel, assemble_spectral, background_gradient,
                    background_potential, zeta)
from .errors import NumericalError, ParameterError
from .forward import (Annulus, Disk, Phantom, Polygon, add_noise, measure_F, solve_neumann,
                      synthesize_V)
from .measurement import MeasurementMatrix
from .mesh import TriMesh, build_disk_mesh, cell_geometry, refine
from .reconstruct import (ReconField, RegConfig, alpha_rule, direct_solve, dual_solve,
                          iterative_baseline, reconstruct)

__version__ = "0.1.0"
