"""Weighted p-Laplacian eigenvalues and critical points of a singular
Caffarelli-Kohn-Nirenberg type energy on planar domains."""

__version__ = "0.1.0"

from .assembly import (FeFunction, FeSpace, Functionals, assemble_J, assemble_NF, assemble_Phi, dual_residual_norm,
                       energy_I, read_field, residual, space_for, write_field)
from .critical import (LinkingFrame, SolveReport, build_linking_frame, check_linking_geometry, check_mp_geometry,
                       classify_K, find_u1, linking_solve, mountain_pass)
from .eigen import EigenPair, OddLoop, linear_cross_check, normalize_to_M, solve_lambda1, solve_mu2
from .errors import (AdmissibilityError, CknError, ConvergenceError, DegenerateInputError, DomainError, GeometryError,
                     IntegrabilityError)
from .mesh import Mesh, build_disk_mesh, build_polygon_mesh, disk_mesh_level, mesh_statistics, read_mesh, refine, write_mesh
from .params import (Nonlinearity, ProblemParams, RunConfig, check_f_conditions, critical_exponent, load_config,
                     parse_config_text, validate_params)
from .radial import RadialFunction, RadialGrid, radial_I, radial_J, radial_lambda1, radial_mountain_pass, radial_Phi
from .verify import CknEstimate, estimate_ckn_constant, solution_report, tail_exponent_check

__all__ = [name for name in dir() if not name.startswith("_")]
