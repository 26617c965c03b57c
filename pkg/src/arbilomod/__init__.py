"""Localized reduced basis engine for locally modifiable 2D elliptic problems."""

from .assembly import AffineSystem, assemble_affine, h1_gram, shift_vector
from .decomposition import Extender, classify, overlapping_patches, project
from .enrichment import ConvergenceLog, EnrichmentConfig, mark, run_to_convergence
from .errors import (ArbiLoModError, ConditioningError, GeometryResolutionError,
                     LinearSolverError, SessionLoadError, StalenessError, TrainingError)
from .estimator import (EstimatorConstants, alpha_lb_analytic, estimate_global,
                        estimate_localized, estimate_relative, gamma_ub_analytic,
                        residual)
from .geometry import ChangeSet, GeometryModel, benchmark_geometry, diff, load_geometry, save_geometry
from .greedy import CellGreedyConfig, CellProblem, local_greedy
from .mesh import DofHandler, Mesh, build_dof_handler, build_mesh
from .pipeline import Model
from .reduced import ReducedAssembly, ReducedModel
from .session import Session, SessionConfig, SessionStats, run_sequence
from .training import (LocalBasis, TrainingConfig, default_parameter_set,
                       random_coupling_sample, snapshot_greedy, train_face)

__version__ = "0.1.0"
