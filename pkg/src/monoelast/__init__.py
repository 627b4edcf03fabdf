"""Inclusion detection in 3D elastic bodies via monotonicity tests."""

from .model import (BoundaryLayout, InclusionSpec, MaterialField, Mesh, VoxelGrid,
                    build_mesh, make_material_field, make_test_coefficients,
                    partition_boundary, voxel_grid)
from .assembly import LoadSet, assemble_loads, assemble_mass, assemble_stiffness
from .forward import (NtDMatrix, SolutionBank, SystemFactorization, factorize_system,
                      frechet_matrix, ntd_matrix, solve_bank, solve_bvp, voxel_grams)
from .spectral import EigenReport, count_below, eig_sym, positive_mode_count, spectral_norm
from .noise import NoisySpec, noise_matrix, perturb
from .recon import (BreakdownResult, PreparedReconstruction, ReconResult, SweepReport,
                    TestVerdict, fill_enclosed, linearized_test, m_delta_sweep,
                    noise_breakdown, prepare_linearized, prepare_standard,
                    reconstruct_linearized, reconstruct_standard, standard_test)
from .scenario import (InclusionDef, Scenario, WaveReport, load_scenario, save_scenario,
                       wavelengths)
from .errors import (ConfigError, InfeasibleSweepError, ResonanceError,
                     SingularSystemError)

__version__ = "0.1.0"
