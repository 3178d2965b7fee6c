"""grad-div stabilized, nudging-based POD reduced-order modeling of
incompressible Navier-Stokes flows: full-order snapshot generation, the POD
offline stage, the coarse-mesh data-assimilation online stage, and the
quantitative diagnostics around them."""

from .mesh import Mesh, generate_rect_mesh, load_mesh, save_mesh
from .spaces import FemSpaces, PressureField, VelocityField, build_spaces
from .assemble import FomOperators, assemble_operators, convection_apply, convection_matrix
from .projections import StokesProjector, l2_project_pressure, stokes_projection
from .fom import FomConfig, FomSolver, FomState, SeparableForcing, run_fom
from .pod import (PodBasis, SnapshotSet, assemble_modes, build_correlation,
                  build_pod_basis, eigendecompose, gradient_truncation_identity,
                  mean_projection_error, project, reconstruct)
from .nudging import CoarseInterp, NudgingAlgebra, build_coarse_interp, \
    build_nudging_algebra, estimate_constants
from .rom import (RomSchedule, RomSystem, RomTrajectory, RomVariant,
                  build_rom_system, reconstruct_trajectory,
                  rom_step_bdf2_semiimplicit, rom_step_implicit_euler, run_rom)
from .analysis import (ErrorReport, QoISeries, drag_lift, error_report, fit_decay,
                       kinetic_energy, nudging_rate_scale, stokes_test_functions,
                       strouhal)
from .config import ConfigError, PipelineConfig, parse_config, serialize

__version__ = "0.1.0"
