"""Deformable foot-ground contact simulation and gait analysis toolkit."""

from .analysis import (AnalysisParams, GaitCycle, GaitReport, build_report,
                       compare_reports, cv_stats, edge_strain, energies,
                       grf_heatmap, regional_forces, segment_cycles,
                       zmp_and_margin)
from .contact import (ContactLog, ContactParams, RigidFootLayout,
                      contact_force, default_rigid_layout, detect_contacts,
                      rigid_baseline_contacts)
from .errors import ConfigError, MeshFormatError, NumericalInstabilityError
from .gait import GaitParams, generate_standing_trajectory, generate_walk_trajectory
from .geometry import convex_hull_2d, signed_margin
from .mesh import (FootMesh, MeshGenSpec, assign_radial_directions,
                   generate_foot_mesh, load_mesh, mirror_foot, save_mesh)
from .playback import (PlaybackConfig, RewardKernels, RewardWeights,
                       reward_terms, run_playback)
from .retarget import (JointTrajectory, finite_difference_velocities,
                       resample_and_filter, solve_frame, solve_trajectory)
from .skeleton import SkeletonModel, default_skeleton, forward_sites
from .solver import (FlexState, FramePose, SolverParams, edge_constraint_forces,
                     impedance, reference_accel, step)

__version__ = "0.1.0"
