"""Certified inner estimates of stability regions for polynomial dynamical
systems, specialized to multi-machine power-system swing dynamics.

The pipeline searches for a polynomial Lyapunov function whose unit sublevel
set is a certified invariant subset of the region of attraction, grown
iteratively around a quadratic shape set.  The shape can be the unit sphere
or an ellipsoid fitted to fault-trajectory data, which steers the estimate
toward the states the disturbance actually visits and tightens the resulting
critical-clearing-time bound.
"""

from .poly import Polynomial, lie_derivative, monomial_basis, render
from .sdp import SdpError, SdpProblem, SdpSolution
from .sdp import solve as solve_sdp
from .sos import SosProgram, SosProgramError
from .powersys import (NetworkData, PolySystem, PowerSystemError,
                       electrical_power, find_sep, inverse_transform,
                       load_config, swing_rhs, to_polynomial_system,
                       transform, transform_trajectory)
from .sim import (CctUpperBoundError, FaultScenario, SimError, Trajectory,
                  converges_to_sep, integrate, run_scenario, true_cct)
from .shaping import (EllipsoidShape, ShapingError, assemble_shape_matrix,
                      load_shape, pca_raw, save_shape, shape_from_trajectory,
                      shape_to_polynomial, sphere_shape)
from .roa import (CctReport, RoaError, RoaEstimate, RoaOptions, bisect_max,
                  estimate_roa, expand_interior, initial_lyapunov,
                  load_estimate, lyapunov_cct, max_level_set, save_estimate)

__version__ = "0.1.0"
