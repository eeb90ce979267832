"""N-function calculus, phi-Laplacian solvers and numerical checks of
De Giorgi type gradient bounds."""
from .errors import *  # noqa: F401,F403
from .nfunction import (NFunction, Power, PowerLog, Tabulated, Shifted, Psi, parse_nfunction,
                        phi, phi_star, delta2_estimate, young_gap, luxemburg_norm,
                        shifted_props, psi_props)
from .tensor_maps import A_map, V_map, jacobian_A, equivalence_scan, segment_integral
from .fields import UniformGrid, VectorField, SpaceTimeField, Ball, Cube, Cylinder
from .solvers import SolveConfig, solve_elliptic, solve_parabolic

__version__ = "0.1.0"
