"""Random hard-sphere gas: particle simulation, kinetic checks and dense-gas hydrodynamics."""

__version__ = "0.1.0"

from .geometry import Box3, ContactParams, collide, collide_coords, min_image, mollifier, mollifier_cdf
from .dynamics import BACKEND, ParticleSet, PairEvent, SimConfig, init_state, pair_intensity, run, run_ensemble, step
from .characteristics import CharacteristicProblem, traverse_full, traverse_full_rk4, traverse_inward
from .hydro import HydroState1D, TransportCoeffs, advance, coeffs, euler_rhs, ns_rhs, riemann_exact_dilute
from .moments import HydroPoint, MomentReport, verify_identity, verify_newton_fourier

__all__ = [
    "__version__", "BACKEND",
    "Box3", "ContactParams", "collide", "collide_coords", "min_image", "mollifier", "mollifier_cdf",
    "ParticleSet", "PairEvent", "SimConfig", "init_state", "pair_intensity", "run", "run_ensemble", "step",
    "CharacteristicProblem", "traverse_full", "traverse_full_rk4", "traverse_inward",
    "HydroState1D", "TransportCoeffs", "advance", "coeffs", "euler_rhs", "ns_rhs", "riemann_exact_dilute",
    "HydroPoint", "MomentReport", "verify_identity", "verify_newton_fourier",
]
