"""
Nearby-orbit semiclassical propagation of squeezed coherent states, with the
Gaussian/metaplectic calculus it rests on, a split-step reference solver and
the phase-space (wave-packet transform) representation.
"""

__version__ = "0.1.0"

from .flows import HamiltonianModel, Trajectory, builtin, flow, variational_flow
from .gaussians import (
    SqueezedState,
    coherent_overlap,
    gaussian_inner,
    wigner,
    wigner_moyal_cross,
)
from .grid import GridField
from .metaplectic import MetaplecticElement, alpha, apply_to_gaussian, weyl_apply
from .phase_space import (
    PhaseSpaceField,
    WindowFunction,
    ps_coherent,
    ps_reconstruct,
    s_ph_apply,
    t_ph,
    u_ph_propagate,
    wavepacket_transform,
)
from .propagator import error_vs_reference, propagate_coherent, propagate_general
from .reference import SplitStepConfig, split_step
from .symplectic import SymplecticMatrix, cayley_transform, generating_function_of, is_symplectic

__all__ = [
    "GridField",
    "HamiltonianModel",
    "MetaplecticElement",
    "PhaseSpaceField",
    "SplitStepConfig",
    "SqueezedState",
    "SymplecticMatrix",
    "Trajectory",
    "WindowFunction",
    "alpha",
    "apply_to_gaussian",
    "builtin",
    "cayley_transform",
    "coherent_overlap",
    "error_vs_reference",
    "flow",
    "gaussian_inner",
    "generating_function_of",
    "is_symplectic",
    "propagate_coherent",
    "propagate_general",
    "ps_coherent",
    "ps_reconstruct",
    "s_ph_apply",
    "split_step",
    "t_ph",
    "u_ph_propagate",
    "variational_flow",
    "wavepacket_transform",
    "weyl_apply",
    "wigner",
    "wigner_moyal_cross",
]
