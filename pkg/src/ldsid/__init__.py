"""Learning linear time-invariant dynamical systems by projected SGD.

Submodules: ``poly`` (polynomial machinery), ``lds`` (state space,
simulation, transfer functions), ``acq`` (constraint sets and projection),
``risk`` (risk functionals and probes), ``learn`` (gradients and training),
``gen`` (synthetic teachers and data), ``cli`` (experiment harness).
"""

from .acq import AcqPolytope, Cone, DEFAULT_CONE, build_polytope, is_acquiescent, project
from .gen import GenSpec, random_acquiescent, sample_trajectories
from .lds import SystemParams, Trajectory, TransferFunction, impulse_response, simulate
from .learn import SgdConfig, backprop_gradient, sgd_train
from .poly import Polynomial, char_poly
from .risk import (
    empirical_partial_loss,
    idealized_risk_freq,
    idealized_risk_time,
    population_risk_closed,
)

__all__ = [
    "AcqPolytope",
    "Cone",
    "DEFAULT_CONE",
    "GenSpec",
    "Polynomial",
    "SgdConfig",
    "SystemParams",
    "Trajectory",
    "TransferFunction",
    "backprop_gradient",
    "build_polytope",
    "char_poly",
    "empirical_partial_loss",
    "idealized_risk_freq",
    "idealized_risk_time",
    "impulse_response",
    "is_acquiescent",
    "population_risk_closed",
    "project",
    "random_acquiescent",
    "sample_trajectories",
    "sgd_train",
    "simulate",
]

__version__ = "0.1.0"
