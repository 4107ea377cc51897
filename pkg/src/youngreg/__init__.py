"""Numerics for additively perturbed multiplicative SDEs driven by fractional
Brownian motion: averaged fields, nonlinear Young equations, and uniqueness
experiments."""

__version__ = "0.1.0"

from .paths import FbmSpec, SampledPath, TimeGrid, gen_fbm, holder_seminorm
from .fields import FourierSeries, Mollified, PowerLaw, Smooth, mollify
from .averaging import (
    AveragedField,
    SpaceGrid,
    compute_Gamma,
    compute_T,
    compute_T_via_occupation,
    compute_occupation,
)
from .yde import SolveConfig, probe_uniqueness, solve_classical_young_sde, solve_sde, solve_yde
from .young import young_integral

__all__ = [
    "FbmSpec", "SampledPath", "TimeGrid", "gen_fbm", "holder_seminorm",
    "FourierSeries", "Mollified", "PowerLaw", "Smooth", "mollify",
    "AveragedField", "SpaceGrid", "compute_Gamma", "compute_T",
    "compute_T_via_occupation", "compute_occupation",
    "SolveConfig", "probe_uniqueness", "solve_classical_young_sde",
    "solve_sde", "solve_yde", "young_integral",
]
