"""Noise lattice, implicit integrator and ensemble simulation."""

from .ensemble import Ensemble, PullbackResult, jackknife_mean, pullback, second_moment
from .integrator import (
    Companion,
    IntegratorConfig,
    NewtonBacktracking,
    PicardRelaxation,
    StepKernel,
    Trajectory,
    simulate,
    step,
)
from .noise import NoiseLattice, checksum

__all__ = [
    "Companion",
    "Ensemble",
    "IntegratorConfig",
    "NewtonBacktracking",
    "NoiseLattice",
    "PicardRelaxation",
    "PullbackResult",
    "StepKernel",
    "Trajectory",
    "checksum",
    "jackknife_mean",
    "pullback",
    "second_moment",
    "simulate",
    "step",
]
