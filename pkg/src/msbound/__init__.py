"""Bounded-input stabilization of marginally stable plants over noisy control channels."""

from .model import OrthBlock, State, SystemModel, build_orthogonal, compose, validate
from .noise import (
    BurstBernoulli,
    ChannelStats,
    Gaussian,
    IsotropicUniform,
    PerComponentIID,
    ZeroNoise,
    channel_stats,
    process_bounds,
)
from .policy import SaturatedDeadbeatPolicy, check_burst, check_general, sat
from .reachability import ReachabilityData, build
from .sim import SimScenario, boundedness_verdict, drift_check, monte_carlo_moments

__version__ = "0.1.0"

__all__ = [
    "BurstBernoulli", "ChannelStats", "Gaussian", "IsotropicUniform", "OrthBlock",
    "PerComponentIID", "ReachabilityData", "SaturatedDeadbeatPolicy", "SimScenario",
    "State", "SystemModel", "ZeroNoise", "boundedness_verdict", "build", "build_orthogonal",
    "channel_stats", "check_burst", "check_general", "compose", "drift_check",
    "monte_carlo_moments", "process_bounds", "sat", "validate", "__version__",
]
