"""Halting states, optimal stopping times and cutoff diagnostics for finite Markov chains."""

from .bd_spectral import (
    BirthDeathChain,
    HittingMoments,
    bd_spectrum,
    hitting_moments_absorbing,
    hitting_moments_direct,
    hitting_moments_spectral,
)
from .chain_core import ChainError, DiscreteChain, evolve, separation, tv_distance, tv_series
from .ctime import Generator, ct_marginal, ct_tv_curve, skeleton_survival
from .cutoff import CutoffReport, cutoff_bd, cutoff_general, cutoff_symmetric
from .simulate import SimConfig, sample_hitting, sample_stopping_time, sample_trajectory
from .stopping import (
    HaltingVerdict,
    StoppingSchedule,
    build_schedule,
    halting_set_M,
    smallest_halting_state,
    sst_schedule,
    verify_halting_state,
)

__all__ = [
    "BirthDeathChain",
    "ChainError",
    "CutoffReport",
    "DiscreteChain",
    "Generator",
    "HaltingVerdict",
    "HittingMoments",
    "SimConfig",
    "StoppingSchedule",
    "bd_spectrum",
    "build_schedule",
    "ct_marginal",
    "ct_tv_curve",
    "cutoff_bd",
    "cutoff_general",
    "cutoff_symmetric",
    "evolve",
    "halting_set_M",
    "hitting_moments_absorbing",
    "hitting_moments_direct",
    "hitting_moments_spectral",
    "sample_hitting",
    "sample_stopping_time",
    "sample_trajectory",
    "separation",
    "skeleton_survival",
    "smallest_halting_state",
    "sst_schedule",
    "tv_distance",
    "tv_series",
    "verify_halting_state",
]
