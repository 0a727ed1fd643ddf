"""Uplink simulator and closed-form rate analysis for multi-cell massive
MIMO with transceiver hardware imperfections (phase drift, additive
distortion noise, noise amplification)."""

__version__ = "0.1.0"

from .config import (ConfigError, Dimensions, HardwareProfile, NetworkStats,
                     PilotBook, ScalingExponents, build_pilot_book, validate)
from .estimation import (ChannelEstimate, EstimatorContext, estimate_all,
                         lmmse_estimate, phase_decay, pilot_block_covariance,
                         pilot_gram)
from .montecarlo import (EmpiricalMoments, EmpiricalSinr, NetworkRates,
                         TrialPlan, approx_mmse_filter, empirical_network_rates,
                         empirical_sinr)
from .rates import (MrcMoments, SinrReport, apply_scaling, ergodic_rate,
                    mrc_moments, mrc_sinr, mrc_sinr_report, mrc_sinr_vs_antennas,
                    rate_from_sinr_samples, scaling_law_holds, sinr_asymptotic,
                    sinr_closed_form)
from .scenario import (Scenario, Topology, build_scenario, drop_users,
                       pathloss, wrap_distance)
from .synth import (Realization, draw_channels, draw_phase_trajectories,
                    received_block, trial_stream)

__all__ = [
    "ChannelEstimate", "ConfigError", "Dimensions", "EmpiricalMoments",
    "EmpiricalSinr", "EstimatorContext", "HardwareProfile", "MrcMoments",
    "NetworkRates", "NetworkStats", "PilotBook", "Realization", "Scenario",
    "ScalingExponents", "SinrReport", "Topology", "TrialPlan",
    "apply_scaling", "approx_mmse_filter", "build_pilot_book",
    "build_scenario", "draw_channels", "draw_phase_trajectories",
    "drop_users", "empirical_network_rates", "empirical_sinr",
    "ergodic_rate", "estimate_all", "lmmse_estimate", "mrc_moments",
    "mrc_sinr", "mrc_sinr_report", "mrc_sinr_vs_antennas", "pathloss",
    "phase_decay", "pilot_block_covariance", "pilot_gram",
    "rate_from_sinr_samples", "received_block", "scaling_law_holds",
    "sinr_asymptotic", "sinr_closed_form", "trial_stream", "validate",
    "wrap_distance",
]
