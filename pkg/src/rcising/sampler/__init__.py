"""Markov-chain sampling of single and double parity currents."""

from .core import (  # noqa: F401
    ChainConfig,
    EstimateRecord,
    GraphArrays,
    Worm,
    WormState,
    estimate_ghost_avoid,
    estimate_truncated,
    estimate_two_point,
    sample_double_current,
    sample_parity_current,
    two_point_series,
)
from .avoid import AvoidingChain, Ladder, Profile, run_rung, truncated_ladder, truncated_profile  # noqa: F401
from .stats import Moments, jackknife, mean_estimate, ratio_estimate  # noqa: F401
