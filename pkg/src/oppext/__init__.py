"""Simulation and verification toolkit for extremes of Oppenheim-type digit expansions."""

__version__ = "0.1.0"

from .dist import DistributionSpec, check_mda_conditions, estimate_tail_limits  # noqa: E402
from .engine import OppenheimSystem, preset, sample_path, simulate_ratios  # noqa: E402

__all__ = ["DistributionSpec", "OppenheimSystem", "check_mda_conditions",
           "estimate_tail_limits", "preset", "sample_path", "simulate_ratios", "__version__"]
