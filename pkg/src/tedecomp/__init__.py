"""Transfer entropy measurement and decomposition via distributed
information bottlenecks, with an exact discrete oracle for validation."""

from . import autodiff, boolnet, decomposer, discrete_info, ib_core, series

__all__ = ["autodiff", "boolnet", "decomposer", "discrete_info", "ib_core", "series"]
__version__ = "0.1.0"
