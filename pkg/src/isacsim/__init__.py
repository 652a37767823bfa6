"""Radar, OFDM communication and integrated sensing-and-communication toolkit."""

__version__ = "0.1.0"

from .signal_core import ChannelMatrix, ComplexSignal, LinearGaussianModel, RngStream, add_awgn, build_toeplitz, convolve  # noqa: E402
from .scenario import Scenario, ScenarioError, load_scenario  # noqa: E402

__all__ = [
    "__version__",
    "ChannelMatrix",
    "ComplexSignal",
    "LinearGaussianModel",
    "RngStream",
    "add_awgn",
    "build_toeplitz",
    "convolve",
    "Scenario",
    "ScenarioError",
    "load_scenario",
]
