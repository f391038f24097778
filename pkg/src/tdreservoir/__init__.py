"""Behavioral simulator of a CMOS time-domain spiking-neuron reservoir."""

__version__ = "0.1.0"

from ._engine import BACKENDS, DEFAULT_BACKEND
from .neuron import CurveParams, default_curves
from .reservoir import GridTopology, Reservoir, ReservoirConfig, build_reservoir

__all__ = [
    "__version__",
    "BACKENDS",
    "DEFAULT_BACKEND",
    "CurveParams",
    "default_curves",
    "GridTopology",
    "Reservoir",
    "ReservoirConfig",
    "build_reservoir",
]
