"""State observers built from parameter estimation (GPEBO).

The observer reconstructs the unmeasured state of a plant by estimating the
constant initial condition of a linear time-varying error system. Three
worked systems are included: a cubic oscillator, a multimachine power grid
and an anaerobic digester.
"""
from .kernels import BACKEND
from .numerics import DimensionError, IntegrationError, TimeGrid, adjugate, determinant, rk4_step
from .observer import ObserverConfig, ObserverState, PlantMaps, observer_init, observer_step

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DimensionError", "IntegrationError", "ObserverConfig", "ObserverState", "PlantMaps",
    "TimeGrid", "adjugate", "determinant", "observer_init", "observer_step", "rk4_step",
]
