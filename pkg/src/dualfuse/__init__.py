"""Dual-antenna GPS/IMU fusion with an adaptive error-state Kalman filter."""

from .ekf import FilterConfig, FilterState, initialize, new_filter, propagate, update
from .errors import (
    DivergenceError,
    DualFuseError,
    InitializationError,
    InvalidArgumentError,
    MissingDataError,
    ParseError,
)
from .models import GpsFix, ImuSample, NoiseSpec, SensorGeometry, StateEstimate
from .pipeline import RunReport, Scenario, monte_carlo, run_filter, run_scenario

__all__ = [
    "DivergenceError",
    "DualFuseError",
    "FilterConfig",
    "FilterState",
    "GpsFix",
    "ImuSample",
    "InitializationError",
    "InvalidArgumentError",
    "MissingDataError",
    "NoiseSpec",
    "ParseError",
    "RunReport",
    "Scenario",
    "SensorGeometry",
    "StateEstimate",
    "initialize",
    "monte_carlo",
    "new_filter",
    "propagate",
    "run_filter",
    "run_scenario",
    "update",
]
