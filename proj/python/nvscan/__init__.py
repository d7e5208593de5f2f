"""Scanning NV magnetometry with three-frequency tracking."""

from ._core import (
    ConfigError,
    Error,
    FitError,
    ParseError,
    TrackingLoss,
    __version__,
    config_json,
    field_to_frequency,
    fit_spectrum,
    frequency_to_field,
    kernel,
    lineshape_value,
    load_grid,
    reconstruct,
    reference_config,
    save_grid,
    simulate,
    wide_range_config,
)

__all__ = [
    "ConfigError",
    "Error",
    "FitError",
    "ParseError",
    "TrackingLoss",
    "__version__",
    "config_json",
    "field_to_frequency",
    "fit_spectrum",
    "frequency_to_field",
    "kernel",
    "lineshape_value",
    "load_grid",
    "reconstruct",
    "reference_config",
    "save_grid",
    "simulate",
    "wide_range_config",
]
