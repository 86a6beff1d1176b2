"""Batch analytics for urban environmental sensor networks: pre-processing,
ARX forecasting with bootstrap prediction bands, interpolated maps and WKT
output."""

from .model import (
    AnalyticalRecord,
    MapGridSpec,
    PipelineConfig,
    RawReading,
    SensorMeta,
    StressorKind,
    load_config,
    validate_config,
)
from .pipeline import RunReport, run_batch, validate_forecasting, validate_maps

__all__ = [
    "AnalyticalRecord",
    "MapGridSpec",
    "PipelineConfig",
    "RawReading",
    "RunReport",
    "SensorMeta",
    "StressorKind",
    "load_config",
    "run_batch",
    "validate_config",
    "validate_forecasting",
    "validate_maps",
]

__version__ = "0.1.0"
