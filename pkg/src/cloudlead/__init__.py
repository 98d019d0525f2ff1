"""Detector-network selection and convolutional solar forecasting on multi-site irradiance."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import CloudleadError, ConfigError, DataError, Dataset, SiteMeta  # noqa: E402

__all__ = ["CloudleadError", "ConfigError", "DataError", "Dataset", "SiteMeta", "__version__"]
