"""Volatility indexing engine: option-implied variance forecasting with
tradable, piecewise-linear models."""

__version__ = "0.1.0"
