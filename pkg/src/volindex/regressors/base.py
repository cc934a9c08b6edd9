"""Shared regressor interface: fit elsewhere, predict here, and expose exact
local affine coefficients where the model is piecewise linear."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NotPiecewiseLinearError


@dataclass
class LocalAffine:
    """Affine coefficients valid on the model's linear region containing the
    query point, with the activation pattern as the validity certificate."""

    coefficients: np.ndarray
    constant: float
    activation_pattern: tuple | None = None  # None: globally affine

    def apply(self, x: np.ndarray) -> float:
        return float(self.coefficients @ np.asarray(x, dtype=float) + self.constant)


class RegressionModel:
    """Base contract: predict on rows, optionally linearize at a point."""

    n_features: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_one(self, x: np.ndarray) -> float:
        return float(self.predict(np.asarray(x, dtype=float)[None, :])[0])

    def local_affine(self, x: np.ndarray) -> LocalAffine:
        raise NotPiecewiseLinearError(
            f"{type(self).__name__} has no local affine representation")

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise ValueError(
                f"expected {self.n_features} features, got shape {x.shape}")
        return x


class ZeroModel(RegressionModel):
    """Predicts 0 everywhere; the degenerate algorithm behind the benchmark
    column (deviation mode with a zero model is the raw index forecast)."""

    def __init__(self, n_features: int):
        self.n_features = n_features

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.zeros(X.shape[0])

    def local_affine(self, x: np.ndarray) -> LocalAffine:
        x = self._check_dim(x)
        return LocalAffine(coefficients=np.zeros(self.n_features), constant=0.0)
