"""Ordinary least squares and ridge regression, closed form.

OLS goes through a QR factorization rather than the normal equations: the
option features are strongly correlated and squaring the design matrix would
double the loss of precision.  Ridge solves the regularized normal equations
on centered data, leaving the intercept unpenalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError, RankDeficientError
from .base import LocalAffine, RegressionModel


@dataclass
class LinearModel(RegressionModel):
    coefficients: np.ndarray
    intercept: float
    ridge_lambda: float = 0.0

    @property
    def n_features(self) -> int:
        return len(self.coefficients)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.coefficients + self.intercept

    def local_affine(self, x: np.ndarray) -> LocalAffine:
        self._check_dim(x)
        return LocalAffine(coefficients=self.coefficients.copy(),
                           constant=self.intercept)


def fit_ols(X: np.ndarray, y: np.ndarray) -> LinearModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n <= d:
        raise InsufficientDataError(f"need more rows ({n}) than features ({d})")
    design = np.column_stack([np.ones(n), X])
    q, r = np.linalg.qr(design, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.min() <= diag.max() * 1e-10:
        raise RankDeficientError(
            "design matrix is rank deficient; use ridge for collinear features")
    beta = np.linalg.solve(r, q.T @ y)
    return LinearModel(coefficients=beta[1:], intercept=float(beta[0]),
                       ridge_lambda=0.0)


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float) -> LinearModel:
    """Minimize sum of squared residuals + lam * ||beta||^2, intercept free."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    xc = X - x_mean
    gram = xc.T @ xc + lam * np.eye(X.shape[1])
    beta = np.linalg.solve(gram, xc.T @ (y - y_mean))
    return LinearModel(coefficients=beta,
                       intercept=float(y_mean - x_mean @ beta),
                       ridge_lambda=float(lam))
