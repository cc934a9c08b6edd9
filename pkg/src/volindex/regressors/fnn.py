"""Single-hidden-layer feedforward network with ReLU on both the hidden and
output layers, trained by mini-batch gradient descent with backpropagation.

The hidden width equals the input width.  The double ReLU keeps the model
continuous and piecewise affine in its inputs, which is the property the
portfolio construction relies on; the exact affine coefficients on the
region containing a query point fall out of the active-unit pattern.

The output ReLU clamps negative predictions to zero, which is harmless for
nonnegative targets but fatal for signed ones.  For those, fitting can shift
targets by their training minimum and shift predictions back, preserving
piecewise linearity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError
from .base import LocalAffine, RegressionModel


@dataclass
class FnnTrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int | np.random.SeedSequence = 0
    shift_targets: bool = False
    # output-layer init is scaled down so the initial prediction stays near
    # the output bias: full-scale symmetric init swamps it and the output
    # ReLU dies before learning starts (clamped points get zero gradient)
    output_init_scale: float = 0.1


@dataclass
class FnnModel(RegressionModel):
    w1: np.ndarray  # (H, D) hidden weights
    b1: np.ndarray  # (H,) hidden biases
    w2: np.ndarray  # (H,) output weights
    b2: float
    ridge_lambda: float = 0.0
    output_shift: float = 0.0
    final_loss: float = float("nan")
    epochs_run: int = 0

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        hidden = np.maximum(X @ self.w1.T + self.b1, 0.0)
        out = np.maximum(hidden @ self.w2 + self.b2, 0.0)
        return out + self.output_shift

    def activation_pattern(self, x: np.ndarray) -> tuple:
        x = self._check_dim(x)
        z1 = self.w1 @ x + self.b1
        hidden_on = z1 > 0.0
        z2 = float(np.maximum(z1, 0.0) @ self.w2 + self.b2)
        return (tuple(bool(v) for v in hidden_on), z2 > 0.0)

    def local_affine(self, x: np.ndarray) -> LocalAffine:
        x = self._check_dim(x)
        hidden_on, output_on = self.activation_pattern(x)
        gates = np.asarray(hidden_on, dtype=float)
        if output_on:
            coeffs = (self.w2 * gates) @ self.w1
            const = float((self.w2 * gates) @ self.b1 + self.b2) + self.output_shift
        else:
            coeffs = np.zeros(self.n_features)
            const = self.output_shift
        return LocalAffine(coefficients=coeffs, constant=const,
                           activation_pattern=(hidden_on, output_on))


def loss_and_gradients(model: FnnModel, X: np.ndarray, y: np.ndarray,
                       lam: float) -> tuple[float, dict[str, np.ndarray]]:
    """Penalized MSE and its exact gradients at the model's current weights.

    The ReLU subgradient at exactly zero is taken to be zero, matching the
    strict > 0 gates used by the activation pattern.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = len(y)
    z1 = X @ model.w1.T + model.b1
    h = np.maximum(z1, 0.0)
    z2 = h @ model.w2 + model.b2
    out = np.maximum(z2, 0.0)
    err = out - (y - model.output_shift)
    mse = float(err @ err) / n
    penalty = lam * (float(np.sum(model.w1 ** 2)) + float(model.w2 @ model.w2))

    dout = 2.0 * err / n
    dz2 = dout * (z2 > 0.0)
    grad_w2 = h.T @ dz2 + 2.0 * lam * model.w2
    grad_b2 = float(dz2.sum())
    dh = np.outer(dz2, model.w2)
    dz1 = dh * (z1 > 0.0)
    grad_w1 = dz1.T @ X + 2.0 * lam * model.w1
    grad_b1 = dz1.sum(axis=0)
    return mse + penalty, {"w1": grad_w1, "b1": grad_b1,
                           "w2": grad_w2, "b2": grad_b2}


def fit_fnn(X: np.ndarray, y: np.ndarray, lam: float,
            train_cfg: FnnTrainConfig | None = None) -> FnnModel:
    """Mini-batch gradient descent on MSE + lam * (sum of squared connection
    weights); biases are unpenalized.  Deterministic given the seed."""
    cfg = train_cfg or FnnTrainConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    rng = np.random.default_rng(cfg.seed)

    shift = float(y.min()) if cfg.shift_targets else 0.0

    bound1 = np.sqrt(6.0 / (d + d))
    bound2 = cfg.output_init_scale * np.sqrt(6.0 / (d + 1))
    model = FnnModel(
        w1=rng.uniform(-bound1, bound1, size=(d, d)),
        b1=np.zeros(d),
        w2=rng.uniform(-bound2, bound2, size=d),
        b2=float(np.mean(y - shift)),  # start the output alive, at the target level
        ridge_lambda=float(lam),
        output_shift=shift,
    )

    batch = min(cfg.batch_size, n)  # tiny folds degrade to full-batch steps
    # the decay term alone has curvature 2*lam: steps above 1/(2*lam) oscillate
    # and blow up at the heavy end of the regularization grid
    lr = cfg.learning_rate if lam <= 0 else min(cfg.learning_rate, 0.5 / (2.0 * lam))
    last_loss = float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sse = 0.0
        for start in range(0, n, batch):
            idx = order[start: start + batch]
            loss, grads = loss_and_gradients(model, X[idx], y[idx], lam)
            sse += loss * len(idx)
            model.w1 -= lr * grads["w1"]
            model.b1 -= lr * grads["b1"]
            model.w2 -= lr * grads["w2"]
            model.b2 -= lr * grads["b2"]
        last_loss = sse / n
        if not np.isfinite(last_loss):
            raise TrainingDivergedError(epoch, last_loss)
    model.final_loss = last_loss
    model.epochs_run = cfg.epochs
    return model
