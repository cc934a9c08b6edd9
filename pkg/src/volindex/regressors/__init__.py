from .base import LocalAffine, RegressionModel, ZeroModel
from .fnn import FnnModel, FnnTrainConfig, fit_fnn, loss_and_gradients
from .forest import ForestModel, fit_forest
from .linear import LinearModel, fit_ols, fit_ridge

__all__ = [
    "FnnModel", "FnnTrainConfig", "ForestModel", "LinearModel", "LocalAffine",
    "RegressionModel", "ZeroModel", "fit_fnn", "fit_forest", "fit_ols",
    "fit_ridge", "loss_and_gradients",
]
