"""Flat JSON serialization for fitted models and their fold context.

A bundle carries everything needed to turn a saved model back into portfolio
weights on a fresh chain: the model weights, the feature configuration, the
fold's normalizer statistics, the mode, and the horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import VolindexError
from .feature_pipeline import FeatureConfig, Normalizer
from .regressors import FnnModel, ForestModel, LinearModel, RegressionModel, ZeroModel
from .regressors.forest import _TreeNodes

FORMAT_TAG = "volindex-model-bundle"
FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    algorithm: str
    mode: str
    horizon_days: int
    fold: int
    feature_config: FeatureConfig
    normalizer: Normalizer
    model: RegressionModel


def _encode_model(model: RegressionModel) -> dict:
    if isinstance(model, LinearModel):
        return {"kind": "linear", "coefficients": model.coefficients.tolist(),
                "intercept": model.intercept, "ridge_lambda": model.ridge_lambda}
    if isinstance(model, FnnModel):
        return {"kind": "fnn", "w1": model.w1.tolist(), "b1": model.b1.tolist(),
                "w2": model.w2.tolist(), "b2": model.b2,
                "ridge_lambda": model.ridge_lambda,
                "output_shift": model.output_shift}
    if isinstance(model, ForestModel):
        return {"kind": "forest",
                "max_depth": model.max_depth, "n_trees": model.n_trees,
                "n_features": model.n_features,
                "train_target_range": list(model.train_target_range),
                "trees": [{
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(), "right": t.right.tolist(),
                    "value": t.value.tolist(),
                } for t in model.trees]}
    if isinstance(model, ZeroModel):
        return {"kind": "zero", "n_features": model.n_features}
    raise VolindexError(f"cannot serialize model type {type(model).__name__}")


def _decode_model(data: dict) -> RegressionModel:
    kind = data["kind"]
    if kind == "linear":
        return LinearModel(coefficients=np.asarray(data["coefficients"]),
                           intercept=data["intercept"],
                           ridge_lambda=data["ridge_lambda"])
    if kind == "fnn":
        return FnnModel(w1=np.asarray(data["w1"]), b1=np.asarray(data["b1"]),
                        w2=np.asarray(data["w2"]), b2=data["b2"],
                        ridge_lambda=data["ridge_lambda"],
                        output_shift=data["output_shift"])
    if kind == "forest":
        trees = [_TreeNodes(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"]),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            value=np.asarray(t["value"]),
        ) for t in data["trees"]]
        return ForestModel(trees=trees, max_depth=data["max_depth"],
                           n_trees=data["n_trees"], seed=-1, bootstrap=True,
                           train_target_range=tuple(data["train_target_range"]),
                           n_features=data["n_features"])
    if kind == "zero":
        return ZeroModel(n_features=data["n_features"])
    raise VolindexError(f"unknown model kind {kind!r}")


def save_bundle(bundle: ModelBundle, path: str | Path):
    fc = bundle.feature_config
    payload = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "algorithm": bundle.algorithm,
        "mode": bundle.mode,
        "horizon_days": bundle.horizon_days,
        "fold": bundle.fold,
        "feature_config": {
            "horizon_days": fc.horizon_days,
            "strikes_per_side": fc.strikes_per_side,
            "strike_step": fc.strike_step,
            "include_returns_features": fc.include_returns_features,
            "return_lookbacks": list(fc.return_lookbacks),
            "variance_lookbacks": list(fc.variance_lookbacks),
            "base_spacing": fc.base_spacing,
        },
        "normalizer": {"mean": bundle.normalizer.mean.tolist(),
                       "std": bundle.normalizer.std.tolist()},
        "model": _encode_model(bundle.model),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bundle(path: str | Path) -> ModelBundle:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT_TAG:
        raise VolindexError(f"{path}: not a {FORMAT_TAG} file")
    if payload.get("version") != FORMAT_VERSION:
        raise VolindexError(f"{path}: unsupported version {payload.get('version')}")
    fc_raw = payload["feature_config"]
    cfg = FeatureConfig(
        horizon_days=fc_raw["horizon_days"],
        strikes_per_side=fc_raw["strikes_per_side"],
        strike_step=fc_raw["strike_step"],
        include_returns_features=fc_raw["include_returns_features"],
        return_lookbacks=tuple(fc_raw["return_lookbacks"]),
        variance_lookbacks=tuple(fc_raw["variance_lookbacks"]),
        base_spacing=fc_raw["base_spacing"],
    )
    norm = Normalizer(mean=np.asarray(payload["normalizer"]["mean"]),
                      std=np.asarray(payload["normalizer"]["std"]))
    return ModelBundle(algorithm=payload["algorithm"], mode=payload["mode"],
                       horizon_days=payload["horizon_days"],
                       fold=payload["fold"], feature_config=cfg,
                       normalizer=norm, model=_decode_model(payload["model"]))
