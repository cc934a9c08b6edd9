import numpy as np
import pytest

from volindex.errors import VolindexError
from volindex.feature_pipeline import FeatureConfig, Normalizer
from volindex.persistence import ModelBundle, load_bundle, save_bundle
from volindex.regressors import (
    FnnTrainConfig,
    ZeroModel,
    fit_fnn,
    fit_forest,
    fit_ridge,
)
from volindex.targets import REG_II


def make_bundle(model, d):
    return ModelBundle(
        algorithm="x", mode=REG_II, horizon_days=30, fold=2,
        feature_config=FeatureConfig(horizon_days=30,
                                     strikes_per_side=(d - 1) // 2),
        normalizer=Normalizer(mean=np.linspace(0, 1, d),
                              std=np.linspace(1, 2, d)),
        model=model)


@pytest.mark.parametrize("kind", ["ridge", "fnn", "forest", "zero"])
def test_round_trip_preserves_predictions(tmp_path, kind):
    rng = np.random.default_rng(3)
    d = 5
    X = rng.standard_normal((60, d))
    y = rng.uniform(0.0, 1.0, 60)
    if kind == "ridge":
        model = fit_ridge(X, y, 2.0)
    elif kind == "fnn":
        model = fit_fnn(X, y, 1e-2, FnnTrainConfig(epochs=30, seed=1,
                                                   shift_targets=True))
    elif kind == "forest":
        model = fit_forest(X, y, max_depth=4, n_trees=3, seed=2)
    else:
        model = ZeroModel(n_features=d)

    path = tmp_path / "model.json"
    save_bundle(make_bundle(model, d), path)
    back = load_bundle(path)
    probes = rng.standard_normal((40, d))
    assert np.array_equal(back.model.predict(probes), model.predict(probes))
    assert back.mode == REG_II
    assert back.fold == 2
    assert back.feature_config.strikes_per_side == (d - 1) // 2
    assert np.array_equal(back.normalizer.mean, np.linspace(0, 1, d))


def test_saved_file_is_deterministic(tmp_path):
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 3))
    model = fit_ridge(X, rng.uniform(0, 1, 30), 1.0)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_bundle(make_bundle(model, 3), p1)
    save_bundle(make_bundle(model, 3), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_format_tag_is_checked(tmp_path):
    path = tmp_path / "bogus.json"
    path.write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(VolindexError, match="not a"):
        load_bundle(path)


def test_version_is_checked(tmp_path):
    path = tmp_path / "bogus.json"
    path.write_text('{"format": "volindex-model-bundle", "version": 99}')
    with pytest.raises(VolindexError, match="version"):
        load_bundle(path)
