"""Rolling out-of-sample protocol: expanding train window, fixed-step
retraining, purging of observations whose target windows overlap the test
block, per-fold hyperparameter selection, and pooled OOS R^2.

Hyperparameters are chosen per fold on an inner chronological split of the
training rows (first 80% fit, last 20% evaluate, purged by the horizon),
ties breaking toward stronger regularization.  Deviation-mode predictions
are converted back to variance by adding the day's squared index value
before any scoring, so both modes are scored on identical pairs.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import InsufficientDataError, VolindexError
from .feature_pipeline import (
    DatasetBuild,
    FeatureConfig,
    FeatureRow,
    VixStarTerms,
    apply_normalizer,
    fit_normalizer,
)
from .index_builder import PortfolioWeights, daily_weights, replication_check
from .regressors import (
    FnnTrainConfig,
    RegressionModel,
    ZeroModel,
    fit_fnn,
    fit_forest,
    fit_ols,
    fit_ridge,
)
from .targets import REG_I, REG_II, TargetRow

LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e2, 1e3, 1e4)
DEPTH_GRID = (3, 5, 10, None)  # None = unbounded

ALGORITHMS = ("benchmark", "linear", "ridge", "forest", "fnn")
PIECEWISE_LINEAR = ("benchmark", "linear", "ridge", "fnn")


@dataclass
class FoldPlan:
    fold: int
    train_range: tuple[int, int]  # [start, end) after purging
    purge_range: tuple[int, int]  # tail removed from the train window
    test_range: tuple[int, int]


def rolling_splits(n_obs: int, initial: int = 1000, step: int = 30,
                   purge: int = 0) -> list[FoldPlan]:
    """Expanding-window folds: fold k trains on [0, initial + k*step - purge),
    tests on the next step observations; the final partial fold is included."""
    if n_obs <= initial + step:
        raise InsufficientDataError(
            f"need more than {initial + step} observations, have {n_obs}")
    plans = []
    k = 0
    while initial + k * step < n_obs:
        test_start = initial + k * step
        test_end = min(test_start + step, n_obs)
        train_end = max(0, test_start - purge)
        plans.append(FoldPlan(fold=k, train_range=(0, train_end),
                              purge_range=(train_end, test_start),
                              test_range=(test_start, test_end)))
        k += 1
    return plans


def oos_r2(actuals: np.ndarray, preds: np.ndarray) -> float:
    """1 - SSE/SST against the pooled mean; negative when worse than the mean."""
    actuals = np.asarray(actuals, dtype=float)
    preds = np.asarray(preds, dtype=float)
    if actuals.shape != preds.shape or actuals.ndim != 1:
        raise ValueError("actuals and preds must be equal-length vectors")
    if len(actuals) < 2:
        raise InsufficientDataError("need at least two observations")
    sst = float(np.sum((actuals - actuals.mean()) ** 2))
    if sst == 0.0:
        raise VolindexError("constant actuals: R^2 undefined")
    sse = float(np.sum((actuals - preds) ** 2))
    return 1.0 - sse / sst


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    dates: list[date]
    feature_rows: list[FeatureRow]
    vix_terms: list[VixStarTerms]
    realized_var: np.ndarray  # annualized
    vix_star_sq: np.ndarray
    horizon_days: int
    feature_config: FeatureConfig

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def X(self) -> np.ndarray:
        return np.stack([r.values for r in self.feature_rows])

    @property
    def n_options(self) -> int:
        return self.feature_rows[0].n_option_features if self.feature_rows else 0


def assemble_dataset(build: DatasetBuild, target_rows: list[TargetRow],
                     cfg: FeatureConfig) -> Dataset:
    rows_by_date = {r.date: r for r in build.rows}
    dates, rows, terms, realized, vix_sq = [], [], [], [], []
    for tr in target_rows:
        row = rows_by_date.get(tr.date)
        if row is None:
            continue  # feature build skipped this date
        dates.append(tr.date)
        rows.append(row)
        terms.append(build.vix_terms[tr.date])
        realized.append(tr.realized_var)
        vix_sq.append(tr.vix_star_sq)
    return Dataset(dates=dates, feature_rows=rows, vix_terms=terms,
                   realized_var=np.asarray(realized),
                   vix_star_sq=np.asarray(vix_sq),
                   horizon_days=cfg.horizon_days, feature_config=cfg)


# ---------------------------------------------------------------------------
# Fitting plumbing
# ---------------------------------------------------------------------------

@dataclass
class BacktestConfig:
    initial: int = 1000
    step: int = 30
    seed: int = 0
    jobs: int = 1
    with_weights: bool = True
    fnn: FnnTrainConfig = field(default_factory=FnnTrainConfig)
    fnn_shift_deviation_targets: bool = True  # dodge the output clamp in reg2
    n_trees: int = 100
    lambda_grid: tuple = LAMBDA_GRID
    depth_grid: tuple = DEPTH_GRID
    materiality_threshold: float = 0.0


def grid_for(algorithm: str, cfg: BacktestConfig) -> tuple:
    if algorithm == "ridge" or algorithm == "fnn":
        return cfg.lambda_grid
    if algorithm == "forest":
        return cfg.depth_grid
    return ()  # linear and benchmark have nothing to tune


def _fit(algorithm: str, hyper, X: np.ndarray, y: np.ndarray,
         cfg: BacktestConfig, mode: str,
         seed: np.random.SeedSequence) -> RegressionModel:
    if algorithm == "benchmark":
        return ZeroModel(n_features=X.shape[1])
    if algorithm == "linear":
        return fit_ols(X, y)
    if algorithm == "ridge":
        return fit_ridge(X, y, hyper)
    if algorithm == "forest":
        return fit_forest(X, y, max_depth=hyper, n_trees=cfg.n_trees, seed=seed)
    if algorithm == "fnn":
        shift = cfg.fnn_shift_deviation_targets and mode == REG_II
        train_cfg = FnnTrainConfig(
            epochs=cfg.fnn.epochs, learning_rate=cfg.fnn.learning_rate,
            batch_size=cfg.fnn.batch_size, seed=seed, shift_targets=shift)
        return fit_fnn(X, y, hyper, train_cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _stronger(algorithm: str, a, b) -> bool:
    """True if hyperparameter a regularizes harder than b."""
    if algorithm == "forest":
        if a is None:
            return False
        if b is None:
            return True
        return a < b
    return a > b


def tune(algorithm: str, grid: tuple, dataset: Dataset, train_idx: range,
         mode: str, cfg: BacktestConfig, seed: np.random.SeedSequence):
    """Grid selection on an inner purged chronological split of the train rows."""
    if len(grid) == 0:
        return None
    if len(grid) == 1:
        return grid[0]
    n = len(train_idx)
    split = int(0.8 * n)
    fit_end = max(0, split - dataset.horizon_days)
    fit_idx = train_idx[:fit_end]
    eval_idx = train_idx[split:]
    if len(fit_idx) < 2 or len(eval_idx) < 2:
        raise InsufficientDataError(
            f"train window of {n} rows is too small for inner tuning")
    rows_fit = [dataset.feature_rows[i] for i in fit_idx]
    norm = fit_normalizer(rows_fit)
    x_fit = norm.transform(np.stack([r.values for r in rows_fit]))
    x_eval = norm.transform(np.stack([dataset.feature_rows[i].values for i in eval_idx]))
    y = _targets(dataset, mode)
    y_fit = y[list(fit_idx)]
    actual_eval = dataset.realized_var[list(eval_idx)]

    child_seeds = seed.spawn(len(grid))
    best_value, best_r2 = None, -np.inf
    for hyper, child in zip(grid, child_seeds):
        model = _fit(algorithm, hyper, x_fit, y_fit, cfg, mode, child)
        preds = model.predict(x_eval)
        if mode == REG_II:
            preds = preds + dataset.vix_star_sq[list(eval_idx)]
        r2 = oos_r2(actual_eval, preds)
        if r2 > best_r2 or (r2 == best_r2 and _stronger(algorithm, hyper, best_value)):
            best_value, best_r2 = hyper, r2
    return best_value


def _targets(dataset: Dataset, mode: str) -> np.ndarray:
    if mode == REG_I:
        return dataset.realized_var
    if mode == REG_II:
        return dataset.realized_var - dataset.vix_star_sq
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Backtest driver
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    hyperparam: object
    dates: list[date]
    actuals: np.ndarray  # realized variance
    preds: np.ndarray  # variance scale (deviation already reconstructed)
    model: RegressionModel
    normalizer_mean: np.ndarray
    normalizer_std: np.ndarray
    weights: list[PortfolioWeights]
    replication_residuals: list[float]


@dataclass
class BacktestReport:
    algorithm: str
    mode: str
    horizon_days: int
    n_options: int
    folds: list[FoldResult]
    oos_r2: float

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        actuals = np.concatenate([f.actuals for f in self.folds])
        preds = np.concatenate([f.preds for f in self.folds])
        return actuals, preds

    def all_weights(self) -> list[PortfolioWeights]:
        return [w for f in self.folds for w in f.weights]

    def max_replication_residual(self) -> float:
        residuals = [r for f in self.folds for r in f.replication_residuals]
        return max(residuals) if residuals else 0.0


def _run_fold(dataset: Dataset, algorithm: str, mode: str, cfg: BacktestConfig,
              plan: FoldPlan, fold_seed: np.random.SeedSequence) -> FoldResult:
    try:
        train_idx = range(*plan.train_range)
        test_idx = range(*plan.test_range)
        tune_seed, fit_seed = fold_seed.spawn(2)
        grid = grid_for(algorithm, cfg)
        hyper = tune(algorithm, grid, dataset, train_idx, mode, cfg, tune_seed)

        rows_train = [dataset.feature_rows[i] for i in train_idx]
        norm = fit_normalizer(rows_train)
        x_train = norm.transform(np.stack([r.values for r in rows_train]))
        y = _targets(dataset, mode)
        model = _fit(algorithm, hyper, x_train, y[list(train_idx)], cfg, mode, fit_seed)

        x_test = norm.transform(
            np.stack([dataset.feature_rows[i].values for i in test_idx]))
        raw_preds = model.predict(x_test)
        preds = raw_preds + dataset.vix_star_sq[list(test_idx)] if mode == REG_II \
            else raw_preds

        weights, residuals = [], []
        if cfg.with_weights and algorithm in PIECEWISE_LINEAR \
                and not dataset.feature_config.include_returns_features:
            for j, i in enumerate(test_idx):
                row_n = apply_normalizer(norm, dataset.feature_rows[i])
                pw = daily_weights(model, row_n, mode,
                                   vix_terms=dataset.vix_terms[i])
                check = replication_check(pw, dataset.feature_rows[i].raw_mids,
                                          float(preds[j]))
                weights.append(pw)
                residuals.append(check.residual)

        return FoldResult(
            fold=plan.fold, hyperparam=hyper,
            dates=[dataset.dates[i] for i in test_idx],
            actuals=dataset.realized_var[list(test_idx)],
            preds=np.asarray(preds), model=model,
            normalizer_mean=norm.mean, normalizer_std=norm.std,
            weights=weights, replication_residuals=residuals)
    except VolindexError as exc:
        raise VolindexError(f"fold {plan.fold} "
                            f"(test {plan.test_range}): {exc}") from exc


_WORKER_CTX: dict = {}


def _init_worker(dataset, algorithm, mode, cfg):
    _WORKER_CTX.update(dataset=dataset, algorithm=algorithm, mode=mode, cfg=cfg)


def _run_fold_worker(args):
    plan, fold_seed = args
    ctx = _WORKER_CTX
    return _run_fold(ctx["dataset"], ctx["algorithm"], ctx["mode"], ctx["cfg"],
                     plan, fold_seed)


def run_backtest(dataset: Dataset, algorithm: str, mode: str,
                 cfg: BacktestConfig | None = None) -> BacktestReport:
    """Full protocol over the dataset; deterministic given cfg.seed (folds may
    run in parallel, the fold seeds are spawned up front)."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    cfg = cfg or BacktestConfig()
    plans = rolling_splits(len(dataset), initial=cfg.initial, step=cfg.step,
                           purge=dataset.horizon_days)
    fold_seeds = np.random.SeedSequence(cfg.seed).spawn(len(plans))

    if cfg.jobs > 1:
        # workers read the module-level context through fork, avoiding a
        # per-fold pickle of the whole dataset
        _init_worker(dataset, algorithm, mode, cfg)
        with ProcessPoolExecutor(
                max_workers=cfg.jobs,
                mp_context=multiprocessing.get_context("fork")) as pool:
            results = list(pool.map(_run_fold_worker,
                                    list(zip(plans, fold_seeds))))
    else:
        results = [_run_fold(dataset, algorithm, mode, cfg, plan, seed)
                   for plan, seed in zip(plans, fold_seeds)]

    actuals = np.concatenate([f.actuals for f in results])
    preds = np.concatenate([f.preds for f in results])
    return BacktestReport(algorithm=algorithm, mode=mode,
                          horizon_days=dataset.horizon_days,
                          n_options=dataset.n_options, folds=results,
                          oos_r2=oos_r2(actuals, preds))
