"""Shared fixtures: synthetic markets at a few sizes, reused across modules.

The heavyweight markets are session-scoped; tests must not mutate them.
"""

import pytest

from volindex.feature_pipeline import FeatureConfig, build_dataset
from volindex.market_data import (
    SyntheticMarketConfig,
    VolProcessParams,
    generate_synthetic_market,
)
from volindex.targets import build_targets
from volindex.validation import assemble_dataset

FLAT_VOL = VolProcessParams(mean_reversion=0.0, long_run_var=0.04,
                            vol_of_vol=0.0, correlation=0.0)
CLUSTERED_VOL = VolProcessParams(mean_reversion=1.0, long_run_var=0.05,
                                 vol_of_vol=0.30, correlation=-0.7)


def flat_market_config(**overrides) -> SyntheticMarketConfig:
    cfg = SyntheticMarketConfig(
        n_days=40, spot0=2000.0, vol_process=FLAT_VOL, premium=1.0,
        strike_spacing=10.0, strikes_per_side=40, tenor_days=(25, 35),
        quote_gap_rate=0.0, rng_seed=7)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture(scope="session")
def flat_market():
    """Gap-free chains priced at a constant 20% implied vol, no markup."""
    return generate_synthetic_market(flat_market_config())


@pytest.fixture(scope="session")
def noisy_market():
    """Stochastic vol, quote gaps, and microstructure noise; 160 days."""
    cfg = SyntheticMarketConfig(
        n_days=160, spot0=2000.0, vol_process=CLUSTERED_VOL, premium=1.15,
        strike_spacing=10.0, strikes_per_side=30, tenor_days=(25, 35),
        quote_gap_rate=0.03, mid_noise_frac=0.005, rng_seed=11)
    return generate_synthetic_market(cfg)


@pytest.fixture(scope="session")
def backtest_market():
    """1120 days -> 1090 usable rows at a 30-day horizon (three folds)."""
    cfg = SyntheticMarketConfig(
        n_days=1120, spot0=2000.0, vol_process=CLUSTERED_VOL, premium=1.15,
        strike_spacing=10.0, strikes_per_side=30, tenor_days=(25, 35),
        quote_gap_rate=0.01, mid_noise_frac=0.005, rng_seed=11)
    return generate_synthetic_market(cfg)


def make_dataset(market, mode: str, strikes_per_side: int = 10,
                 horizon_days: int = 30, **feature_overrides):
    prices, chains = market
    fcfg = FeatureConfig(horizon_days=horizon_days,
                         strikes_per_side=strikes_per_side,
                         **feature_overrides)
    build = build_dataset(chains, prices, fcfg)
    vix_sq = {d: t.variance() for d, t in build.vix_terms.items()}
    target_rows = build_targets(prices, vix_sq, mode, horizon_days)
    return assemble_dataset(build, target_rows, fcfg), build


@pytest.fixture(scope="session")
def backtest_dataset_reg1(backtest_market):
    from volindex.targets import REG_I
    return make_dataset(backtest_market, REG_I)[0]


@pytest.fixture(scope="session")
def backtest_dataset_reg2(backtest_market):
    from volindex.targets import REG_II
    return make_dataset(backtest_market, REG_II)[0]
