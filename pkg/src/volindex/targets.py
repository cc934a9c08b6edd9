"""Regression targets: forward realized variance, directly or as the gap
below the synthetic index's squared value.

Both sides of the gap are expressed as annualized variance: the daily-return
variance is scaled by the trading-day count per year, and the index value is
already annualized by construction.  Mixing scales would make the deviation
target meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Mapping

import numpy as np

from .errors import InsufficientDataError, VolindexError
from .market_data import TRADING_DAYS_PER_YEAR, PriceSeries

REG_I = "reg1"  # predict realized variance directly
REG_II = "reg2"  # predict realized variance minus the index's squared value

ANNUALIZATION = float(TRADING_DAYS_PER_YEAR)


@dataclass
class TargetRow:
    date: date
    horizon_days: int
    realized_var: float  # annualized
    vix_star_sq: float  # per-unit annualized variance, (value/100)^2
    mode: str

    @property
    def target(self) -> float:
        if self.mode == REG_I:
            return self.realized_var
        return self.realized_var - self.vix_star_sq


def realized_variance(prices: PriceSeries, t: date, horizon_days: int) -> float:
    """Demeaned variance of the next horizon_days daily returns (not annualized).

    Returns use the previous close in the denominator; the window covers the
    horizon_days observations after t in trading days.
    """
    idx = prices.index_of(t)
    if idx is None:
        raise InsufficientDataError(f"{t} not in price series")
    if idx + horizon_days >= len(prices):
        raise InsufficientDataError(
            f"{t}: window of {horizon_days} days runs past the series end")
    closes = prices.closes[idx: idx + horizon_days + 1]
    rets = closes[1:] / closes[:-1] - 1.0
    return float(np.mean((rets - rets.mean()) ** 2))


def build_targets(prices: PriceSeries, vix_star_sq_by_date: Mapping[date, float],
                  mode: str, horizon_days: int) -> list[TargetRow]:
    """One row per index date with a full forward window; deviation-mode rows
    keep the index value so predictions are invertible back to variance."""
    if mode not in (REG_I, REG_II):
        raise ValueError(f"mode must be {REG_I!r} or {REG_II!r}")
    rows = []
    for d in sorted(vix_star_sq_by_date):
        idx = prices.index_of(d)
        if idx is None:
            raise VolindexError(f"index date {d} missing from price series")
        if idx + horizon_days >= len(prices):
            continue  # the last horizon_days dates emit no rows
        rows.append(TargetRow(
            date=d, horizon_days=horizon_days,
            realized_var=ANNUALIZATION * realized_variance(prices, d, horizon_days),
            vix_star_sq=float(vix_star_sq_by_date[d]), mode=mode,
        ))
    return rows
