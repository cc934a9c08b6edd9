"""Turn a piecewise-linear forecast into explicit option-portfolio weights.

Within a model's affine region the forecast is a·x + c; each feature x_i is
itself an affine function of raw midquotes, so the forecast collapses to
sum(weight_q * mid_q) + cash.  Deviation-mode forecasts additionally carry
the fixed-grid index legs and its non-replicable forward-adjustment term,
reported separately as a cash-like constant.

Weights are quoted in variance units per currency of option mid price, the
only unit in which the composition is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

from .errors import NotTradableError, ReplicationError
from .feature_pipeline import FeatureRow, VixStarTerms
from .market_data import ChainSnapshot, QuoteKey
from .regressors import RegressionModel
from .targets import REG_I, REG_II

REPLICATION_RTOL = 1e-8


@dataclass
class VixComponent:
    legs: dict[QuoteKey, float]
    adjustment: float  # -(1/T)(F/K0 - 1)^2 per term, horizon-weighted


@dataclass
class PortfolioWeights:
    date: date
    legs: dict[QuoteKey, float]
    cash_constant: float
    mode: str
    vix_component: VixComponent | None = None
    forecast: float = 0.0  # model output (+ index variance in deviation mode)

    @property
    def n_legs(self) -> int:
        total = len(self.legs)
        if self.vix_component is not None:
            total += len(self.vix_component.legs)
        return total


def daily_weights(model: RegressionModel, feature_row: FeatureRow, mode: str,
                  vix_terms: VixStarTerms | None = None) -> PortfolioWeights:
    """Compose the model's local affine map with the row's quote lineage.

    The row must be the exact (normalized) input the model predicts on; its
    affine map is re-verified against the stored raw mids before use.
    """
    if feature_row.has_returns_features:
        raise NotTradableError(
            "returns-based features cannot be replicated by any option portfolio")
    feature_row.verify_affine()

    la = model.local_affine(feature_row.values)  # forests raise here
    coeffs = la.coefficients
    legs: dict[QuoteKey, float] = {}
    for i, term in enumerate(feature_row.affine.terms):
        if coeffs[i] == 0.0:
            continue
        for key, c in term.items():
            legs[key] = legs.get(key, 0.0) + coeffs[i] * c
    cash = la.constant + float(coeffs @ feature_row.affine.constants)
    forecast = la.apply(feature_row.values)

    vix_component = None
    if mode == REG_II:
        if vix_terms is None:
            raise ValueError("deviation mode needs the day's index terms")
        vlegs, adjustment = vix_terms.legs()
        vix_component = VixComponent(legs=vlegs, adjustment=adjustment)
        forecast += vix_terms.variance()
    elif mode != REG_I:
        raise ValueError(f"unknown mode {mode!r}")

    return PortfolioWeights(date=feature_row.date, legs=legs, cash_constant=cash,
                            mode=mode, vix_component=vix_component,
                            forecast=forecast)


@dataclass
class ReplicationResult:
    residual: float
    tolerance: float
    flagged: bool
    portfolio_value: float


def replication_check(weights: PortfolioWeights, snapshot, forecast: float
                      ) -> ReplicationResult:
    """Price the legs against the snapshot and compare with the forecast.

    snapshot may be a ChainSnapshot or a plain {(expiry, strike, kind): mid}
    mapping; a missing leg quote is an error, not a zero.
    """
    def mid_of(key: QuoteKey) -> float:
        if isinstance(snapshot, ChainSnapshot):
            quote = snapshot.lookup(*key)
            if quote is None:
                raise ReplicationError(f"no quote for leg {key} on {weights.date}")
            return quote.mid
        try:
            return snapshot[key]
        except KeyError:
            raise ReplicationError(
                f"no quote for leg {key} on {weights.date}") from None

    value = weights.cash_constant
    for key, w in weights.legs.items():
        value += w * mid_of(key)
    if weights.vix_component is not None:
        for key, w in weights.vix_component.legs.items():
            value += w * mid_of(key)
        value += weights.vix_component.adjustment

    residual = abs(value - forecast)
    tolerance = REPLICATION_RTOL * max(1.0, abs(forecast))
    return ReplicationResult(residual=residual, tolerance=tolerance,
                             flagged=residual > tolerance,
                             portfolio_value=value)


@dataclass
class LiquidityRow:
    date: date
    n_legs: int
    n_material: int
    turnover: float | None  # None on the first date
    cash: float
    adjustment: float


@dataclass
class LiquidityReport:
    rows: list[LiquidityRow]
    materiality_threshold: float


def _all_legs(weights: PortfolioWeights) -> dict[QuoteKey, float]:
    merged = dict(weights.legs)
    if weights.vix_component is not None:
        for key, w in weights.vix_component.legs.items():
            merged[key] = merged.get(key, 0.0) + w
    return merged


def liquidity_report(weights_series: list[PortfolioWeights],
                     materiality_threshold: float = 0.0) -> LiquidityReport:
    """Per-date leg counts, material-leg counts, and day-over-day turnover
    (sum of |weight changes| over the union of legs)."""
    if len(weights_series) < 2:
        raise ValueError("need at least two dates")
    rows = []
    prev: dict[QuoteKey, float] | None = None
    for w in weights_series:
        legs = _all_legs(w)
        n_material = sum(1 for v in legs.values() if abs(v) > materiality_threshold)
        turnover = None
        if prev is not None:
            keys = set(prev) | set(legs)
            turnover = sum(abs(legs.get(k, 0.0) - prev.get(k, 0.0)) for k in keys)
        adjustment = w.vix_component.adjustment if w.vix_component else 0.0
        rows.append(LiquidityRow(date=w.date, n_legs=w.n_legs,
                                 n_material=n_material, turnover=turnover,
                                 cash=w.cash_constant, adjustment=adjustment))
        prev = legs
    return LiquidityReport(rows=rows, materiality_threshold=materiality_threshold)
