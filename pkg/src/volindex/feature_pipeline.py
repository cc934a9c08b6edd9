"""Daily option chains -> stationary feature vectors, with exact affine lineage.

Every option feature is produced from raw midquotes by a chain of affine
steps: per-strike gap fill, tenor interpolation to the forecast horizon,
1/K^2 pre-scaling, and (per training fold) a z-score.  The composition is
recorded per feature as (raw-quote, coefficient) pairs plus a constant, so a
piecewise-linear model's prediction can later be pushed back onto tradable
option legs.

The same machinery also prices the fixed-grid synthetic index used as the
benchmark predictor and as the anchor of the deviation-mode targets: the
variance-swap weighting applied to the 2n+1 grid strikes per tenor, so its
option count stays constant through time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date

import numpy as np

from .errors import FeatureBuildError, InsufficientDataError, VolindexError
from .market_data import (
    CALL,
    PRICE_DECIMALS,
    PUT,
    ChainSnapshot,
    PriceSeries,
    QuoteKey,
    year_fraction,
)
from .vix_engine import (
    at_the_money_strike,
    bracketing_expiries,
    compute_forward,
    usable,
)

DEFAULT_RETURN_LOOKBACKS = (1, 5, 15, 30, 60, 90)
DEFAULT_VARIANCE_LOOKBACKS = (15, 30, 60, 90)


@dataclass
class FeatureConfig:
    horizon_days: int = 30
    strikes_per_side: int = 10
    strike_step: int = 1  # grid-unit multiplier: 1 = consecutive, 2 = doubled spacing
    include_returns_features: bool = False
    return_lookbacks: tuple[int, ...] = DEFAULT_RETURN_LOOKBACKS
    variance_lookbacks: tuple[int, ...] = DEFAULT_VARIANCE_LOOKBACKS
    base_spacing: float | None = None  # None: infer smallest spacing near the money

    @property
    def n_option_features(self) -> int:
        return 2 * self.strikes_per_side + 1

    @property
    def n_features(self) -> int:
        extra = 0
        if self.include_returns_features:
            extra = len(self.return_lookbacks) + len(self.variance_lookbacks)
        return self.n_option_features + extra


@dataclass
class AffineMap:
    """Per-feature raw-quote coefficients plus constant offset.

    Covers the option-feature block only; returns-based features are not
    functions of option prices and carry no lineage.
    """

    terms: list[dict[QuoteKey, float]]
    constants: np.ndarray

    def apply_mids(self, mids: dict[QuoteKey, float]) -> np.ndarray:
        out = np.array(self.constants, dtype=float, copy=True)
        for i, term in enumerate(self.terms):
            for key, coeff in term.items():
                out[i] += coeff * mids[key]
        return out

    def scaled(self, scale: np.ndarray, offset: np.ndarray) -> "AffineMap":
        """Compose an elementwise affine step y_i = scale_i * x_i + offset_i."""
        terms = [{k: c * s for k, c in term.items()}
                 for term, s in zip(self.terms, scale)]
        return AffineMap(terms=terms, constants=self.constants * scale + offset)


@dataclass
class FeatureRow:
    date: date
    values: np.ndarray
    strike_grid: list[float]
    affine: AffineMap
    n_option_features: int
    raw_mids: dict[QuoteKey, float] = field(default_factory=dict)

    @property
    def option_values(self) -> np.ndarray:
        return self.values[: self.n_option_features]

    @property
    def has_returns_features(self) -> bool:
        return len(self.values) > self.n_option_features

    def verify_affine(self, atol: float = 1e-10) -> float:
        """Max reconstruction error of the option block from raw mids."""
        rebuilt = self.affine.apply_mids(self.raw_mids)
        err = float(np.max(np.abs(rebuilt - self.option_values)))
        if err > atol:
            raise FeatureBuildError(
                f"{self.date}: affine lineage off by {err:.3e} (> {atol:.0e})")
        return err


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def fit_normalizer(rows: list[FeatureRow]) -> Normalizer:
    """Per-feature z-score statistics over a training range (sample std, n-1).

    Constant features are rejected: a zero standard deviation would make the
    z-score undefined and silently poison every model downstream.
    """
    if len(rows) < 2:
        raise InsufficientDataError("need >= 2 rows to fit a normalizer")
    x = np.stack([r.values for r in rows])
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    dead = np.nonzero(std <= 1e-14)[0]
    if dead.size:
        raise VolindexError(f"constant feature(s) at index {dead.tolist()}")
    return Normalizer(mean=mean, std=std)


def apply_normalizer(norm: Normalizer, row: FeatureRow) -> FeatureRow:
    """Z-score a row and compose the step into its affine lineage."""
    n_opt = row.n_option_features
    scale = 1.0 / norm.std[:n_opt]
    offset = -norm.mean[:n_opt] * scale
    return replace(row, values=norm.transform(row.values),
                   affine=row.affine.scaled(scale, offset))


# ---------------------------------------------------------------------------
# Elementary steps
# ---------------------------------------------------------------------------

def interpolate_tenor(q1: float, q2: float, t1_days: float, t2_days: float,
                      t_days: float) -> float:
    """Linear blend of the two bracketing maturities' prices at the horizon."""
    if not t1_days < t2_days:
        raise ValueError("need t1 < t2")
    if not (t1_days <= t_days <= t2_days):
        raise ValueError(f"horizon {t_days} outside [{t1_days}, {t2_days}]")
    w2 = (t_days - t1_days) / (t2_days - t1_days)
    return q1 * (1.0 - w2) + q2 * w2


def build_strike_grid(k0: float, n: int, base_spacing: float,
                      step: int = 1) -> list[float]:
    return [round(k0 + i * step * base_spacing, PRICE_DECIMALS)
            for i in range(-n, n + 1)]


def fill_missing(strike: float, donors: list[tuple[float, float]]) -> float:
    """Midquote at an unquoted strike from the nearest quoted strikes.

    Linear interpolation between the closest donors below and above; at a
    boundary (donors on one side only) the nearest donor is carried flat.
    """
    coeffs = _gap_fill_coefficients(strike, [k for k, _ in donors])
    mids = {k: m for k, m in donors}
    return sum(c * mids[k] for k, c in coeffs)


def _gap_fill_coefficients(strike: float, donor_strikes: list[float]
                           ) -> list[tuple[float, float]]:
    """Donor weights for a missing strike; linear in the donor mids."""
    if not donor_strikes:
        raise FeatureBuildError(f"no donors for strike {strike}")
    below = [k for k in donor_strikes if k < strike]
    above = [k for k in donor_strikes if k > strike]
    exact = [k for k in donor_strikes if k == strike]
    if exact:
        return [(exact[0], 1.0)]
    if below and above:
        lo, hi = max(below), min(above)
        w_hi = (strike - lo) / (hi - lo)
        return [(lo, 1.0 - w_hi), (hi, w_hi)]
    nearest = max(below) if below else min(above)
    return [(nearest, 1.0)]


def prescale(mid: float, strike: float) -> float:
    """Divide a price by squared strike, detrending the underlying's level."""
    if strike <= 0:
        raise ValueError("strike must be positive")
    return mid / (strike * strike)


def returns_features(series: PriceSeries, as_of: date,
                     cfg: FeatureConfig) -> np.ndarray:
    """Trailing returns and demeaned realized variances ending at as_of."""
    idx = series.index_of(as_of)
    if idx is None:
        raise InsufficientDataError(f"{as_of} not in price series")
    need = max(max(cfg.return_lookbacks), max(cfg.variance_lookbacks) + 1)
    if idx < need:
        raise InsufficientDataError(
            f"{as_of}: need {need} prior observations, have {idx}")
    closes = series.closes
    out = []
    for lb in cfg.return_lookbacks:
        out.append((closes[idx] - closes[idx - lb]) / closes[idx - lb])
    daily = closes[1: idx + 1] / closes[: idx] - 1.0  # r_1 .. r_idx
    for lb in cfg.variance_lookbacks:
        window = daily[-lb:]
        out.append(float(np.mean((window - window.mean()) ** 2)))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# Fixed-grid synthetic index terms (benchmark / deviation-target anchor)
# ---------------------------------------------------------------------------

@dataclass
class GridTerm:
    tenor_days: int
    rate: float
    forward: float
    k0: float  # largest grid strike <= forward for this tenor
    strikes: list[float]
    mids: np.ndarray
    slot_affines: list[dict[QuoteKey, float]]
    weight: float  # horizon interpolation weight for this term
    spacing: float

    @property
    def t_years(self) -> float:
        return year_fraction(self.tenor_days)

    def variance(self) -> float:
        t = self.t_years
        growth = math.exp(self.rate * t)
        total = sum(self.spacing / (k * k) * growth * m
                    for k, m in zip(self.strikes, self.mids))
        return (2.0 / t) * total - (1.0 / t) * (self.forward / self.k0 - 1.0) ** 2


@dataclass
class VixStarTerms:
    quote_date: date
    horizon_days: int
    terms: list[GridTerm]

    def variance(self) -> float:
        """Per-unit annualized variance of the fixed-grid index, (value/100)^2."""
        t = year_fraction(self.horizon_days)
        return sum(term.weight * term.t_years * term.variance()
                   for term in self.terms) / t

    def legs(self) -> tuple[dict[QuoteKey, float], float]:
        """Raw-quote weights replicating variance(), plus the non-option
        forward-adjustment constant."""
        t = year_fraction(self.horizon_days)
        legs: dict[QuoteKey, float] = {}
        adjustment = 0.0
        for term in self.terms:
            growth = math.exp(term.rate * term.t_years)
            for strike, affine in zip(term.strikes, term.slot_affines):
                slot_w = 2.0 * term.weight * term.spacing * growth / (t * strike * strike)
                for key, coeff in affine.items():
                    legs[key] = legs.get(key, 0.0) + slot_w * coeff
            adjustment -= (term.weight / t) * (term.forward / term.k0 - 1.0) ** 2
        return legs, adjustment


# ---------------------------------------------------------------------------
# Per-day construction
# ---------------------------------------------------------------------------

class _KindTable:
    """Usable quotes of one (expiry, kind): sorted strikes with mids."""

    def __init__(self, snapshot: ChainSnapshot, expiry: date, kind: str):
        pairs = sorted(
            (q.strike, q.mid)
            for q in snapshot.quotes
            if q.expiry == expiry and q.kind == kind and usable(q)
        )
        self.expiry = expiry
        self.kind = kind
        self.strikes = [k for k, _ in pairs]
        self.mids = {k: m for k, m in pairs}

    def resolve(self, strike: float) -> tuple[float, dict[QuoteKey, float]]:
        coeffs = _gap_fill_coefficients(strike, self.strikes)
        affine = {(self.expiry, k, self.kind): c for k, c in coeffs}
        value = sum(c * self.mids[k] for k, c in coeffs)
        return value, affine


def _infer_spacing(snapshot: ChainSnapshot, expiry: date) -> float:
    strikes = snapshot.strikes(expiry)
    diffs = [round(b - a, PRICE_DECIMALS) for a, b in zip(strikes, strikes[1:])]
    positive = [d for d in diffs if d > 0]
    if not positive:
        raise FeatureBuildError(f"cannot infer strike spacing for {expiry}")
    return min(positive)


def _slot_kind(strike: float, center: float) -> str:
    # puts below the pivot, calls at and above it (one ATM option per grid)
    return PUT if strike < center else CALL


def build_feature_row(snapshot: ChainSnapshot, cfg: FeatureConfig,
                      prices: PriceSeries | None = None
                      ) -> tuple[FeatureRow, VixStarTerms]:
    """One day's feature vector plus the fixed-grid index terms for that day."""
    near, next_ = bracketing_expiries(snapshot, cfg.horizon_days)
    fwd_near = compute_forward(snapshot, near)
    k_center = at_the_money_strike(snapshot, near, fwd_near)
    base = cfg.base_spacing if cfg.base_spacing is not None else _infer_spacing(snapshot, near)
    grid = build_strike_grid(k_center, cfg.strikes_per_side, base, cfg.strike_step)

    expiries = [near] if next_ is None else [near, next_]
    forwards = {near: fwd_near}
    if next_ is not None:
        forwards[next_] = compute_forward(snapshot, next_)

    tables = {(e, kind): _KindTable(snapshot, e, kind)
              for e in expiries for kind in (PUT, CALL)}
    for (e, kind), table in tables.items():
        if not table.strikes:
            raise FeatureBuildError(f"no usable {kind} quotes for {e}")

    # horizon interpolation weights, linear in maturity
    tenors = [(e - snapshot.quote_date).days for e in expiries]
    if next_ is None:
        weights = [1.0]
    else:
        t1, t2 = tenors
        w2 = (cfg.horizon_days - t1) / (t2 - t1)
        weights = [1.0 - w2, w2]

    raw_mids: dict[QuoteKey, float] = {}

    def note_mids(affine: dict[QuoteKey, float], table: _KindTable):
        for (e, strike, kind) in affine:
            raw_mids[(e, strike, kind)] = table.mids[strike]

    # option features: per-tenor slot values blended to the horizon, / K^2
    values = np.zeros(len(grid))
    terms_per_feature: list[dict[QuoteKey, float]] = [dict() for _ in grid]
    for expiry, w in zip(expiries, weights):
        for i, strike in enumerate(grid):
            table = tables[(expiry, _slot_kind(strike, k_center))]
            slot_value, slot_affine = table.resolve(strike)
            note_mids(slot_affine, table)
            scale = w / (strike * strike)
            values[i] += scale * slot_value
            feature_terms = terms_per_feature[i]
            for key, coeff in slot_affine.items():
                feature_terms[key] = feature_terms.get(key, 0.0) + scale * coeff

    affine = AffineMap(terms=terms_per_feature, constants=np.zeros(len(grid)))

    if cfg.include_returns_features:
        if prices is None:
            raise InsufficientDataError("returns features need a price series")
        values = np.concatenate([values, returns_features(prices, snapshot.quote_date, cfg)])

    # fixed-grid index terms (OTM side pivots on the per-tenor ATM strike)
    grid_spacing = cfg.strike_step * base
    grid_terms = []
    for expiry, w, tenor in zip(expiries, weights, tenors):
        fwd = forwards[expiry]
        at_or_below = [k for k in grid if k <= fwd]
        k0 = max(at_or_below) if at_or_below else grid[0]
        mids = np.zeros(len(grid))
        slot_affines: list[dict[QuoteKey, float]] = []
        for i, strike in enumerate(grid):
            if strike == k0:
                halves: list[tuple[float, dict[QuoteKey, float]]] = []
                for kind in (PUT, CALL):
                    table = tables[(expiry, kind)]
                    v, a = table.resolve(strike)
                    note_mids(a, table)
                    halves.append((v, a))
                mids[i] = 0.5 * (halves[0][0] + halves[1][0])
                combined: dict[QuoteKey, float] = {}
                for _, a in halves:
                    for key, coeff in a.items():
                        combined[key] = combined.get(key, 0.0) + 0.5 * coeff
                slot_affines.append(combined)
            else:
                table = tables[(expiry, PUT if strike < k0 else CALL)]
                v, a = table.resolve(strike)
                note_mids(a, table)
                mids[i] = v
                slot_affines.append(a)
        rate = snapshot.rate_for(tenor)
        if rate is None:
            raise FeatureBuildError(f"no rate for tenor {tenor}d")
        grid_terms.append(GridTerm(
            tenor_days=tenor, rate=rate, forward=fwd, k0=k0,
            strikes=list(grid), mids=mids, slot_affines=slot_affines,
            weight=w, spacing=grid_spacing,
        ))

    row = FeatureRow(date=snapshot.quote_date, values=values, strike_grid=grid,
                     affine=affine, n_option_features=len(grid), raw_mids=raw_mids)
    row.verify_affine()
    vix_terms = VixStarTerms(quote_date=snapshot.quote_date,
                             horizon_days=cfg.horizon_days, terms=grid_terms)
    return row, vix_terms


def write_feature_matrix(rows: list[FeatureRow], path):
    """CSV export: date plus one column per feature slot."""
    import csv

    if not rows:
        raise ValueError("no rows to export")
    width = len(rows[0].values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + [f"f{i}" for i in range(width)])
        for row in rows:
            writer.writerow([row.date.isoformat()]
                            + [repr(float(v)) for v in row.values])


def write_affine_map(row: FeatureRow, path):
    """CSV export of one day's quote lineage:
    feature_index, expiry, strike, kind, coefficient, constant."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_index", "expiry", "strike", "kind",
                         "coefficient", "constant"])
        for i, term in enumerate(row.affine.terms):
            const = repr(float(row.affine.constants[i]))
            for (expiry, strike, kind) in sorted(term):
                writer.writerow([i, expiry.isoformat(), repr(float(strike)),
                                 kind, repr(term[(expiry, strike, kind)]),
                                 const])


@dataclass
class DatasetBuild:
    rows: list[FeatureRow]
    vix_terms: dict[date, VixStarTerms]
    skipped: list[tuple[date, str]]


def build_dataset(chains: list[ChainSnapshot], prices: PriceSeries | None,
                  cfg: FeatureConfig) -> DatasetBuild:
    """One row per resolvable date; unresolvable dates are skipped and named,
    never imputed with zeros."""
    rows: list[FeatureRow] = []
    vix_terms: dict[date, VixStarTerms] = {}
    skipped: list[tuple[date, str]] = []
    for snap in chains:
        try:
            row, terms = build_feature_row(snap, cfg, prices)
        except VolindexError as exc:
            skipped.append((snap.quote_date, str(exc)))
            continue
        rows.append(row)
        vix_terms[snap.quote_date] = terms
    return DatasetBuild(rows=rows, vix_terms=vix_terms, skipped=skipped)
