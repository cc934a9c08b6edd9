"""Option-chain and underlying market data: types, CSV IO, synthetic generation.

The synthetic market substitutes for a proprietary index-option data set: a
discrete-time square-root variance process drives the underlying, every listed
option is priced with Black-Scholes at the instantaneous model vol times a
configurable markup, and quotes are knocked out at random to mimic illiquid
strikes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import ChainParseError, QuoteInvariantError

CALL = "C"
PUT = "P"

TRADING_DAYS_PER_YEAR = 252
DAYS_PER_YEAR = 365.0  # actual/365, continuous compounding
PRICE_DECIMALS = 8  # prices stored and compared at 1e-8


def year_fraction(days: int) -> float:
    return days / DAYS_PER_YEAR


@dataclass(frozen=True)
class OptionQuote:
    quote_date: date
    expiry: date
    strike: float
    kind: str  # CALL or PUT
    bid: float
    ask: float

    def __post_init__(self):
        if self.kind not in (CALL, PUT):
            raise QuoteInvariantError(f"kind must be {CALL!r} or {PUT!r}, got {self.kind!r}")
        if self.bid < 0 or self.ask < self.bid:
            raise QuoteInvariantError(
                f"need ask >= bid >= 0, got bid={self.bid} ask={self.ask} "
                f"({self.quote_date} {self.expiry} {self.strike} {self.kind})"
            )
        if self.expiry <= self.quote_date:
            raise QuoteInvariantError(
                f"expiry {self.expiry} not after quote date {self.quote_date}"
            )

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0

    @property
    def tenor_days(self) -> int:
        return (self.expiry - self.quote_date).days


QuoteKey = tuple[date, float, str]  # (expiry, strike, kind)


def quote_key(q: OptionQuote) -> QuoteKey:
    return (q.expiry, q.strike, q.kind)


@dataclass
class ChainSnapshot:
    """One day of quotes across strikes and expiries, plus curve context.

    Immutable after construction; the quote index is built once and shared.
    """

    quote_date: date
    quotes: list[OptionQuote]
    spot: float | None = None
    forward_by_tenor: dict[int, float] = field(default_factory=dict)
    rate_by_tenor: dict[int, float] = field(default_factory=dict)
    _index: dict[QuoteKey, OptionQuote] = field(init=False, repr=False)

    def __post_init__(self):
        index: dict[QuoteKey, OptionQuote] = {}
        for q in self.quotes:
            if q.quote_date != self.quote_date:
                raise QuoteInvariantError(
                    f"quote dated {q.quote_date} in snapshot for {self.quote_date}"
                )
            key = quote_key(q)
            if key in index:
                raise QuoteInvariantError(
                    f"duplicate quote {self.quote_date} {q.expiry} {q.strike} {q.kind}"
                )
            index[key] = q
        self._index = index

    def lookup(self, expiry: date, strike: float, kind: str) -> OptionQuote | None:
        return self._index.get((expiry, round(strike, PRICE_DECIMALS), kind))

    def expiries(self) -> list[date]:
        return sorted({q.expiry for q in self.quotes})

    def strikes(self, expiry: date, kind: str | None = None) -> list[float]:
        ks = {q.strike for q in self.quotes if q.expiry == expiry and (kind is None or q.kind == kind)}
        return sorted(ks)

    def rate_for(self, tenor_days: int) -> float | None:
        return self.rate_by_tenor.get(tenor_days)


@dataclass
class PriceSeries:
    dates: list[date]
    closes: np.ndarray
    _pos: dict[date, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.closes = np.asarray(self.closes, dtype=float)
        if len(self.dates) != len(self.closes):
            raise ChainParseError("dates and closes differ in length")
        if np.any(self.closes <= 0):
            raise ChainParseError("all prices must be positive")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ChainParseError(f"dates not strictly increasing at {b}")
        self._pos = {d: i for i, d in enumerate(self.dates)}

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self, d: date) -> int | None:
        return self._pos.get(d)


@dataclass
class VolProcessParams:
    """Discrete-time square-root variance process (full truncation at zero).

    Defaults keep 2*kappa*theta > xi^2, so the variance stays away from zero
    while still clustering visibly.
    """

    mean_reversion: float = 2.0  # kappa, per year
    long_run_var: float = 0.04  # theta, annualized variance
    vol_of_vol: float = 0.25  # xi
    correlation: float = -0.6  # rho between return and variance shocks


@dataclass
class SyntheticMarketConfig:
    n_days: int = 1500
    spot0: float = 2000.0
    vol_process: VolProcessParams = field(default_factory=VolProcessParams)
    premium: float = 1.1  # multiplicative implied-vol markup, >= 1
    strike_spacing: float = 5.0
    strikes_per_side: int = 40
    tenor_days: tuple[int, int] = (25, 35)
    quote_gap_rate: float = 0.0
    rng_seed: int = 0
    rate: float = 0.0  # flat continuously-compounded rate for all tenors
    spread_frac: float = 0.01  # half-spread as a fraction of mid
    mid_noise_frac: float = 0.0  # multiplicative microstructure noise on mids
    start_date: date = date(2016, 1, 4)

    def validate(self):
        if self.premium < 1.0:
            raise ValueError("premium must be >= 1")
        if not (0.0 <= self.quote_gap_rate < 1.0):
            raise ValueError("quote_gap_rate must be in [0, 1)")
        if not (0.0 <= self.mid_noise_frac < 1.0):
            raise ValueError("mid_noise_frac must be in [0, 1)")
        if self.tenor_days[0] >= self.tenor_days[1]:
            raise ValueError("tenor_days must be an increasing pair")
        if self.strikes_per_side < 1 or self.n_days < 1:
            raise ValueError("strikes_per_side and n_days must be positive")


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def black_scholes_price(kind: str, spot: float, strike: float, vol: float,
                        t_years: float, rate: float = 0.0) -> float:
    """European option price; forward form so rate enters only via discounting."""
    if t_years <= 0:
        raise ValueError("t_years must be positive")
    fwd = spot * math.exp(rate * t_years)
    disc = math.exp(-rate * t_years)
    if vol <= 0:
        intrinsic = fwd - strike if kind == CALL else strike - fwd
        return disc * max(intrinsic, 0.0)
    sd = vol * math.sqrt(t_years)
    d1 = (math.log(fwd / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    if kind == CALL:
        price = disc * (fwd * _norm_cdf(d1) - strike * _norm_cdf(d2))
    else:
        price = disc * (strike * _norm_cdf(-d2) - fwd * _norm_cdf(-d1))
    return max(price, 0.0)  # deep OTM can round off slightly negative


def simulate_variance_path(cfg: SyntheticMarketConfig, rng: np.random.Generator
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Simulate (spot path, annualized variance path) over cfg.n_days steps.

    Euler scheme with full truncation: the variance enters drift and diffusion
    through max(v, 0), so the path may touch zero but never goes below.
    """
    p = cfg.vol_process
    dt = 1.0 / TRADING_DAYS_PER_YEAR
    n = cfg.n_days
    z = rng.standard_normal((n, 2))
    # correlate the return shock with the variance shock
    z_ret = z[:, 0]
    z_var = p.correlation * z[:, 0] + math.sqrt(max(0.0, 1 - p.correlation ** 2)) * z[:, 1]

    v = np.empty(n)
    s = np.empty(n)
    v[0] = p.long_run_var
    s[0] = cfg.spot0
    for i in range(n - 1):
        v_pos = max(v[i], 0.0)
        v[i + 1] = (v[i] + p.mean_reversion * (p.long_run_var - v_pos) * dt
                    + p.vol_of_vol * math.sqrt(v_pos * dt) * z_var[i])
        ret = (cfg.rate - 0.5 * v_pos) * dt + math.sqrt(v_pos * dt) * z_ret[i]
        s[i + 1] = s[i] * math.exp(ret)
    return s, np.maximum(v, 0.0)


def generate_synthetic_market(cfg: SyntheticMarketConfig
                              ) -> tuple[PriceSeries, list[ChainSnapshot]]:
    """Deterministic synthetic market: true price path plus daily option chains.

    Each day lists 2*strikes_per_side+1 strikes on a fixed-spacing grid around
    the spot, two expiries at the configured tenors, and both kinds at every
    strike, priced with Black-Scholes at vol = sqrt(v_t) * premium.  Quotes are
    deleted independently with probability quote_gap_rate, except at the
    at-the-money strike, which every downstream selection pivots on.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.rng_seed)
    spots, variances = simulate_variance_path(cfg, rng)
    dates = [cfg.start_date + timedelta(days=i) for i in range(cfg.n_days)]

    snapshots = []
    for i, d in enumerate(dates):
        spot = float(spots[i])
        vol = math.sqrt(variances[i]) * cfg.premium
        center = round(round(spot / cfg.strike_spacing) * cfg.strike_spacing, PRICE_DECIMALS)
        strikes = [round(center + j * cfg.strike_spacing, PRICE_DECIMALS)
                   for j in range(-cfg.strikes_per_side, cfg.strikes_per_side + 1)]
        quotes = []
        fwd_by_tenor = {}
        rate_by_tenor = {}
        for tenor in cfg.tenor_days:
            expiry = d + timedelta(days=int(tenor))
            t_years = year_fraction(int(tenor))
            fwd = spot * math.exp(cfg.rate * t_years)
            fwd_by_tenor[int(tenor)] = fwd
            rate_by_tenor[int(tenor)] = cfg.rate
            k_atm = max((k for k in strikes if k <= fwd), default=strikes[0])
            for strike in strikes:
                for kind in (PUT, CALL):
                    protected = strike == k_atm
                    if not protected and cfg.quote_gap_rate > 0.0:
                        if rng.random() < cfg.quote_gap_rate:
                            continue
                    mid = black_scholes_price(kind, spot, strike, vol, t_years, cfg.rate)
                    if cfg.mid_noise_frac > 0.0:
                        mid *= 1.0 + cfg.mid_noise_frac * (2.0 * rng.random() - 1.0)
                    half = cfg.spread_frac * mid
                    quotes.append(OptionQuote(
                        quote_date=d, expiry=expiry, strike=strike, kind=kind,
                        bid=mid - half, ask=mid + half,
                    ))
        snapshots.append(ChainSnapshot(
            quote_date=d, quotes=quotes, spot=spot,
            forward_by_tenor=fwd_by_tenor, rate_by_tenor=rate_by_tenor,
        ))
    return PriceSeries(dates=dates, closes=spots), snapshots


# ---------------------------------------------------------------------------
# CSV IO
#
# Option CSV:      date,expiry,strike,kind,bid,ask     (kind in {C,P})
# Underlying CSV:  date,close
# Rates CSV:       date,tenor_days,rate                (annualized, continuous)
# ---------------------------------------------------------------------------

OPTION_HEADER = ["date", "expiry", "strike", "kind", "bid", "ask"]
UNDERLYING_HEADER = ["date", "close"]
RATES_HEADER = ["date", "tenor_days", "rate"]


def _parse_date(text: str, line_no: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ChainParseError(f"bad date {text!r}: {exc}", line_no) from None


def _parse_float(text: str, line_no: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ChainParseError(f"bad {what} {text!r}", line_no) from None


def load_chain_series(options_path: str | Path,
                      underlying_path: str | Path | None = None,
                      rates_path: str | Path | None = None) -> list[ChainSnapshot]:
    """Parse an option CSV into one snapshot per quote date, dates increasing.

    Underlying and rates CSVs, when given, populate spot and rate_by_tenor.
    Malformed rows, crossed quotes, duplicates, and non-monotone dates raise
    ChainParseError naming the offending line.
    """
    spots = {}
    if underlying_path is not None:
        series = load_price_series(underlying_path)
        spots = {d: float(c) for d, c in zip(series.dates, series.closes)}
    rates: dict[date, dict[int, float]] = {}
    if rates_path is not None:
        for d, tenor, rate in load_rates(rates_path):
            rates.setdefault(d, {})[tenor] = rate

    by_date: dict[date, list[OptionQuote]] = {}
    seen: set[tuple] = set()
    last_date: date | None = None
    with open(options_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != OPTION_HEADER:
            raise ChainParseError(f"expected header {','.join(OPTION_HEADER)}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ChainParseError(f"expected 6 fields, got {len(row)}", line_no)
            d = _parse_date(row[0], line_no)
            expiry = _parse_date(row[1], line_no)
            strike = round(_parse_float(row[2], line_no, "strike"), PRICE_DECIMALS)
            kind = row[3].strip()
            bid = _parse_float(row[4], line_no, "bid")
            ask = _parse_float(row[5], line_no, "ask")
            key = (d, expiry, strike, kind)
            if key in seen:
                raise ChainParseError(
                    f"duplicate quote {d} {expiry} {strike} {kind}", line_no)
            seen.add(key)
            if last_date is not None and d < last_date:
                raise ChainParseError(f"dates not monotone at {d}", line_no)
            last_date = d
            try:
                quote = OptionQuote(quote_date=d, expiry=expiry, strike=strike,
                                    kind=kind, bid=bid, ask=ask)
            except QuoteInvariantError as exc:
                raise ChainParseError(str(exc), line_no) from None
            by_date.setdefault(d, []).append(quote)

    snapshots = []
    for d in sorted(by_date):
        day_rates = dict(rates.get(d, {}))
        snapshots.append(ChainSnapshot(
            quote_date=d, quotes=by_date[d], spot=spots.get(d),
            rate_by_tenor=day_rates,
        ))
    return snapshots


def load_price_series(path: str | Path) -> PriceSeries:
    dates, closes = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != UNDERLYING_HEADER:
            raise ChainParseError(f"expected header {','.join(UNDERLYING_HEADER)}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ChainParseError(f"expected 2 fields, got {len(row)}", line_no)
            dates.append(_parse_date(row[0], line_no))
            closes.append(_parse_float(row[1], line_no, "close"))
    return PriceSeries(dates=dates, closes=np.asarray(closes))


def load_rates(path: str | Path) -> list[tuple[date, int, float]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RATES_HEADER:
            raise ChainParseError(f"expected header {','.join(RATES_HEADER)}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ChainParseError(f"expected 3 fields, got {len(row)}", line_no)
            d = _parse_date(row[0], line_no)
            try:
                tenor = int(row[1])
            except ValueError:
                raise ChainParseError(f"bad tenor_days {row[1]!r}", line_no) from None
            out.append((d, tenor, _parse_float(row[2], line_no, "rate")))
    return out


def write_chain_series(snapshots: list[ChainSnapshot], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OPTION_HEADER)
        for snap in snapshots:
            for q in sorted(snap.quotes, key=lambda q: (q.expiry, q.strike, q.kind)):
                writer.writerow([
                    snap.quote_date.isoformat(), q.expiry.isoformat(),
                    repr(q.strike), q.kind, repr(q.bid), repr(q.ask),
                ])


def write_price_series(series: PriceSeries, path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(UNDERLYING_HEADER)
        for d, c in zip(series.dates, series.closes):
            writer.writerow([d.isoformat(), repr(float(c))])


def write_rates(snapshots: list[ChainSnapshot], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATES_HEADER)
        for snap in snapshots:
            for tenor in sorted(snap.rate_by_tenor):
                writer.writerow([snap.quote_date.isoformat(), tenor,
                                 repr(snap.rate_by_tenor[tenor])])


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------

@dataclass
class ChainIssues:
    quote_date: date
    missing: list[tuple[date, float, str]]  # (expiry, strike, kind) holes
    irregular_spacing: list[date]  # expiries whose strike grid is uneven
    no_bracket: bool  # no expiry pair brackets the configured horizon


@dataclass
class ValidationReport:
    issues: list[ChainIssues]

    @property
    def gap_count(self) -> int:
        return sum(len(i.missing) for i in self.issues)

    def is_clean(self) -> bool:
        return not any(i.missing or i.irregular_spacing or i.no_bracket
                       for i in self.issues)


def _inferred_spacing(strikes: list[float]) -> float | None:
    diffs = sorted({round(b - a, PRICE_DECIMALS) for a, b in zip(strikes, strikes[1:])})
    return diffs[0] if diffs else None


def validate_chain(snapshots: list[ChainSnapshot],
                   horizon_days: int | None = None) -> ValidationReport:
    """Report-only scan: per date, missing quotes on the inferred strike grid,
    irregular spacing, and (optionally) dates with no expiry pair bracketing
    the horizon.

    The grid per expiry is the arithmetic range spanned by the union of both
    kinds' strikes at the inferred spacing; a quote of one kind absent from
    that grid counts as missing.
    """
    issues = []
    for snap in snapshots:
        missing: list[tuple[date, float, str]] = []
        irregular: list[date] = []
        for expiry in snap.expiries():
            union = snap.strikes(expiry)
            if len(union) < 2:
                continue
            spacing = _inferred_spacing(union)
            if spacing is None or spacing <= 0:
                continue
            span = round(union[-1] - union[0], PRICE_DECIMALS)
            n_steps = int(round(span / spacing))
            if abs(n_steps * spacing - span) > 1e-6:
                irregular.append(expiry)
                continue
            grid = [round(union[0] + j * spacing, PRICE_DECIMALS)
                    for j in range(n_steps + 1)]
            for kind in (PUT, CALL):
                have = set(snap.strikes(expiry, kind))
                for k in grid:
                    if k not in have:
                        missing.append((expiry, k, kind))
        no_bracket = False
        if horizon_days is not None:
            tenors = sorted({(e - snap.quote_date).days for e in snap.expiries()})
            exact = horizon_days in tenors
            below = [t for t in tenors if t < horizon_days]
            above = [t for t in tenors if t > horizon_days]
            no_bracket = not exact and not (below and above)
        issues.append(ChainIssues(quote_date=snap.quote_date, missing=missing,
                                  irregular_spacing=irregular, no_bracket=no_bracket))
    return ValidationReport(issues=issues)


# ---------------------------------------------------------------------------
# Flat key-value config files (mirrors SyntheticMarketConfig field names)
# ---------------------------------------------------------------------------

def load_market_config(path: str | Path) -> SyntheticMarketConfig:
    raw = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ChainParseError(f"expected key=value, got {line!r}", line_no)
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    return market_config_from_dict(raw)


def market_config_from_dict(raw: dict[str, str]) -> SyntheticMarketConfig:
    cfg = SyntheticMarketConfig()
    vp = cfg.vol_process
    casts = {
        "n_days": int, "spot0": float, "premium": float, "strike_spacing": float,
        "strikes_per_side": int, "quote_gap_rate": float, "rng_seed": int,
        "rate": float, "spread_frac": float, "mid_noise_frac": float,
    }
    for key, value in raw.items():
        if key in casts:
            setattr(cfg, key, casts[key](value))
        elif key in ("mean_reversion", "long_run_var", "vol_of_vol", "correlation"):
            setattr(vp, key, float(value))
        elif key == "tenor_days":
            parts = [int(p) for p in value.replace(",", " ").split()]
            if len(parts) != 2:
                raise ValueError(f"tenor_days needs two values, got {value!r}")
            cfg.tenor_days = (parts[0], parts[1])
        elif key == "start_date":
            cfg.start_date = date.fromisoformat(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    cfg.validate()
    return cfg
