"""Synthetic 30-day-style volatility index from an option chain.

Implements the standard variance-swap construction: per-expiry forward from
put-call parity, out-of-the-money selection walking outward from the ATM
strike until two consecutive strikes lack a usable quote, strike-weighted
option sums per term, and linear interpolation of the two term variances to
the target horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

from .errors import (
    ForwardError,
    MissingRateError,
    NegativeVarianceError,
    NoBracketingExpiryError,
)
from .market_data import CALL, PUT, ChainSnapshot, year_fraction

# a quote is usable for selection only if it has a positive bid
ATM = "ATM"  # pseudo-kind for the averaged put/call entry at K0

HALF_DISTANCE = "half_distance"  # white-paper spacing convention (default)
RIGHT_DIFFERENCE = "right_difference"  # dK_h = K_{h+1} - K_h, one-sided at the top


@dataclass
class TermSelection:
    tenor_days: int
    rate: float
    forward: float
    k0: float
    selected: list[tuple[float, str, float]]  # (strike, kind, mid), strikes increasing
    delta_k: list[float]

    @property
    def t_years(self) -> float:
        return year_fraction(self.tenor_days)


@dataclass
class VixResult:
    value: float  # index points (vol * 100)
    variance_by_term: tuple[float, float]
    terms: tuple[TermSelection, TermSelection]
    option_count: int
    horizon_days: int
    single_term: bool


def usable(quote) -> bool:
    return quote is not None and quote.bid > 0.0


def compute_forward(snapshot: ChainSnapshot, expiry: date) -> float:
    """Per-expiry forward via put-call parity at the strike with the smallest
    |call mid - put mid|; a forward already present on the snapshot wins."""
    tenor = (expiry - snapshot.quote_date).days
    if tenor in snapshot.forward_by_tenor:
        return snapshot.forward_by_tenor[tenor]
    rate = snapshot.rate_for(tenor)
    if rate is None:
        raise MissingRateError(f"no rate for tenor {tenor}d on {snapshot.quote_date}")
    best = None
    for strike in snapshot.strikes(expiry):
        call = snapshot.lookup(expiry, strike, CALL)
        put = snapshot.lookup(expiry, strike, PUT)
        if call is None or put is None:
            continue
        gap = abs(call.mid - put.mid)
        if best is None or gap < best[0]:
            best = (gap, strike, call.mid - put.mid)
    if best is None:
        raise ForwardError(
            f"no strike quotes both kinds for {expiry} on {snapshot.quote_date}")
    _, k_star, cp = best
    return k_star + math.exp(rate * year_fraction(tenor)) * cp


def at_the_money_strike(snapshot: ChainSnapshot, expiry: date, forward: float) -> float:
    below = [k for k in snapshot.strikes(expiry) if k <= forward]
    if not below:
        raise ForwardError(
            f"forward {forward} below all strikes for {expiry} on {snapshot.quote_date}")
    return max(below)


def _spacing(strikes: list[float], convention: str) -> list[float]:
    n = len(strikes)
    if n == 1:
        return [0.0]
    out = []
    for i in range(n):
        if convention == RIGHT_DIFFERENCE:
            d = strikes[i + 1] - strikes[i] if i < n - 1 else strikes[i] - strikes[i - 1]
        else:
            if i == 0:
                d = strikes[1] - strikes[0]
            elif i == n - 1:
                d = strikes[-1] - strikes[-2]
            else:
                d = (strikes[i + 1] - strikes[i - 1]) / 2.0
        out.append(d)
    return out


def select_otm_options(snapshot: ChainSnapshot, expiry: date, forward: float,
                       k0: float, spacing_convention: str = HALF_DISTANCE
                       ) -> TermSelection:
    """OTM selection walking outward from K0.

    Puts are collected below K0 and calls above; each direction stops the
    first time two consecutive strikes both lack a usable quote (positive
    bid), and isolated gaps are skipped without stopping.  At K0 the put and
    call mids are averaged (single kind used if only one side is usable).
    """
    tenor = (expiry - snapshot.quote_date).days
    rate = snapshot.rate_for(tenor)
    if rate is None:
        raise MissingRateError(f"no rate for tenor {tenor}d on {snapshot.quote_date}")
    strikes = snapshot.strikes(expiry)
    if k0 not in strikes:
        raise ForwardError(f"K0 {k0} not listed for {expiry} on {snapshot.quote_date}")

    picked: list[tuple[float, str, float]] = []

    atm_put = snapshot.lookup(expiry, k0, PUT)
    atm_call = snapshot.lookup(expiry, k0, CALL)
    atm_mids = [q.mid for q in (atm_put, atm_call) if usable(q)]
    if atm_mids:
        kind = ATM if len(atm_mids) == 2 else (PUT if usable(atm_put) else CALL)
        picked.append((k0, kind, sum(atm_mids) / len(atm_mids)))

    below = sorted((k for k in strikes if k < k0), reverse=True)
    misses = 0
    for k in below:
        q = snapshot.lookup(expiry, k, PUT)
        if usable(q):
            picked.append((k, PUT, q.mid))
            misses = 0
        else:
            misses += 1
            if misses >= 2:
                break

    above = sorted(k for k in strikes if k > k0)
    misses = 0
    for k in above:
        q = snapshot.lookup(expiry, k, CALL)
        if usable(q):
            picked.append((k, CALL, q.mid))
            misses = 0
        else:
            misses += 1
            if misses >= 2:
                break

    picked.sort(key=lambda item: item[0])
    delta_k = _spacing([k for k, _, _ in picked], spacing_convention)
    return TermSelection(tenor_days=tenor, rate=rate, forward=forward, k0=k0,
                         selected=picked, delta_k=delta_k)


def term_variance(sel: TermSelection) -> float:
    """Annualized variance for one term:
    (2/T) sum_h dK_h/K_h^2 e^{RT} O(K_h)  -  (1/T) (F/K0 - 1)^2.
    """
    t = sel.t_years
    if t <= 0:
        raise ValueError("tenor must be positive")
    if not sel.selected:
        raise ValueError("empty selection")
    growth = math.exp(sel.rate * t)
    total = 0.0
    for (strike, _, mid), dk in zip(sel.selected, sel.delta_k):
        total += dk / (strike * strike) * growth * mid
    return (2.0 / t) * total - (1.0 / t) * (sel.forward / sel.k0 - 1.0) ** 2


def bracketing_expiries(snapshot: ChainSnapshot, horizon_days: int
                        ) -> tuple[date, date | None]:
    """Near/next expiries for the horizon; (expiry, None) on an exact match."""
    tenors = {(e - snapshot.quote_date).days: e for e in snapshot.expiries()}
    if horizon_days in tenors:
        return tenors[horizon_days], None
    below = [t for t in tenors if t < horizon_days]
    above = [t for t in tenors if t > horizon_days]
    if not below or not above:
        raise NoBracketingExpiryError(
            f"no expiry pair brackets {horizon_days}d on {snapshot.quote_date}")
    return tenors[max(below)], tenors[min(above)]


def interpolated_variance(sigma1_sq: float, sigma2_sq: float, t1: float,
                          t2: float, t: float) -> float:
    """Variance at horizon t from two term variances (all times in years)."""
    if t2 == t1:
        return sigma1_sq
    w1 = (t2 - t) / (t2 - t1)
    w2 = (t - t1) / (t2 - t1)
    return (t1 * sigma1_sq * w1 + t2 * sigma2_sq * w2) / t


def synthetic_vix(snapshot: ChainSnapshot, horizon_days: int,
                  near: date | None = None, next_: date | None = None,
                  spacing_convention: str = HALF_DISTANCE) -> VixResult:
    """Index value at the horizon; near/next expiries may be given explicitly.

    An expiry matching the horizon exactly is used alone.  A negative
    interpolated variance raises rather than being clamped, since a silent
    clamp would corrupt any training target built from the index.
    """
    if near is None:
        near, next_ = bracketing_expiries(snapshot, horizon_days)
    elif next_ is None and (near - snapshot.quote_date).days != horizon_days:
        raise NoBracketingExpiryError(
            f"single expiry {near} does not match horizon {horizon_days}d")

    def term_for(expiry: date) -> TermSelection:
        fwd = compute_forward(snapshot, expiry)
        k0 = at_the_money_strike(snapshot, expiry, fwd)
        return select_otm_options(snapshot, expiry, fwd, k0, spacing_convention)

    sel1 = term_for(near)
    var1 = term_variance(sel1)
    if next_ is None:
        if var1 < 0:
            raise NegativeVarianceError(
                f"term variance {var1} < 0 on {snapshot.quote_date}")
        return VixResult(value=100.0 * math.sqrt(var1),
                         variance_by_term=(var1, var1), terms=(sel1, sel1),
                         option_count=len(sel1.selected),
                         horizon_days=horizon_days, single_term=True)

    sel2 = term_for(next_)
    var2 = term_variance(sel2)
    interp = interpolated_variance(var1, var2, sel1.t_years, sel2.t_years,
                                   year_fraction(horizon_days))
    if interp < 0:
        raise NegativeVarianceError(
            f"interpolated variance {interp} < 0 on {snapshot.quote_date}")
    return VixResult(value=100.0 * math.sqrt(interp),
                     variance_by_term=(var1, var2), terms=(sel1, sel2),
                     option_count=len(sel1.selected) + len(sel2.selected),
                     horizon_days=horizon_days, single_term=False)
