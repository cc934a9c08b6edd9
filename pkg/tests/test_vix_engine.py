import math
import random
from datetime import date, timedelta

import pytest

from volindex.errors import (
    ForwardError,
    MissingRateError,
    NegativeVarianceError,
    NoBracketingExpiryError,
)
from volindex.market_data import CALL, PUT, ChainSnapshot, OptionQuote
from volindex.vix_engine import (
    ATM,
    RIGHT_DIFFERENCE,
    TermSelection,
    at_the_money_strike,
    compute_forward,
    select_otm_options,
    synthetic_vix,
    term_variance,
)

D0 = date(2020, 1, 6)
EXP = D0 + timedelta(days=30)


def chain(quote_specs, rate=0.0, expiry=EXP, forward_by_tenor=None):
    """quote_specs: iterable of (strike, kind, bid, ask)."""
    quotes = [OptionQuote(quote_date=D0, expiry=expiry, strike=k, kind=kind,
                          bid=bid, ask=ask)
              for k, kind, bid, ask in quote_specs]
    tenor = (expiry - D0).days
    return ChainSnapshot(quote_date=D0, quotes=quotes,
                         forward_by_tenor=forward_by_tenor or {},
                         rate_by_tenor={tenor: rate})


def both_kinds(strike, call_mid, put_mid, spread=0.2):
    h = spread / 2
    return [(strike, CALL, call_mid - h, call_mid + h),
            (strike, PUT, put_mid - h, put_mid + h)]


class TestComputeForward:
    def test_parity_at_equality(self):
        snap = chain(both_kinds(2000.0, 15.0, 15.0))
        assert compute_forward(snap, EXP) == pytest.approx(2000.0)

    def test_zero_rate_parity(self):
        specs = both_kinds(1960.0, 20.0, 15.0) + both_kinds(2000.0, 8.0, 40.0)
        snap = chain(specs)
        # |C-P| minimized at 1960 where C-P = 5
        assert compute_forward(snap, EXP) == pytest.approx(1965.0)

    def test_rate_compounds_the_basis(self):
        snap = chain(both_kinds(1960.0, 20.0, 15.0), rate=0.05)
        t = 30 / 365.0
        assert compute_forward(snap, EXP) == pytest.approx(
            1960.0 + math.exp(0.05 * t) * 5.0)

    def test_supplied_forward_wins(self):
        snap = chain(both_kinds(2000.0, 15.0, 10.0),
                     forward_by_tenor={30: 2012.5})
        assert compute_forward(snap, EXP) == 2012.5

    def test_matches_generator_forward(self, flat_market):
        _, chains = flat_market
        snap = chains[5]
        for expiry in snap.expiries():
            tenor = (expiry - snap.quote_date).days
            truth = snap.forward_by_tenor[tenor]
            bare = ChainSnapshot(quote_date=snap.quote_date, quotes=snap.quotes,
                                 rate_by_tenor=snap.rate_by_tenor)
            assert compute_forward(bare, expiry) == pytest.approx(truth, rel=1e-6)

    def test_no_strike_with_both_kinds(self):
        snap = chain([(2000.0, CALL, 1.0, 1.2), (2010.0, PUT, 1.0, 1.2)])
        with pytest.raises(ForwardError):
            compute_forward(snap, EXP)

    def test_missing_rate(self):
        snap = chain(both_kinds(2000.0, 15.0, 15.0))
        snap.rate_by_tenor.clear()
        with pytest.raises(MissingRateError):
            compute_forward(snap, EXP)


class TestAtTheMoneyStrike:
    def test_largest_strike_at_or_below_forward(self):
        snap = chain(both_kinds(1990.0, 1, 1) + both_kinds(2000.0, 1, 1)
                     + both_kinds(2010.0, 1, 1))
        assert at_the_money_strike(snap, EXP, 2004.0) == 2000.0
        assert at_the_money_strike(snap, EXP, 2010.0) == 2010.0

    def test_forward_below_all_strikes(self):
        snap = chain(both_kinds(2000.0, 1, 1))
        with pytest.raises(ForwardError):
            at_the_money_strike(snap, EXP, 1500.0)


def ten_strike_chain(missing_puts=(), zero_bid_puts=(), missing_calls=()):
    """Strikes 1950..2045 step 5; K0 = 2000."""
    specs = []
    for strike in range(1950, 2050, 5):
        fs = float(strike)
        if fs not in missing_calls:
            specs.append((fs, CALL, 9.0, 11.0))
        if fs not in missing_puts:
            bid = 0.0 if fs in zero_bid_puts else 9.0
            ask = 11.0 if bid else 2.0
            specs.append((fs, PUT, bid, ask))
    return chain(specs)


class TestSelectOtmOptions:
    def test_gapless_selection_takes_everything(self, flat_market):
        _, chains = flat_market
        snap = chains[0]
        expiry = snap.expiries()[0]
        fwd = compute_forward(snap, expiry)
        k0 = at_the_money_strike(snap, expiry, fwd)
        sel = select_otm_options(snap, expiry, fwd, k0)
        strikes = snap.strikes(expiry)
        n_puts_below = sum(1 for k in strikes if k < k0)
        n_calls_above = sum(1 for k in strikes if k > k0)
        assert len(sel.selected) == n_puts_below + n_calls_above + 1
        atm_entries = [s for s in sel.selected if s[0] == k0]
        assert atm_entries[0][1] == ATM
        put = snap.lookup(expiry, k0, PUT)
        call = snap.lookup(expiry, k0, CALL)
        assert atm_entries[0][2] == pytest.approx((put.mid + call.mid) / 2)

    def test_two_consecutive_missing_puts_stop_the_walk(self):
        # puts absent at K0-5dK and K0-6dK: side truncated below K0-4dK
        snap = ten_strike_chain(missing_puts=(1975.0, 1970.0))
        sel = select_otm_options(snap, EXP, 2002.0, 2000.0)
        put_strikes = [k for k, kind, _ in sel.selected if kind == PUT]
        assert min(put_strikes) == 1980.0
        assert 1965.0 not in put_strikes  # beyond the stop, even though quoted

    def test_two_consecutive_zero_bids_also_stop(self):
        snap = ten_strike_chain(zero_bid_puts=(1975.0, 1970.0))
        sel = select_otm_options(snap, EXP, 2002.0, 2000.0)
        put_strikes = [k for k, kind, _ in sel.selected if kind == PUT]
        assert min(put_strikes) == 1980.0

    def test_isolated_gap_is_skipped_not_fatal(self):
        snap = ten_strike_chain(missing_calls=(2015.0,))
        sel = select_otm_options(snap, EXP, 2002.0, 2000.0)
        call_strikes = [k for k, kind, _ in sel.selected if kind == CALL]
        assert 2015.0 not in call_strikes
        assert 2020.0 in call_strikes and 2045.0 in call_strikes

    def test_spacing_half_distance_with_gap(self):
        snap = ten_strike_chain(missing_calls=(2015.0,))
        sel = select_otm_options(snap, EXP, 2002.0, 2000.0)
        by_strike = {k: dk for (k, _, _), dk in zip(sel.selected, sel.delta_k)}
        assert by_strike[2010.0] == pytest.approx(7.5)  # (2020-2005)/2
        assert by_strike[2020.0] == pytest.approx(7.5)
        assert by_strike[2045.0] == pytest.approx(5.0)  # one-sided boundary
        assert by_strike[1950.0] == pytest.approx(5.0)

    def test_right_difference_convention(self):
        snap = ten_strike_chain()
        sel = select_otm_options(snap, EXP, 2002.0, 2000.0,
                                 spacing_convention=RIGHT_DIFFERENCE)
        assert sel.delta_k[:-1] == [5.0] * (len(sel.selected) - 1)
        assert sel.delta_k[-1] == 5.0


class TestTermVariance:
    def test_single_option_arithmetic(self):
        sel = TermSelection(tenor_days=30, rate=0.0, forward=2000.0, k0=2000.0,
                            selected=[(2000.0, ATM, 10.0)], delta_k=[5.0])
        expected = 2.0 * (365.0 / 30.0) * (5.0 / 2000.0 ** 2) * 10.0
        assert term_variance(sel) == pytest.approx(expected)
        assert expected == pytest.approx(3.0417e-4, rel=1e-4)

    def test_forward_at_k0_kills_correction(self):
        base = TermSelection(tenor_days=30, rate=0.0, forward=2000.0, k0=2000.0,
                             selected=[(2000.0, ATM, 10.0)], delta_k=[5.0])
        shifted = TermSelection(tenor_days=30, rate=0.0, forward=2010.0,
                                k0=2000.0, selected=[(2000.0, ATM, 10.0)],
                                delta_k=[5.0])
        correction = (365.0 / 30.0) * (2010.0 / 2000.0 - 1.0) ** 2
        assert term_variance(base) - term_variance(shifted) == pytest.approx(correction)

    def test_rate_growth_factor(self):
        sel = TermSelection(tenor_days=30, rate=0.04, forward=2000.0, k0=2000.0,
                            selected=[(2000.0, ATM, 10.0)], delta_k=[5.0])
        t = 30 / 365.0
        expected = (2.0 / t) * (5.0 / 2000.0 ** 2) * math.exp(0.04 * t) * 10.0
        assert term_variance(sel) == pytest.approx(expected)

    def test_recovers_flat_implied_variance(self, flat_market):
        # variance-swap replication on a wide gap-free strike range
        _, chains = flat_market
        snap = chains[0]
        for expiry in snap.expiries():
            fwd = compute_forward(snap, expiry)
            k0 = at_the_money_strike(snap, expiry, fwd)
            sel = select_otm_options(snap, expiry, fwd, k0)
            assert term_variance(sel) == pytest.approx(0.04, rel=0.02)

    def test_homogeneity_in_mids(self):
        snap = ten_strike_chain()
        sel = select_otm_options(snap, EXP, 2002.0, 2000.0)
        scaled = TermSelection(
            tenor_days=sel.tenor_days, rate=sel.rate, forward=sel.k0,  # F=K0
            k0=sel.k0, delta_k=sel.delta_k,
            selected=[(k, kind, 3.0 * m) for k, kind, m in sel.selected])
        base = TermSelection(
            tenor_days=sel.tenor_days, rate=sel.rate, forward=sel.k0,
            k0=sel.k0, delta_k=sel.delta_k, selected=sel.selected)
        assert term_variance(scaled) == pytest.approx(3.0 * term_variance(base))

    def test_adding_positive_option_increases_sum(self):
        small = TermSelection(tenor_days=30, rate=0.0, forward=2000.0,
                              k0=2000.0, selected=[(2000.0, ATM, 10.0)],
                              delta_k=[5.0])
        bigger = TermSelection(tenor_days=30, rate=0.0, forward=2000.0,
                               k0=2000.0,
                               selected=[(1995.0, PUT, 4.0), (2000.0, ATM, 10.0)],
                               delta_k=[5.0, 5.0])
        assert term_variance(bigger) > term_variance(small)


class TestSyntheticVix:
    def test_constant_variance_interpolates_to_itself(self, flat_market):
        _, chains = flat_market
        res = synthetic_vix(chains[0], 30)
        v1, v2 = res.variance_by_term
        # both terms carry the same flat variance, so the index is just sqrt
        assert res.value == pytest.approx(100.0 * math.sqrt(
            (res.terms[0].t_years * v1 * ((35 / 365 - 30 / 365) / (10 / 365))
             + res.terms[1].t_years * v2 * ((30 / 365 - 25 / 365) / (10 / 365)))
            / (30 / 365)))
        assert v1 == pytest.approx(v2, rel=5e-3)

    def test_flat_vol_market_reads_twenty(self, flat_market):
        _, chains = flat_market
        for snap in chains[:10]:
            assert synthetic_vix(snap, 30).value == pytest.approx(20.0, abs=0.5)

    def test_exact_expiry_used_alone(self):
        snap = chain(both_kinds(2000.0, 10.0, 10.0))  # single expiry at 30d
        res = synthetic_vix(snap, 30)
        assert res.single_term
        sigma_sq = res.variance_by_term[0]
        assert res.value == pytest.approx(100.0 * math.sqrt(sigma_sq))
        assert res.option_count == 1

    def test_no_bracketing_expiries(self):
        snap = chain(both_kinds(2000.0, 10.0, 10.0))  # only a 30d expiry
        with pytest.raises(NoBracketingExpiryError):
            synthetic_vix(snap, 40)

    def test_value_is_order_invariant(self, flat_market):
        _, chains = flat_market
        snap = chains[2]
        shuffled = list(snap.quotes)
        random.Random(4).shuffle(shuffled)
        snap2 = ChainSnapshot(quote_date=snap.quote_date, quotes=shuffled,
                              spot=snap.spot,
                              forward_by_tenor=snap.forward_by_tenor,
                              rate_by_tenor=snap.rate_by_tenor)
        assert synthetic_vix(snap2, 30).value == synthetic_vix(snap, 30).value

    def test_single_term_identity_at_f_equals_k0(self):
        # value^2/100^2 * T equals the strike-weighted option sum exactly
        snap = chain(both_kinds(2000.0, 10.0, 10.0))
        res = synthetic_vix(snap, 30)
        sel = res.terms[0]
        weighted_sum = sum(dk / (k * k) * m * 2.0
                           for (k, _, m), dk in zip(sel.selected, sel.delta_k))
        assert (res.value / 100.0) ** 2 * (30 / 365.0) == pytest.approx(
            weighted_sum, abs=1e-15)

    def test_explicit_expiry_pair_matches_discovery(self, flat_market):
        _, chains = flat_market
        snap = chains[1]
        near, next_ = snap.expiries()
        explicit = synthetic_vix(snap, 30, near=near, next_=next_)
        assert explicit.value == synthetic_vix(snap, 30).value

    def test_explicit_single_expiry_must_match_horizon(self, flat_market):
        _, chains = flat_market
        snap = chains[1]
        near = snap.expiries()[0]  # 25d, not the 30d horizon
        with pytest.raises(NoBracketingExpiryError):
            synthetic_vix(snap, 30, near=near)

    def test_negative_interpolated_variance_raises(self):
        # crossed inputs: negative near-term variance from a giant correction
        exp1 = D0 + timedelta(days=25)
        exp2 = D0 + timedelta(days=35)
        quotes = []
        for expiry in (exp1, exp2):
            for strike, kind, bid, ask in both_kinds(2000.0, 0.02, 0.02, 0.02):
                quotes.append(OptionQuote(quote_date=D0, expiry=expiry,
                                          strike=strike, kind=kind,
                                          bid=bid, ask=ask))
        snap = ChainSnapshot(
            quote_date=D0, quotes=quotes,
            forward_by_tenor={25: 2300.0, 35: 2300.0},
            rate_by_tenor={25: 0.0, 35: 0.0})
        with pytest.raises(NegativeVarianceError):
            synthetic_vix(snap, 30)
