"""Settlement arithmetic tests, checked against brute-force recomputation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drbid.market import (
    ConsumptionRecord,
    DBEvent,
    ParticipationPlan,
    actual_shedding,
    compute_cbl,
    event_profit,
    execution_rate,
    incentive_ratio,
    settle_customers,
    slot_profit,
)
from drbid.market import Bid, SlotOutcome


def brute_incentive_ratio(xi):
    """Independent spelling of the incentive bracket table."""
    if math.isnan(xi):
        return 1.0
    if 0.8 <= xi and xi <= 1.2:
        return 1.1
    if (0.6 <= xi and xi < 0.8) or (1.2 < xi and xi <= 1.5):
        return 1.05
    return 1.0


class TestEvent:
    def test_slots_cover_window(self):
        ev = DBEvent(start_slot=52, n_slots=8)
        assert list(ev.slots()) == list(range(52, 60))
        assert ev.end_slot == 60

    @pytest.mark.parametrize("kwargs", [dict(start_slot=0, n_slots=0),
                                        dict(start_slot=0, n_slots=4, slot_hours=0.0),
                                        dict(start_slot=-1, n_slots=4)])
    def test_rejects_degenerate_windows(self, kwargs):
        with pytest.raises(ValueError):
            DBEvent(**kwargs)


class TestCbl:
    def test_mean_of_five_maxima(self):
        assert compute_cbl([10, 12, 11, 13, 14]) == 12.0

    def test_constant_history(self):
        assert compute_cbl([5, 5, 5, 5, 5]) == 5.0

    def test_zero_history(self):
        assert compute_cbl([0, 0, 0, 0, 0]) == 0.0

    @pytest.mark.parametrize("n", [0, 4, 6])
    def test_wrong_history_length(self, n):
        with pytest.raises(ValueError):
            compute_cbl([1.0] * n)

    def test_negative_maxima_rejected(self):
        with pytest.raises(ValueError):
            compute_cbl([1, 1, -1, 1, 1])


class TestShedding:
    def test_clamps_negative_reduction(self):
        records = [ConsumptionRecord(0, 0, actual_kw=90, baseline_kw=100),
                   ConsumptionRecord(1, 0, actual_kw=60, baseline_kw=50)]
        total, per = actual_shedding(records)
        assert total == 10.0
        assert per.tolist() == [10.0, 0.0]

    def test_no_reduction(self):
        records = [ConsumptionRecord(i, 0, actual_kw=40, baseline_kw=40) for i in range(3)]
        total, _ = actual_shedding(records)
        assert total == 0.0

    def test_sixteen_customers_sum(self):
        # oracle: plain summation of the individual reductions
        records = [ConsumptionRecord(i, 0, actual_kw=15, baseline_kw=20) for i in range(16)]
        total, per = actual_shedding(records)
        assert total == sum(max(0.0, r.baseline_kw - r.actual_kw) for r in records) == 80.0
        assert np.all(per == 5.0)

    @given(
        baselines=st.lists(st.floats(0, 1e4), min_size=1, max_size=20),
        deltas=st.lists(st.floats(-1e4, 1e4), min_size=20, max_size=20),
    )
    def test_non_negative_and_monotone(self, baselines, deltas):
        records = [
            ConsumptionRecord(i, 0, actual_kw=max(0.0, b + d), baseline_kw=b)
            for i, (b, d) in enumerate(zip(baselines, deltas))
        ]
        total, per = actual_shedding(records)
        assert total >= 0 and np.all(per >= 0)
        # raising any customer's consumption never raises the total
        bumped = [
            ConsumptionRecord(r.customer_id, 0, r.actual_kw + 1.0, r.baseline_kw)
            for r in records
        ]
        total_bumped, _ = actual_shedding(bumped)
        assert total_bumped <= total + 1e-9


class TestExecutionRate:
    def test_equal_bid_and_actual(self):
        assert execution_rate(100, 100) == 1.0

    def test_direct_ratio(self):
        assert execution_rate(80, 100) == 0.8

    def test_unfulfilled_bid_is_infinite_and_earns_no_bonus(self):
        xi = execution_rate(50, 0)
        assert math.isinf(xi)
        assert incentive_ratio(xi) == 1.0

    def test_noop_slot(self):
        assert math.isnan(execution_rate(0, 0))
        assert incentive_ratio(execution_rate(0, 0)) == 1.0

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            execution_rate(-1, 10)
        with pytest.raises(ValueError):
            execution_rate(1, -10)


class TestIncentiveRatio:
    @pytest.mark.parametrize("xi,alpha", [(1.0, 1.1), (0.7, 1.05), (2.0, 1.0)])
    def test_bracket_values(self, xi, alpha):
        assert incentive_ratio(xi) == alpha

    @pytest.mark.parametrize("xi,alpha", [
        (0.6, 1.05), (0.8, 1.1), (1.2, 1.1), (1.5, 1.05),  # boundary ownership
        (0.59999, 1.0), (0.79999, 1.05), (1.20001, 1.05), (1.50001, 1.0),
        (0.0, 1.0),
    ])
    def test_breakpoints(self, xi, alpha):
        assert incentive_ratio(xi) == alpha

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            incentive_ratio(-0.1)

    def test_dense_grid_matches_independent_table(self):
        # total, piecewise-constant onto {1.0, 1.05, 1.1}
        for xi in np.linspace(0.0, 3.0, 6001):
            assert incentive_ratio(float(xi)) == brute_incentive_ratio(float(xi))
        assert {incentive_ratio(x) for x in np.linspace(0, 3, 301)} == {1.0, 1.05, 1.1}


class TestSettlement:
    def test_boundary_offer_settles(self):
        assert settle_customers([3.0], 3.0).tolist() == [1]

    def test_non_participant_never_settles(self):
        assert settle_customers([0.0], 5.0).tolist() == [0]

    def test_offer_above_bid_loses(self):
        assert settle_customers([4.0], 3.0).tolist() == [0]

    @given(
        offers=st.lists(st.floats(0, 10), min_size=1, max_size=16),
        bid=st.floats(0, 10),
        raise_by=st.floats(0, 5),
    )
    def test_monotone_in_bid_price(self, offers, bid, raise_by):
        low = settle_customers(offers, bid)
        high = settle_customers(offers, bid + raise_by)
        assert np.all(high >= low)


class TestSlotProfit:
    def test_hand_evaluated_win(self):
        # win, alpha=1.1, bid 4, q_act 100, one settled customer at 2, dt 0.25
        p = slot_profit(True, 1.1, 4.0, 100.0, [1], [2.0], [100.0], 0.25)
        assert p == pytest.approx((1.1 * 4 * 100 - 2 * 100) * 0.25) == 60.0

    def test_lost_slot_is_free(self):
        assert slot_profit(False, 1.1, 4.0, 100.0, [1], [2.0], [100.0], 0.25) == 0.0

    def test_empty_settlement(self):
        assert slot_profit(True, 1.1, 4.0, 0.0, [], [], [], 0.25) == 0.0

    @given(
        alpha=st.sampled_from([1.0, 1.05, 1.1]),
        bid=st.floats(0.01, 10),
        q=st.floats(0, 500),
        shed=st.lists(st.floats(0, 100), min_size=1, max_size=8),
        dt=st.floats(0.05, 1.0),
    )
    def test_zero_priced_settlements_pay_nothing(self, alpha, bid, q, shed, dt):
        ones = [1] * len(shed)
        zeros = [0.0] * len(shed)
        p = slot_profit(True, alpha, bid, q, ones, zeros, shed, dt)
        assert p == pytest.approx(alpha * bid * q * dt)


def _random_slot(rng):
    n_cust = rng.integers(1, 8)
    offers = np.where(rng.random(n_cust) < 0.3, 0.0, rng.uniform(0.1, 8.0, n_cust))
    baseline = rng.uniform(0, 200, n_cust)
    actual = np.maximum(0.0, baseline - rng.uniform(-20, 40, n_cust))
    bid = Bid(price=float(rng.uniform(0, 10)), quantity=float(rng.uniform(0, 150)))
    mcp = float(rng.uniform(0, 10))
    return offers, baseline, actual, bid, mcp


def settle_slot(slot, offers, baseline, actual, bid, mcp, dt):
    """Compose the slot settlement exactly as the environment does."""
    win = bid.price > 0 and bid.price <= mcp
    x = settle_customers(offers, bid.price) if win else np.zeros(len(offers), dtype=int)
    records = [
        ConsumptionRecord(i, slot, actual_kw=float(a), baseline_kw=float(b))
        for i, (a, b) in enumerate(zip(actual, baseline))
    ]
    q_act, shed = actual_shedding(records)
    xi = execution_rate(bid.quantity, q_act)
    alpha = incentive_ratio(xi)
    profit = slot_profit(win, alpha, bid.price, q_act, x, offers, shed, dt)
    return SlotOutcome(slot, mcp, win, bid, x, shed, q_act, xi, alpha, profit, offers)


def test_event_profit_matches_bruteforce_recomputation():
    """Event profit equals the per-slot formula recomputed from raw records."""
    rng = np.random.default_rng(7)
    for _ in range(200):
        dt = 0.25
        outcomes = [
            settle_slot(n, *_random_slot(rng), dt) for n in range(int(rng.integers(1, 9)))
        ]
        total = event_profit(outcomes)
        brute = 0.0
        for o in outcomes:
            if not o.win:
                continue
            rev = o.incentive_ratio * o.bid.price * o.q_act
            pay = sum(
                float(x) * float(lam) * float(q)
                for x, lam, q in zip(o.settlements, o.offers, o.shed_by_customer)
            )
            brute += (rev - pay) * dt
        assert total == pytest.approx(brute, abs=1e-9)


def test_plan_offer_accessor():
    plan = ParticipationPlan(customer_id=3, prices=(0.0, 2.5, 3.0))
    assert plan.offer_at(0) == 0.0
    assert plan.offer_at(2) == 3.0
    with pytest.raises(ValueError):
        ParticipationPlan(customer_id=0, prices=(-1.0,))
