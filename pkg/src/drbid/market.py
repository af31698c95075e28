"""Settlement arithmetic of the demand-bidding program.

Pure functions implementing the program rules: customer baseline load (CBL),
actual load shedding, execution rate, incentive ratio, per-customer
settlement, and the aggregator's per-slot / per-event profit. Everything here
is deterministic and free of shared state, so concurrent use is safe.

Conventions:
    * prices are in currency/kWh, loads in kW, slot lengths in hours;
    * an offer price of 0 encodes non-participation, both for customers and
      for the aggregator's own bid;
    * the execution rate is bid quantity divided by actual shedding. Two
      degenerate cases are encoded as float sentinels: ``inf`` (positive bid,
      zero shedding: an unfulfilled bid, no bonus) and ``nan`` (zero bid and
      zero shedding: a no-op slot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CBL_HISTORY_DAYS = 5


@dataclass(frozen=True)
class DBEvent:
    """One demand-bidding event: a window of equal slots within a day.

    ``start_slot`` indexes the slot-of-day grid (0..95 for 15-minute slots);
    the event covers ``n_slots`` consecutive slots of ``slot_hours`` each.
    """

    start_slot: int
    n_slots: int
    slot_hours: float = 0.25

    def __post_init__(self) -> None:
        if self.n_slots < 1:
            raise ValueError(f"event needs at least one slot, got {self.n_slots}")
        if self.slot_hours <= 0:
            raise ValueError(f"slot length must be positive, got {self.slot_hours}")
        if self.start_slot < 0:
            raise ValueError(f"start slot must be non-negative, got {self.start_slot}")

    @property
    def end_slot(self) -> int:
        return self.start_slot + self.n_slots

    def slots(self) -> range:
        """Slot-of-day indices covered by the event."""
        return range(self.start_slot, self.end_slot)


@dataclass(frozen=True)
class ParticipationPlan:
    """A customer's offered curtailment price per event slot.

    ``prices[n]`` is the price the customer asks to curtail at the event's
    n-th slot; 0 means the customer does not participate at that slot.
    """

    customer_id: int
    prices: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(p < 0 for p in self.prices):
            raise ValueError(f"offer prices must be non-negative: {self.prices}")

    def offer_at(self, n: int) -> float:
        return self.prices[n]


@dataclass(frozen=True)
class Bid:
    """The aggregator's (price, quantity) pair for one slot."""

    price: float
    quantity: float

    def __post_init__(self) -> None:
        if self.price < 0:
            raise ValueError(f"bid price must be non-negative, got {self.price}")
        if self.quantity < 0:
            raise ValueError(f"bid quantity must be non-negative, got {self.quantity}")


@dataclass(frozen=True)
class ConsumptionRecord:
    """Metered consumption of one customer at one slot, with its baseline."""

    customer_id: int
    slot: int
    actual_kw: float
    baseline_kw: float

    def __post_init__(self) -> None:
        if self.actual_kw < 0 or self.baseline_kw < 0:
            raise ValueError("consumption and baseline must be non-negative")


@dataclass
class SlotOutcome:
    """Settlement result of one slot, sufficient to recompute its profit."""

    slot: int
    mcp: float
    win: bool
    bid: Bid
    settlements: np.ndarray          # 0/1 per customer
    shed_by_customer: np.ndarray     # kW per customer
    q_act: float                     # kW
    execution_rate: float            # may be inf / nan, see module docstring
    incentive_ratio: float
    profit: float                    # currency
    offers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def compute_cbl(day_maxima: Sequence[float]) -> float:
    """Customer baseline load: mean of the event-window maximum demand over
    the five eligible prior days.

    Eligibility filtering (event days, off-peak days, weekends) is the
    caller's responsibility; exactly five maxima must be supplied.
    """
    if len(day_maxima) != CBL_HISTORY_DAYS:
        raise ValueError(
            f"CBL needs exactly {CBL_HISTORY_DAYS} eligible prior-day maxima, "
            f"got {len(day_maxima)}"
        )
    if any(m < 0 for m in day_maxima):
        raise ValueError(f"demand maxima must be non-negative: {day_maxima}")
    return float(sum(day_maxima)) / CBL_HISTORY_DAYS


def actual_shedding(records: Iterable[ConsumptionRecord]) -> tuple[float, np.ndarray]:
    """Total and per-customer load shedding for one slot.

    A customer's shedding is its baseline minus its metered consumption,
    floored at zero; the slot total is the sum over customers.
    """
    per_customer = np.array(
        [max(0.0, r.baseline_kw - r.actual_kw) for r in records], dtype=float
    )
    return float(per_customer.sum()), per_customer


def execution_rate(q_bid: float, q_act: float) -> float:
    """Ratio of bid quantity to actual shedding.

    Degenerate slots are reported through float sentinels rather than
    exceptions so learning loops stay total: ``inf`` for a positive bid with
    zero shedding, ``nan`` for a zero bid with zero shedding.
    """
    if q_bid < 0 or q_act < 0:
        raise ValueError(f"quantities must be non-negative: q_bid={q_bid}, q_act={q_act}")
    if q_act == 0:
        return math.inf if q_bid > 0 else math.nan
    return q_bid / q_act


def incentive_ratio(xi: float) -> float:
    """Bonus multiplier on market revenue as a function of the execution rate.

    1.1 inside [0.8, 1.2], 1.05 inside [0.6, 0.8) or (1.2, 1.5], 1.0
    elsewhere. The sentinels map to 1.0: an unfulfilled bid earns no bonus
    and a no-op slot settles to nothing anyway.
    """
    if math.isnan(xi):
        return 1.0
    if xi < 0:
        raise ValueError(f"execution rate must be non-negative, got {xi}")
    if 0.8 <= xi <= 1.2:
        return 1.1
    if 0.6 <= xi < 0.8 or 1.2 < xi <= 1.5:
        return 1.05
    return 1.0


def settle_customers(offers: Sequence[float], bid_price: float) -> np.ndarray:
    """Which customers win the slot: offer at or below the aggregator's bid.

    Zero offers encode non-participation and never settle, no matter the bid
    price; otherwise every non-participant would win free of charge.
    """
    offers = np.asarray(offers, dtype=float)
    return ((offers > 0) & (offers <= bid_price)).astype(int)


def slot_profit(
    win: bool,
    alpha: float,
    bid_price: float,
    q_act: float,
    settlements: Sequence[int],
    offers: Sequence[float],
    shed_by_customer: Sequence[float],
    slot_hours: float,
) -> float:
    """Aggregator profit for one slot.

    A won slot earns the incentive-weighted market revenue on the measured
    shedding minus what is paid out to settled customers at their own offer
    prices (pay-as-bid). A lost slot earns and costs nothing: the program is
    risk-free, no penalty for not winning.
    """
    if not win:
        return 0.0
    settlements = np.asarray(settlements, dtype=float)
    offers = np.asarray(offers, dtype=float)
    shed = np.asarray(shed_by_customer, dtype=float)
    revenue = alpha * bid_price * q_act
    payout = float(np.sum(settlements * offers * shed))
    return (revenue - payout) * slot_hours


def event_profit(outcomes: Iterable[SlotOutcome]) -> float:
    """Total profit of one event: the sum of its slot profits."""
    return float(sum(o.profit for o in outcomes))
