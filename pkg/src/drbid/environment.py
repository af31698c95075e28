"""Episodic bidding environment for one demand-bidding event day.

Each episode walks the event's slots. At every slot the aggregator submits a
(price, quantity) action, the market clearing price is realized, customers
settle and curtail, and the slot's profit comes back as the reward. The two
learning agents share this environment: one clearing price is drawn per slot
and both act on the same world.

A zero bid price encodes non-participation: the slot is sat out, nothing is
settled and nothing earned, which keeps the all-zero policy at exactly zero
total reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import (
    Bid,
    ConsumptionRecord,
    DBEvent,
    SlotOutcome,
    actual_shedding,
    execution_rate,
    incentive_ratio,
    settle_customers,
    slot_profit,
)
from .simulators import (
    SLOTS_PER_DAY,
    CustomerProfile,
    McpModel,
    TouSchedule,
    simulate_consumption,
    simulate_mcp,
)

DAYS_PER_YEAR = 365


@dataclass(frozen=True)
class EventDay:
    """Everything one event day needs to be replayed: the customers' offers,
    the reserve forecasts, per-customer baselines and actual base loads, and
    the frozen clearing-price draws for replayed evaluation."""

    index: int
    day_of_year: int
    weekend: int
    plans: np.ndarray       # offers, shape (customers, slots)
    reserve: np.ndarray     # shape (slots,)
    cbl: np.ndarray         # baseline kW per customer, shape (customers,)
    base_load: np.ndarray   # base consumption kW, shape (customers, slots)
    frozen_mcp: np.ndarray  # shape (slots,)


@dataclass(frozen=True)
class EnvState:
    slot: int               # slot-of-day index
    day_of_year: int
    weekend: int
    offers: np.ndarray      # this slot's offer prices, one per customer
    reserve: float


@dataclass(frozen=True)
class EnvAction:
    price: float
    quantity: float


@dataclass(frozen=True)
class StepResult:
    reward: float           # scaled profit, what the learners see
    next_state: EnvState | None
    terminal: bool
    outcome: SlotOutcome    # raw-currency diagnostics
    clipped: bool           # action fell outside bounds and was clipped


class StateEncoder:
    """Fixed normalization between EnvState and the networks' flat vector.

    Layout: [slot, day-of-year, weekend, offers..., reserve], every feature
    scaled into [0, 1]. The date feature can be zeroed out when date has no
    dynamics to learn; decoding is exact apart from that switch.
    """

    def __init__(self, n_customers: int, price_cap: float, v_max: float,
                 include_date: bool = True):
        self.n_customers = n_customers
        self.price_cap = price_cap
        self.v_max = v_max
        self.include_date = include_date

    @property
    def width(self) -> int:
        return 3 + self.n_customers + 1

    def encode(self, state: EnvState) -> np.ndarray:
        vec = np.empty(self.width)
        vec[0] = state.slot / (SLOTS_PER_DAY - 1)
        vec[1] = state.day_of_year / DAYS_PER_YEAR if self.include_date else 0.0
        vec[2] = float(state.weekend)
        vec[3 : 3 + self.n_customers] = np.asarray(state.offers) / self.price_cap
        vec[-1] = state.reserve / self.v_max
        return vec

    def decode(self, vec: np.ndarray) -> EnvState:
        return EnvState(
            slot=round(float(vec[0]) * (SLOTS_PER_DAY - 1)),
            day_of_year=round(float(vec[1]) * DAYS_PER_YEAR) if self.include_date else 0,
            weekend=round(float(vec[2])),
            offers=np.asarray(vec[3 : 3 + self.n_customers]) * self.price_cap,
            reserve=float(vec[-1]) * self.v_max,
        )


class BiddingEnv:
    """Steps one event day: settle the bid, curtail, pay out, move on.

    ``frozen_prices`` replays the day's stored clearing-price draws
    (evaluation); otherwise prices are redrawn from the model each step
    (training). ``oracle_check`` recomputes every reward from the raw slot
    outcome through an independent spelling of the profit formula.
    """

    def __init__(
        self,
        population: list[CustomerProfile],
        tou: TouSchedule,
        mcp_model: McpModel,
        event: DBEvent,
        price_cap: float = 10.0,
        quantity_cap: float = 200.0,
        reward_scale: float = 100.0,
        frozen_prices: bool = False,
        rng: np.random.Generator | None = None,
        oracle_check: bool = True,
    ):
        if reward_scale <= 0:
            raise ValueError(f"reward scale must be positive, got {reward_scale}")
        self.population = population
        self.tou = tou
        self.mcp_model = mcp_model
        self.event = event
        self.price_cap = price_cap
        self.quantity_cap = quantity_cap
        self.reward_scale = reward_scale
        self.frozen_prices = frozen_prices
        self.rng = rng
        self.oracle_check = oracle_check
        self.mcp_draws = 0          # count of realized prices, for leakage checks
        self._day: EventDay | None = None
        self._n = 0

    def _state(self, n: int) -> EnvState:
        day = self._day
        return EnvState(
            slot=self.event.start_slot + n,
            day_of_year=day.day_of_year,
            weekend=day.weekend,
            offers=day.plans[:, n].copy(),
            reserve=float(day.reserve[n]),
        )

    def reset(self, day: EventDay) -> EnvState:
        if day.plans.shape != (len(self.population), self.event.n_slots):
            raise ValueError(
                f"day plans shaped {day.plans.shape}, expected "
                f"({len(self.population)}, {self.event.n_slots})"
            )
        self._day = day
        self._n = 0
        return self._state(0)

    @property
    def steps_taken(self) -> int:
        return self._n

    def step(self, action: EnvAction) -> StepResult:
        if self._day is None:
            raise RuntimeError("step called before reset")
        day, n = self._day, self._n
        if n >= self.event.n_slots:
            raise RuntimeError("episode already terminal; reset with a new day")
        slot = self.event.start_slot + n

        price = float(np.clip(action.price, 0.0, self.price_cap))
        quantity = float(np.clip(action.quantity, 0.0, self.quantity_cap))
        clipped = price != action.price or quantity != action.quantity

        if self.frozen_prices:
            mcp = float(day.frozen_mcp[n])
        else:
            mcp = simulate_mcp(self.mcp_model, slot, float(day.reserve[n]), self.rng)
        self.mcp_draws += 1

        offers = day.plans[:, n]
        win = price > 0.0 and price <= mcp
        if win:
            settlements = settle_customers(offers, price)
            actual = np.array([
                simulate_consumption(
                    profile, self.tou, slot,
                    settled=bool(settlements[i]),
                    offer_price=float(offers[i]),
                    base_load_kw=float(day.base_load[i, n]),
                )
                for i, profile in enumerate(self.population)
            ])
        else:
            settlements = np.zeros(len(self.population), dtype=int)
            actual = day.base_load[:, n].astype(float)

        records = [
            ConsumptionRecord(p.customer_id, slot, float(actual[i]), float(day.cbl[i]))
            for i, p in enumerate(self.population)
        ]
        q_act, shed = actual_shedding(records)
        xi = execution_rate(quantity, q_act)
        alpha = incentive_ratio(xi)
        profit = slot_profit(
            win, alpha, price, q_act, settlements, offers, shed, self.event.slot_hours
        )
        outcome = SlotOutcome(
            slot=slot, mcp=mcp, win=win, bid=Bid(price, quantity),
            settlements=settlements, shed_by_customer=shed, q_act=q_act,
            execution_rate=xi, incentive_ratio=alpha, profit=profit,
            offers=np.asarray(offers, dtype=float),
        )
        if self.oracle_check:
            self._assert_profit_matches(outcome)

        self._n = n + 1
        terminal = self._n == self.event.n_slots
        next_state = None if terminal else self._state(self._n)
        return StepResult(
            reward=profit / self.reward_scale,
            next_state=next_state,
            terminal=terminal,
            outcome=outcome,
            clipped=clipped,
        )

    def _assert_profit_matches(self, o: SlotOutcome) -> None:
        """Recompute the slot profit from scratch off the raw outcome."""
        if not o.win:
            expected = 0.0
        else:
            payout = sum(
                float(x) * float(lam) * float(q)
                for x, lam, q in zip(o.settlements, o.offers, o.shed_by_customer)
            )
            expected = (o.incentive_ratio * o.bid.price * o.q_act - payout) * self.event.slot_hours
        if abs(o.profit - expected) > 1e-9:
            raise AssertionError(
                f"slot {o.slot}: profit {o.profit} != recomputed {expected}"
            )
