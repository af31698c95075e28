"""Simulators of the two uncertain environment signals.

The market clearing price comes from a second-order surface in the time of
day and the system reserve rate, fitted to historical bidding-platform data;
the curtailment side inverts a constant-elasticity response of each
customer's consumption to the gap between its offer price and its
time-of-use tariff. Both carry configurable noise and draw exclusively from
explicitly passed generators, so runs are reproducible per seed and stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .market import DBEvent, ParticipationPlan

SLOTS_PER_DAY = 96

# rng stream ids, so independent concerns never share a draw sequence
STREAM_POPULATION = 0
STREAM_PLANS = 1
STREAM_RESERVE = 2
STREAM_MCP = 3
STREAM_LOADS = 4
STREAM_AGENT_PRICE = 10
STREAM_AGENT_QUANTITY = 11
STREAM_ENV = 12
STREAM_BASELINE = 13


def make_rng(seed: int, stream: int, sub: int | None = None) -> np.random.Generator:
    """Generator for one named stream of a master seed.

    Identical (seed, stream, sub) triples yield identical draw sequences;
    ``sub`` separates otherwise same-purpose streams (one per dataset, say).
    """
    key = (stream,) if sub is None else (stream, sub)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass(frozen=True)
class McpModel:
    """Surface fit of the market clearing price over (slot-of-day, reserve).

    price = p1*t^2 + p2*V^2 + p3*V*t + p4*t + p5*V + p6 + noise, floored at
    zero. Defaults are the coefficients fitted to the 2017 demand-bidding
    records; t is the quarter-hour index of the day and V a fraction in
    [0, 1].
    """

    p1: float = -0.00042
    p2: float = 126.7125
    p3: float = -0.06412
    p4: float = 0.04937
    p5: float = -55.07590
    p6: float = 7.45740
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise ValueError(f"noise sigma must be non-negative, got {self.noise_sigma}")

    def surface(self, t: float, reserve: float) -> float:
        return (
            self.p1 * t * t
            + self.p2 * reserve * reserve
            + self.p3 * reserve * t
            + self.p4 * t
            + self.p5 * reserve
            + self.p6
        )


def simulate_mcp(
    model: McpModel,
    t: int,
    reserve: float,
    rng: np.random.Generator | None = None,
) -> float:
    """One clearing-price draw at slot-of-day t and reserve fraction V."""
    if not 0.0 <= reserve <= 1.0:
        raise ValueError(f"reserve rate must lie in [0, 1], got {reserve}")
    if not 0 <= t < SLOTS_PER_DAY:
        raise ValueError(f"slot index must lie in [0, {SLOTS_PER_DAY}), got {t}")
    price = model.surface(t, reserve)
    if model.noise_sigma > 0:
        if rng is None:
            raise ValueError("noisy price model needs an rng")
        price += rng.normal(0.0, model.noise_sigma)
    return max(0.0, price)


@dataclass(frozen=True)
class TouSchedule:
    """Time-of-use tariff bands over the slot-of-day grid.

    Hours are half-open [start, end). Anything outside the peak and
    semi-peak windows is off-peak.
    """

    peak_hours: tuple[int, int] = (13, 17)
    semi_peak_hours: tuple[tuple[int, int], ...] = ((9, 13), (17, 21))
    rate_peak: float = 5.0
    rate_semi_peak: float = 3.5
    rate_off_peak: float = 2.0

    def band(self, slot: int) -> str:
        hour = (slot % SLOTS_PER_DAY) // 4
        if self.peak_hours[0] <= hour < self.peak_hours[1]:
            return "peak"
        for lo, hi in self.semi_peak_hours:
            if lo <= hour < hi:
                return "semi_peak"
        return "off_peak"

    def rate(self, slot: int) -> float:
        return {
            "peak": self.rate_peak,
            "semi_peak": self.rate_semi_peak,
            "off_peak": self.rate_off_peak,
        }[self.band(slot)]


# elasticity ranges per tariff band: off-peak consumption is the most flexible
ELASTICITY_BANDS = {
    "peak": (-0.4, 0.0),
    "semi_peak": (-0.6, -0.4),
    "off_peak": (-1.0, -0.6),
}


@dataclass(frozen=True)
class CustomerProfile:
    """One aggregated customer: elasticities, daily load shape, offer habits."""

    customer_id: int
    elasticity: dict[str, float]          # per tariff band, all <= 0
    base_load_kw: np.ndarray              # per slot of day, length 96
    participation_prob: float = 0.8
    offer_center_frac: float = 0.9        # offer distribution center, x ToU rate
    offer_spread_frac: float = 0.3        # offer distribution spread, x ToU rate

    def elasticity_at(self, tou: TouSchedule, slot: int) -> float:
        return self.elasticity[tou.band(slot)]


def simulate_consumption(
    profile: CustomerProfile,
    tou: TouSchedule,
    slot: int,
    settled: bool,
    offer_price: float,
    base_load_kw: float | None = None,
) -> float:
    """Consumption of one customer at one slot, in kW.

    A settled customer curtails in proportion to its elasticity and to the
    relative gap between its offer price and the time-of-use rate; the result
    is clamped to [0, base]. An unsettled customer consumes its base load.
    ``base_load_kw`` overrides the profile's nominal shape, for days with
    load variation.
    """
    lam_tou = tou.rate(slot)
    if lam_tou <= 0:
        raise ValueError(f"time-of-use rate must be positive, got {lam_tou}")
    p0 = profile.base_load_kw[slot % SLOTS_PER_DAY] if base_load_kw is None else base_load_kw
    if not settled:
        return float(p0)
    eps = profile.elasticity_at(tou, slot)
    deviation = abs(offer_price - lam_tou) / lam_tou
    return float(np.clip(p0 * (1.0 + eps * deviation), 0.0, p0))


def _load_template(kind: str) -> np.ndarray:
    """Normalized daily load shapes. Both are flat across the afternoon
    peak window so the in-window baseline equals the in-window load."""
    slots = np.arange(SLOTS_PER_DAY)
    hours = slots / 4.0
    if kind == "flat":
        return np.ones(SLOTS_PER_DAY)
    if kind == "peaked":
        # night valley, plateau between 11h and 18h
        shape = 0.6 + 0.4 / (1.0 + np.exp(-(hours - 8.0))) - 0.25 / (1.0 + np.exp(-(hours - 20.0)))
        shape[(hours >= 11.0) & (hours < 18.0)] = shape[44]
        return shape / shape.max()
    raise ValueError(f"unknown load template {kind!r}")


def generate_population(
    count: int,
    rng: np.random.Generator,
    elasticity_bands: dict[str, tuple[float, float]] | None = None,
    scale_range_kw: tuple[float, float] = (20.0, 200.0),
    templates: tuple[str, ...] = ("flat", "peaked"),
    participation_prob: float = 0.8,
    offer_center_frac: float = 0.9,
    offer_spread_frac: float = 0.3,
) -> list[CustomerProfile]:
    """Draw a customer population with band-wise uniform elasticities."""
    if count < 1:
        raise ValueError(f"population needs at least one customer, got {count}")
    bands = elasticity_bands or ELASTICITY_BANDS
    profiles = []
    for i in range(count):
        eps = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in bands.items()}
        scale = float(rng.uniform(*scale_range_kw))
        template = templates[int(rng.integers(0, len(templates)))]
        profiles.append(
            CustomerProfile(
                customer_id=i,
                elasticity=eps,
                base_load_kw=scale * _load_template(template),
                participation_prob=participation_prob,
                offer_center_frac=offer_center_frac,
                offer_spread_frac=offer_spread_frac,
            )
        )
    return profiles


def _truncated_normal(
    rng: np.random.Generator, center: float, spread: float, low: float, high: float
) -> float:
    """Rejection-sampled normal, clipped range (low, high]."""
    if spread == 0:
        return float(min(max(center, np.nextafter(low, high)), high))
    for _ in range(200):
        x = rng.normal(center, spread)
        if low < x <= high:
            return float(x)
    return float(min(max(center, np.nextafter(low, high)), high))


def generate_participation_plans(
    profiles: list[CustomerProfile],
    event: DBEvent,
    tou: TouSchedule,
    rng: np.random.Generator,
    price_cap: float = 10.0,
) -> list[ParticipationPlan]:
    """Offer prices per customer per event slot.

    Each customer participates at each slot with its participation
    probability and, when it does, offers a truncated-normal price around
    its habitual multiple of the slot's time-of-use rate; zero encodes
    sitting the slot out.
    """
    plans = []
    for profile in profiles:
        prices = []
        for slot in event.slots():
            if rng.random() >= profile.participation_prob:
                prices.append(0.0)
                continue
            rate = tou.rate(slot)
            offer = _truncated_normal(
                rng,
                center=profile.offer_center_frac * rate,
                spread=profile.offer_spread_frac * rate,
                low=0.0,
                high=price_cap,
            )
            prices.append(offer)
        plans.append(ParticipationPlan(customer_id=profile.customer_id, prices=tuple(prices)))
    return plans


@dataclass(frozen=True)
class ReserveModel:
    """Daily reserve-rate profile plus noise, clamped to its operating band.

    The deterministic part dips toward midday (tight afternoons, slack
    nights) on top of a per-day level wobble.
    """

    v_min: float = 0.03
    v_max: float = 0.15
    day_amplitude: float = 0.35     # fraction of the band used by day-level wobble
    noise: float = 0.01

    def profile(self, day: int, slot: int) -> float:
        span = self.v_max - self.v_min
        midday_dip = 0.5 * (1.0 + np.cos(2.0 * np.pi * (slot - 56) / SLOTS_PER_DAY))
        base = self.v_max - span * 0.7 * midday_dip
        day_shift = self.day_amplitude * span * np.sin(0.7 + 2.4 * day)
        return float(np.clip(base + day_shift, self.v_min, self.v_max))


def simulate_reserve(
    model: ReserveModel, day: int, slot: int, rng: np.random.Generator | None = None
) -> float:
    """One reserve-rate draw, bounded to the model's operating band."""
    value = model.profile(day, slot)
    if model.noise > 0:
        if rng is None:
            raise ValueError("noisy reserve model needs an rng")
        value += rng.normal(0.0, model.noise)
    return float(np.clip(value, model.v_min, model.v_max))
