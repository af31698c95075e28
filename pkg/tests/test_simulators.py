"""Simulator tests: surface fit fidelity, elasticity inversion, reproducibility."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drbid.market import DBEvent
from drbid.simulators import (
    ELASTICITY_BANDS,
    CustomerProfile,
    McpModel,
    ReserveModel,
    TouSchedule,
    generate_participation_plans,
    generate_population,
    make_rng,
    simulate_consumption,
    simulate_mcp,
    simulate_reserve,
)


def surface_reference(model, t, v):
    """Independent evaluation of the fitted surface via a dot product."""
    coeffs = np.array([model.p1, model.p2, model.p3, model.p4, model.p5, model.p6])
    terms = np.array([t * t, v * v, v * t, t, v, 1.0])
    return float(coeffs @ terms)


class TestMcp:
    def test_fitted_value_at_reference_point(self):
        assert simulate_mcp(McpModel(), t=40, reserve=0.10) == pytest.approx(4.263255, abs=1e-9)

    def test_zero_coefficients(self):
        model = McpModel(p1=0, p2=0, p3=0, p4=0, p5=0, p6=0)
        assert simulate_mcp(model, t=10, reserve=0.5) == 0.0

    def test_matches_independent_surface_on_grid(self):
        model = McpModel()
        for t in range(0, 96, 7):
            for v in np.linspace(0.0, 1.0, 23):
                got = simulate_mcp(model, t=t, reserve=float(v))
                want = max(0.0, surface_reference(model, t, float(v)))
                assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_noise_mean_converges_to_surface(self):
        model = McpModel(noise_sigma=0.5)
        rng = make_rng(123, 0)
        draws = [simulate_mcp(model, t=40, reserve=0.10, rng=rng) for _ in range(10_000)]
        assert np.mean(draws) == pytest.approx(4.263255, abs=3 * 0.5 / 100)

    def test_negative_surface_clamped(self):
        model = McpModel(p1=0, p2=0, p3=0, p4=0, p5=0, p6=-3.0)
        assert simulate_mcp(model, t=0, reserve=0.0) == 0.0

    def test_reserve_domain(self):
        with pytest.raises(ValueError):
            simulate_mcp(McpModel(), t=40, reserve=1.2)
        with pytest.raises(ValueError):
            simulate_mcp(McpModel(), t=40, reserve=-0.1)

    def test_noise_requires_rng(self):
        with pytest.raises(ValueError):
            simulate_mcp(McpModel(noise_sigma=0.2), t=40, reserve=0.1)


def _profile(eps_peak=-0.5, p0=100.0):
    return CustomerProfile(
        customer_id=0,
        elasticity={"peak": eps_peak, "semi_peak": eps_peak, "off_peak": eps_peak},
        base_load_kw=np.full(96, p0),
    )


class TestConsumption:
    def test_inverted_elasticity_response(self):
        tou = TouSchedule()
        slot = 54  # peak band, rate 5.0
        p = simulate_consumption(_profile(-0.5, 100.0), tou, slot, settled=True,
                                 offer_price=1.2 * tou.rate(slot))
        assert p == pytest.approx(90.0)

    def test_offer_at_tariff_rate_is_neutral(self):
        tou = TouSchedule()
        p = simulate_consumption(_profile(-0.5, 100.0), tou, 54, True, tou.rate(54))
        assert p == 100.0

    def test_zero_elasticity(self):
        tou = TouSchedule()
        p = simulate_consumption(_profile(0.0, 100.0), tou, 54, True, 9.0)
        assert p == 100.0

    def test_unsettled_customer_keeps_base_load(self):
        p = simulate_consumption(_profile(-0.9, 80.0), TouSchedule(), 54, False, 9.0)
        assert p == 80.0

    def test_non_positive_tariff_rejected(self):
        tou = TouSchedule(rate_peak=0.0)
        with pytest.raises(ValueError):
            simulate_consumption(_profile(), tou, 54, True, 3.0)

    @given(
        eps=st.floats(-1.0, 0.0),
        offer=st.floats(0.0, 10.0),
        p0=st.floats(0.0, 500.0),
    )
    def test_curtailment_bounded_and_zero_at_rate(self, eps, offer, p0):
        tou = TouSchedule()
        p = simulate_consumption(_profile(eps, p0), tou, 54, True, offer)
        assert 0.0 <= p <= p0
        curtailment = p0 - p
        assert curtailment >= 0.0

    def test_curtailment_monotone_in_price_gap(self):
        tou = TouSchedule()
        rate = tou.rate(54)
        gaps = np.linspace(0, 5, 40)
        sheds = [
            100.0 - simulate_consumption(_profile(-0.7, 100.0), tou, 54, True, rate + g)
            for g in gaps
        ]
        assert all(b >= a - 1e-12 for a, b in zip(sheds, sheds[1:]))


class TestPopulation:
    def test_sixteen_customers_within_bands(self):
        profiles = generate_population(16, make_rng(5, 0))
        assert len(profiles) == 16
        for p in profiles:
            for band, (lo, hi) in ELASTICITY_BANDS.items():
                assert lo <= p.elasticity[band] <= hi

    def test_bands_hold_over_many_seeds(self):
        for seed in range(25):
            for p in generate_population(4, make_rng(seed, 0)):
                for band, (lo, hi) in ELASTICITY_BANDS.items():
                    assert lo <= p.elasticity[band] <= hi

    def test_single_customer_has_all_bands(self):
        (p,) = generate_population(1, make_rng(9, 0))
        assert set(p.elasticity) == {"peak", "semi_peak", "off_peak"}
        assert p.base_load_kw.shape == (96,)

    def test_same_seed_same_population(self):
        a = generate_population(16, make_rng(11, 0))
        b = generate_population(16, make_rng(11, 0))
        for pa, pb in zip(a, b):
            assert pa.elasticity == pb.elasticity
            assert np.array_equal(pa.base_load_kw, pb.base_load_kw)

    def test_count_validated(self):
        with pytest.raises(ValueError):
            generate_population(0, make_rng(0, 0))


class TestPlans:
    def test_zero_participation_means_all_zero(self):
        profiles = generate_population(8, make_rng(3, 0), participation_prob=0.0)
        plans = generate_participation_plans(profiles, DBEvent(52, 8), TouSchedule(), make_rng(3, 1))
        assert all(all(x == 0.0 for x in plan.prices) for plan in plans)

    def test_degenerate_distribution_offers_tariff_rate(self):
        profiles = generate_population(
            4, make_rng(3, 0), participation_prob=1.0,
            offer_center_frac=1.0, offer_spread_frac=0.0,
        )
        tou = TouSchedule()
        plans = generate_participation_plans(profiles, DBEvent(52, 8), tou, make_rng(3, 1))
        for plan in plans:
            for n, slot in enumerate(range(52, 60)):
                assert plan.prices[n] == pytest.approx(tou.rate(slot))

    def test_same_seed_identical_plans(self):
        profiles = generate_population(16, make_rng(4, 0))
        a = generate_participation_plans(profiles, DBEvent(52, 8), TouSchedule(), make_rng(4, 1))
        b = generate_participation_plans(profiles, DBEvent(52, 8), TouSchedule(), make_rng(4, 1))
        assert a == b

    def test_offers_respect_cap_and_sign(self):
        profiles = generate_population(16, make_rng(8, 0))
        plans = generate_participation_plans(
            profiles, DBEvent(52, 8), TouSchedule(), make_rng(8, 1), price_cap=10.0
        )
        for plan in plans:
            for x in plan.prices:
                assert 0.0 <= x <= 10.0


class TestReserve:
    def test_noise_free_profile_is_deterministic(self):
        model = ReserveModel(noise=0.0)
        assert simulate_reserve(model, 3, 54) == simulate_reserve(model, 3, 54)
        assert simulate_reserve(model, 3, 54) == model.profile(3, 54)

    def test_draws_stay_in_band(self):
        model = ReserveModel(noise=0.05)
        rng = make_rng(2, 2)
        for _ in range(10_000):
            v = simulate_reserve(model, 0, 56, rng)
            assert model.v_min <= v <= model.v_max

    def test_same_seed_same_series(self):
        model = ReserveModel()
        a = [simulate_reserve(model, 1, s, make_rng(7, 2)) for s in range(52, 60)]
        b = [simulate_reserve(model, 1, s, make_rng(7, 2)) for s in range(52, 60)]
        assert a == b


def test_tou_band_layout():
    tou = TouSchedule()
    assert tou.band(13 * 4) == "peak"
    assert tou.band(9 * 4) == "semi_peak"
    assert tou.band(17 * 4) == "semi_peak"
    assert tou.band(2 * 4) == "off_peak"
    assert tou.rate(13 * 4) == 5.0
