"""Unit tests for the sense-and-send rate, its gradient and the water-level solver."""

from __future__ import annotations

import itertools
import math
from unittest.mock import patch

import numpy as np
import pytest

from sensecap.bounds import genie_power, genie_rate, waterfill_two_state
from sensecap.model import (
    ChannelParams,
    SensingModel,
    SolverError,
    TrafficModel,
    cap,
    derive_limits,
    long_run_on_fraction,
)
from sensecap.sense_opt import (
    PowerProfile,
    achievable_rate,
    average_power,
    check_monotone,
    layer2_power,
    optimize_profile,
    perfect_sensing_capacity,
    profile_slacks,
    rate_gradient,
)
from tests.conftest import make_traffic, random_feasible_profile

# ---------------------------------------------------------------------------
# PowerProfile
# ---------------------------------------------------------------------------


class TestPowerProfile:
    def test_shape_checked(self):
        with pytest.raises(ValueError, match="\\(2, T\\)"):
            PowerProfile(np.zeros((3, 4)), np.zeros((3, 4)))

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            PowerProfile(-np.ones((2, 2)), np.zeros((2, 2)))

    def test_read_only(self):
        profile = PowerProfile.zeros(3)
        with pytest.raises(ValueError):
            profile.rho_n[0, 0] = 1.0

    def test_flat_and_rows(self):
        profile = PowerProfile.flat(2, (3.0, 1.0), 0.5)
        assert profile.rows() == [
            (0, 1, 3.0, 0.5),
            (0, 2, 3.0, 0.5),
            (1, 1, 1.0, 0.5),
            (1, 2, 1.0, 0.5),
        ]
        np.testing.assert_allclose(profile.total, [[3.5, 3.5], [1.5, 1.5]])


# ---------------------------------------------------------------------------
# Achievable rate
# ---------------------------------------------------------------------------


class TestAchievableRate:
    def test_zero_profile(self, ref_params, ref_traffic, perfect):
        report = achievable_rate(PowerProfile.zeros(10), ref_params, ref_traffic, perfect)
        assert report.r2 == 0.0
        assert all(v == 0.0 for v in report.components.values())

    def test_single_slot_always_off(self):
        params = ChannelParams(7.0, 3.0, 0.5, 0.01, 3.5)
        traffic = TrafficModel.point_mass(1, 2, pi0=1.0)
        profile = PowerProfile(np.array([[6.0], [0.0]]), np.zeros((2, 1)))
        report = achievable_rate(profile, params, traffic, SensingModel(0.0, 0.0))
        assert report.r2 == pytest.approx(cap(6.0) / 2.0, abs=1e-12)
        assert report.slacks["power"] == pytest.approx(0.0)

    def test_coin_flip_sensing_weights(self, ref_params, ref_traffic):
        rng = np.random.default_rng(3)
        profile = PowerProfile(rng.uniform(0, 3, (2, 10)), rng.uniform(0, 1, (2, 10)))
        report = achievable_rate(profile, ref_params, ref_traffic, SensingModel(0.5, 0.5))
        expected = 0.25 * sum(report.components.values()) / 11
        assert report.r2 == pytest.approx(expected, abs=1e-12)

    def test_perfect_sensing_matches_direct_sum(self, ref_params):
        traffic = make_traffic(6, seed=11, pi0=0.3)
        rng = np.random.default_rng(5)
        n, s = rng.uniform(0, 3, (2, 6)), rng.uniform(0, 1, (2, 6))
        profile = PowerProfile(n, s)
        report = achievable_rate(profile, ref_params, traffic, SensingModel(), check=False)
        inr2 = ref_params.inr2
        cdf = traffic.cdf
        r00 = sum((1 - cdf[t]) * cap(n[0, t] + s[0, t]) for t in range(6)) + sum(
            cdf[t] * (cap(n[0, t] / (1 + inr2 + s[0, t])) + cap(s[0, t])) for t in range(6)
        )
        r11 = sum(cdf[t] * cap(n[1, t] + s[1, t]) for t in range(6)) + sum(
            (1 - cdf[t]) * (cap(n[1, t] / (1 + inr2 + s[1, t])) + cap(s[1, t]))
            for t in range(6)
        )
        assert report.components[(0, 0)] == pytest.approx(r00, abs=1e-12)
        assert report.components[(1, 1)] == pytest.approx(r11, abs=1e-12)
        assert report.r2 == pytest.approx((0.3 * r00 + 0.7 * r11) / 7, abs=1e-12)

    def test_violation_raises(self, ref_params, ref_traffic, perfect):
        profile = PowerProfile.flat(10, (8.0, 8.0), 0.0)
        with pytest.raises(ValueError, match="inr constraint"):
            achievable_rate(profile, ref_params, ref_traffic, perfect)

    def test_slot_count_mismatch(self, ref_params, ref_traffic, perfect):
        with pytest.raises(ValueError, match="slots"):
            achievable_rate(PowerProfile.zeros(4), ref_params, ref_traffic, perfect)

    def test_zero_cross_gain_has_no_interference_cap(self, ref_traffic, perfect):
        params = ChannelParams(7.0, 7.0, 0.5, 0.0, 3.5)
        with pytest.raises(ZeroDivisionError, match="h21_sq = 0"):
            achievable_rate(PowerProfile.zeros(10), params, ref_traffic, perfect)

    def test_average_power(self, ref_traffic):
        profile = PowerProfile.flat(10, (2.0, 4.0), 0.0)
        assert average_power(profile, ref_traffic, SensingModel()) == pytest.approx(30.0)

    def test_swap_gain(self, ref_params, ref_traffic, perfect):
        # moving row-0 Layer-1 power one slot earlier helps whenever F(t+1) > F(t)
        rng = np.random.default_rng(9)
        for _ in range(20):
            t = int(rng.integers(0, 9))
            rho = float(rng.uniform(0.1, 6.0))
            early = np.zeros((2, 10))
            late = np.zeros((2, 10))
            early[0, t] = rho
            late[0, t + 1] = rho
            zero = np.zeros((2, 10))
            args = (ref_params, ref_traffic, perfect)
            r_early = achievable_rate(PowerProfile(early, zero), *args)
            r_late = achievable_rate(PowerProfile(late, zero), *args)
            assert r_early.r2 > r_late.r2

    def test_layer2_preference(self, ref_params, ref_traffic):
        rng = np.random.default_rng(17)
        sensing = SensingModel(0.2, 0.1)
        delta = 1e-3
        for _ in range(50):
            profile = random_feasible_profile(
                rng, ref_params, ref_traffic, sensing, sic=1.2, inr_c=7.0
            )
            s_hat, t = int(rng.integers(0, 2)), int(rng.integers(0, 10))
            if profile.rho_n[s_hat, t] < delta:
                continue
            n, s = profile.rho_n.copy(), profile.rho_s.copy()
            n[s_hat, t] -= delta
            s[s_hat, t] += delta
            before = achievable_rate(profile, ref_params, ref_traffic, sensing).r2
            after = achievable_rate(PowerProfile(n, s), ref_params, ref_traffic, sensing).r2
            assert after >= before - 1e-15


# ---------------------------------------------------------------------------
# Gradient
# ---------------------------------------------------------------------------


class TestGradient:
    def test_matches_finite_differences(self, ref_params):
        rng = np.random.default_rng(23)
        h = 1e-6
        for _ in range(20):
            traffic = make_traffic(5, seed=int(rng.integers(1 << 30)))
            sensing = SensingModel(*rng.uniform(0.0, 0.4, 2))
            n, s = rng.uniform(0.2, 3.0, (2, 5)), rng.uniform(0.2, 1.0, (2, 5))
            d_n, d_s = rate_gradient(PowerProfile(n, s), ref_params, traffic, sensing)
            for grad, which in ((d_n, 0), (d_s, 1)):
                s_hat, t = int(rng.integers(0, 2)), int(rng.integers(0, 5))
                arrays = [n.copy(), s.copy()]
                arrays[which][s_hat, t] += h
                plus = achievable_rate(PowerProfile(*arrays), ref_params, traffic, sensing)
                arrays[which][s_hat, t] -= 2 * h
                minus = achievable_rate(PowerProfile(*arrays), ref_params, traffic, sensing)
                fd = (plus.r2 - minus.r2) / (2 * h)
                assert grad[s_hat, t] == pytest.approx(fd, rel=1e-5)


# ---------------------------------------------------------------------------
# Layer 2
# ---------------------------------------------------------------------------


class TestLayer2:
    def test_reference(self, ref_params):
        assert layer2_power(derive_limits(ref_params), 7.0) == pytest.approx(1.25)

    def test_negative_sic(self):
        limits = derive_limits(ChannelParams(7.0, 7.0, 0.1, 0.5, 1.0))
        assert layer2_power(limits, 7.0) == 0.0

    def test_capped_by_inr(self):
        # SIC_C = 10, INR_C = 2
        limits = derive_limits(ChannelParams(7.0, 7.0, 2.2, 1.75, 3.5))
        assert limits.sic_c == pytest.approx(8.9)
        assert layer2_power(limits, 7.0) == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# Water-level solver
# ---------------------------------------------------------------------------


class TestOptimizeProfile:
    def test_reference_scenario_sits_at_cap(self, ref_params, ref_traffic, perfect):
        # INR_C = SNR2 here, so (T+1) SNR2 always covers T slots at the cap
        profile, report = optimize_profile(ref_params, ref_traffic, perfect)
        np.testing.assert_allclose(profile.total, 7.0)
        np.testing.assert_allclose(profile.rho_s, 1.25)
        assert report.multiplier == 0.0
        assert check_monotone(profile, inr_c=7.0).passed

    def test_budget_binding_feasible_and_monotone(self, tight_params, ref_traffic, perfect):
        profile, report = optimize_profile(tight_params, ref_traffic, perfect)
        slacks = profile_slacks(profile, tight_params, ref_traffic, perfect)
        assert slacks["power"] == pytest.approx(0.0, abs=1e-8 * 33)
        assert slacks["power"] >= 0.0
        assert slacks["inr"] >= -1e-9
        assert slacks["sic"] >= -1e-9
        assert check_monotone(profile, inr_c=7.0).passed
        assert report.multiplier is not None and report.multiplier > 0
        np.testing.assert_allclose(profile.rho_s, 1.25)

    def test_invisible_primary_gives_flat_profile(self):
        params = ChannelParams(7.0, 7.0, 0.0, 0.5, 3.5)
        traffic = make_traffic(8, seed=4)
        profile, _ = optimize_profile(params, traffic, SensingModel(0.1, 0.1))
        for row in profile.rho_n:
            np.testing.assert_allclose(row, row[0], atol=1e-9)
        assert not profile.rho_s.any()

    def test_no_switch_matches_two_state_waterfill(self):
        params = ChannelParams(7.0, 7.0, 0.1, 0.1, 3.5)
        t_len = 10
        traffic = TrafficModel.point_mass(t_len, t_len + 1, pi0=0.5)
        profile, _ = optimize_profile(params, traffic, SensingModel())
        rho0, rho1 = waterfill_two_state(params.inr2, 0.5, (t_len + 1) * 7.0 / t_len, 35.0)
        np.testing.assert_allclose(profile.rho_n[0], rho0, rtol=1e-7)
        np.testing.assert_allclose(profile.rho_n[1], rho1, rtol=1e-7)

    def test_zero_budget(self, ref_traffic, perfect):
        params = ChannelParams(7.0, 0.0, 0.5, 0.5, 3.5)
        profile, report = optimize_profile(params, ref_traffic, perfect)
        assert not profile.total.any()
        assert report.r2 == 0.0

    def test_caps_fit_within_budget(self, ref_traffic, perfect):
        params = ChannelParams(7.0, 50.0, 0.5, 1.0, 1.0)
        profile, report = optimize_profile(params, ref_traffic, perfect)
        np.testing.assert_allclose(profile.total, 1.0)
        assert report.multiplier == 0.0

    def test_zero_cross_gain_propagates(self, ref_traffic, perfect):
        with pytest.raises(ZeroDivisionError):
            optimize_profile(ChannelParams(7.0, 7.0, 0.5, 0.0, 3.5), ref_traffic, perfect)

    def test_noisy_sensing_monotone(self, tight_params, ref_traffic):
        sensing = SensingModel(0.2, 0.2)
        profile, _ = optimize_profile(tight_params, ref_traffic, sensing)
        assert check_monotone(profile, inr_c=7.0).passed

    def test_beats_random_profiles(self, tight_params, ref_traffic):
        rng = np.random.default_rng(31)
        sensing = SensingModel(0.1, 0.3)
        _, best = optimize_profile(tight_params, ref_traffic, sensing)
        for _ in range(200):
            profile = random_feasible_profile(
                rng, tight_params, ref_traffic, sensing, sic=1.25, inr_c=7.0
            )
            rate = achievable_rate(profile, tight_params, ref_traffic, sensing).r2
            assert rate <= best.r2 + 1e-9

    def test_decodable_power_above_budget_spread_flat(self):
        # SIC_C = 8 and INR_C = 7 exceed SNR2 = 1, so every slot is pure Layer 2
        params = ChannelParams(7.0, 1.0, 2.0, 0.5, 3.5)
        traffic = TrafficModel.uniform(10, 0.5)
        profile, report = optimize_profile(params, traffic, SensingModel())
        assert not profile.rho_n.any()
        np.testing.assert_allclose(profile.rho_s, 1.1, rtol=1e-7)
        assert report.r2 == pytest.approx(10.0 / 11.0 * cap(1.1), rel=1e-7)
        assert report.r2 > 0.4865

    @pytest.mark.parametrize(
        "channel",
        [(7.0, 1.0, 2.0, 0.5, 3.5), (7.0, 1.6, 0.6, 0.5, 3.5), (7.0, 3.0, 0.5, 0.5, 3.5)],
        ids=["pure_layer2", "layer2_kink", "budget_binding"],
    )
    def test_beats_random_profiles_in_every_regime(self, channel):
        params = ChannelParams(*channel)
        traffic = TrafficModel.uniform(10, 0.5)
        sensing = SensingModel(0.1, 0.2)
        limits = derive_limits(params)
        sic = min(limits.sic_plus, limits.inr_c)
        _, best = optimize_profile(params, traffic, sensing)
        rng = np.random.default_rng(17)
        for _ in range(200):
            profile = random_feasible_profile(
                rng, params, traffic, sensing, sic=sic, inr_c=limits.inr_c
            )
            assert achievable_rate(profile, params, traffic, sensing).r2 <= best.r2 + 1e-8

    def test_bisection_cap_attaches_best_iterate(self, tight_params, ref_traffic, perfect):
        with (
            patch("sensecap.sense_opt.MAX_BISECTION_ITERS", 1),
            pytest.raises(SolverError, match="did not converge") as exc,
        ):
            optimize_profile(tight_params, ref_traffic, perfect)
        profile = exc.value.profile
        assert isinstance(profile, PowerProfile)
        slacks = profile_slacks(profile, tight_params, ref_traffic, perfect)
        assert min(slacks.values()) >= 0.0
        rate = achievable_rate(profile, tight_params, ref_traffic, perfect).r2
        assert exc.value.rate == pytest.approx(rate)

    def test_below_genie(self, ref_params, tight_params):
        for params, t_len in itertools.product((ref_params, tight_params), (2, 5, 10)):
            traffic = TrafficModel.uniform(t_len, 0.5)
            rate = perfect_sensing_capacity(params, traffic).r2
            beta = long_run_on_fraction(traffic)
            snr2 = params.snr2 * (t_len + 1) / t_len
            limits = derive_limits(params, beta)
            bound = genie_rate(genie_power(limits, snr2, beta), limits, beta)
            assert rate <= t_len / (t_len + 1) * bound + 1e-9


# ---------------------------------------------------------------------------
# Perfect-sensing capacity
# ---------------------------------------------------------------------------


class TestPerfectSensing:
    def test_always_off_closed_form(self):
        params = ChannelParams(7.0, 7.0, 0.1, 0.1, 3.5)
        t_len = 10
        traffic = TrafficModel.point_mass(t_len, t_len + 1, pi0=1.0)
        report = perfect_sensing_capacity(params, traffic)
        expected = t_len / (t_len + 1) * cap((t_len + 1) * 7.0 / t_len)
        assert report.r2 == pytest.approx(expected, rel=1e-8)

    def test_persistent_primary_no_margin(self):
        params = ChannelParams(7.0, 7.0, 0.5, 0.5, 0.0)
        traffic = TrafficModel.point_mass(6, 7, pi0=0.0)
        assert perfect_sensing_capacity(params, traffic).r2 == 0.0

    def test_equals_noisy_at_zero_error(self, ref_params, ref_traffic):
        _, noisy = optimize_profile(ref_params, ref_traffic, SensingModel(0.0, 0.0))
        assert perfect_sensing_capacity(ref_params, ref_traffic).r2 == noisy.r2

    def test_increases_with_block_length(self, ref_params):
        rates = [
            perfect_sensing_capacity(ref_params, TrafficModel.uniform(t, 0.5)).r2
            for t in (5, 10, 20, 50)
        ]
        assert all(a < b for a, b in zip(rates, rates[1:], strict=False))

    def test_sensing_errors_cost_rate(self, tight_params, ref_traffic):
        clean = perfect_sensing_capacity(tight_params, ref_traffic).r2
        _, noisy = optimize_profile(tight_params, ref_traffic, SensingModel(0.2, 0.2))
        assert noisy.r2 < clean


# ---------------------------------------------------------------------------
# Monotone structure
# ---------------------------------------------------------------------------


class TestCheckMonotone:
    def test_counterexample(self):
        profile = PowerProfile(np.array([[3.0, 1.0, 2.0], [0.0, 0.0, 0.0]]), np.zeros((2, 3)))
        report = check_monotone(profile)
        assert not report.checks["row0_non_increasing"]
        assert report.violations == ["row 0 increases at t=2->3"]

    def test_row1_zero_after_positive(self):
        profile = PowerProfile(np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros((2, 2)))
        report = check_monotone(profile)
        assert not report.checks["row1_non_decreasing"]
        assert not report.checks["row1_zeros_left"]

    def test_cap_checks_only_with_finite_cap(self):
        profile = PowerProfile.flat(3, (2.0, 2.0), 0.0)
        assert "row0_caps_left" not in check_monotone(profile).checks
        assert "row0_caps_left" not in check_monotone(profile, inr_c=math.inf).checks
        assert check_monotone(profile, inr_c=2.0).passed

    def test_cap_not_propagated(self):
        profile = PowerProfile(np.array([[1.0, 2.0, 2.0], [2.0, 2.0, 2.0]]), np.zeros((2, 3)))
        report = check_monotone(profile, inr_c=2.0)
        assert not report.checks["row0_caps_left"]
