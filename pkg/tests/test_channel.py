import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavrelay.channel import (
    FadingModel,
    expected_log_exponential,
    link_distance,
    link_windows,
    mc_expected_rate,
    rate_hd,
    rate_lower_bound_dl,
    rate_lower_bound_ul,
    slot_rates,
    ul_sinr,
    windowed_rates,
)
from uavrelay.scenario import ChannelParams, Device, UavParams

from conftest import toy_scenario

P = ChannelParams()
U = UavParams(n_slots=10, cache_cap=1e9, p_max=0.0631, start=(0.0, 0.0), end=(10.0, 0.0))
# hand-evaluated with the standard library, see the derivation in each test
SIGMA2 = 7.962143411069939e-14
P_UAV = 10 ** 1.8 * 1e-3

coords = st.floats(-1e3, 1e3, allow_nan=False)


def test_noise_power_default():
    assert P.noise_power == pytest.approx(SIGMA2, rel=1e-12)


@pytest.mark.parametrize("q, w, expected", [
    ((10.0, 20.0), (10.0, 20.0), 100.0),
    ((300.0, 400.0), (0.0, 0.0), 509.9019513592785),
])
def test_link_distance(q, w, expected):
    assert link_distance(q, w, 100.0) == pytest.approx(expected, rel=1e-12)


@given(coords, coords, coords, coords)
def test_link_distance_symmetric(a, b, c, d):
    assert link_distance((a, b), (c, d), 100.0) == link_distance((c, d), (a, b), 100.0)


def test_link_distance_rejects_nonpositive_altitude():
    with pytest.raises(ValueError):
        link_distance((0, 0), (0, 0), 0.0)


def test_ul_sinr_no_interference():
    d = 150.0
    expected = 0.01 * 0.7 * 1e-3 / (d ** 2.4 * SIGMA2)
    assert ul_sinr(0.01, 0.7, d, 0.0, P) == pytest.approx(expected, rel=1e-12)


def test_ul_sinr_hand_value():
    # 0.01 W * 1e-3 / (100**2.4 * (1e-8 * 10**1.8 mW + sigma2))
    assert ul_sinr(0.01, 1.0, 100.0, P_UAV, P) == pytest.approx(0.2511569492866042, rel=1e-9)


def test_ul_sinr_without_rsi_matches_hd_snr():
    off = ChannelParams(rsi_coeff=0.0)
    hd = 0.02 * 1e-3 / (120.0 ** 2.4 * SIGMA2)
    assert ul_sinr(0.02, 1.0, 120.0, 5.0, off) == pytest.approx(hd, rel=1e-12)


@pytest.mark.parametrize("fn", [rate_lower_bound_dl, rate_hd])
@pytest.mark.parametrize("a, p", [(0.0, 0.01), (1.0, 0.0)])
def test_rates_vanish(fn, a, p):
    assert fn(a, p, (0.0, 0.0), (5.0, 5.0), P, U) == 0.0


@pytest.mark.parametrize("a, p", [(0.0, 0.01), (1.0, 0.0)])
def test_ul_rate_vanishes(a, p):
    assert rate_lower_bound_ul(a, p, (0.0, 0.0), (5.0, 5.0), 0.1, P, U) == 0.0


def test_ul_rate_hand_value():
    # 20e6 * log2(1 + exp(-E) * 0.01 * 1e-3 / (100**2.4 * sigma2)), overhead
    r = rate_lower_bound_ul(1.0, 0.01, (3.0, 4.0), (3.0, 4.0), 0.0, P, U)
    assert r == pytest.approx(202549705.35712096, rel=1e-9)


def test_dl_rate_hand_value():
    r = rate_lower_bound_dl(1.0, P_UAV, (0.0, 0.0), (0.0, 0.0), P, U)
    assert r == pytest.approx(255678840.33055967, rel=1e-9)


def test_hd_rate_hand_value_at_150m():
    off = math.sqrt(150.0 ** 2 - 100.0 ** 2)
    r = rate_hd(1.0, 0.01, (off, 0.0), (0.0, 0.0), P, U)
    assert r == pytest.approx(174513936.49801332, rel=1e-9)


def test_hd_equals_ul_without_rsi():
    off = ChannelParams(rsi_coeff=0.0)
    q, w = (40.0, 70.0), (-20.0, 10.0)
    assert rate_hd(0.3, 0.01, q, w, P, U) == pytest.approx(
        rate_lower_bound_ul(0.3, 0.01, q, w, 7.0, off, U), rel=1e-14)
    assert rate_lower_bound_dl(0.3, 0.01, q, w, P, U) == pytest.approx(
        rate_lower_bound_ul(0.3, 0.01, q, w, 7.0, off, U), rel=1e-14)


@given(st.floats(0, 1), st.floats(1e-6, 1), st.floats(1e-6, 1), st.floats(0, 500), st.floats(0, 500))
@settings(max_examples=200)
def test_rate_monotonicity(a, p_lo, p_hi, r_near, r_far):
    p_lo, p_hi = sorted((p_lo, p_hi))
    r_near, r_far = sorted((r_near, r_far))
    w = (0.0, 0.0)
    assert rate_hd(a, p_lo, (r_near, 0), w, P, U) <= rate_hd(a, p_hi, (r_near, 0), w, P, U) * (1 + 1e-12)
    assert rate_hd(a, p_lo, (r_far, 0), w, P, U) <= rate_hd(a, p_lo, (r_near, 0), w, P, U) * (1 + 1e-12)
    full = rate_hd(1.0, p_lo, (r_near, 0), w, P, U)
    assert rate_hd(a, p_lo, (r_near, 0), w, P, U) == pytest.approx(a * full, rel=1e-12, abs=1e-9)


def test_windowed_rates_pattern():
    dev = Device(1, (0.0, 0.0), 1e6, 2, 5)
    s = windowed_rates(np.ones((2, 6)), dev, 6, slot_len=0.5)
    np.testing.assert_array_equal(s.windowed_ul, [0, 1, 1, 1, 1, 0])
    np.testing.assert_array_equal(s.windowed_dl, [0, 0, 0, 0, 0, 1])
    assert s.throughput_ul == 0.5 * s.total_ul


def test_windowed_rates_full_uplink_has_no_downlink():
    dev = Device(1, (0.0, 0.0), 1e6, 1, 6)
    assert windowed_rates(np.ones((2, 6)), dev, 6).total_dl == 0.0


@given(st.integers(1, 12), st.integers(0, 12), st.floats(0, 1e7))
def test_windowed_constant_rate_sum(n_start, extra, r):
    N = 12
    n_end = min(N, n_start + extra)
    dev = Device(1, (0.0, 0.0), 1e6, n_start, n_end)
    s = windowed_rates(np.full((2, N), r), dev, N)
    assert s.total_ul == pytest.approx((n_end - n_start + 1) * r, rel=1e-12)
    assert s.total_dl == pytest.approx((N - n_end) * r, rel=1e-12)


def test_windowed_rates_shape_check():
    with pytest.raises(ValueError):
        windowed_rates(np.ones((2, 5)), Device(1, (0, 0), 1.0, 1, 2), 6)


def test_link_windows_policies():
    s = toy_scenario()
    ul, dl = link_windows(s, "FD")
    np.testing.assert_array_equal(ul[0], [1, 1, 1, 1, 0, 0, 0, 0])
    np.testing.assert_array_equal(dl[0], [0, 0, 0, 0, 1, 1, 1, 1])
    _, dl_hd = link_windows(s, "HD")
    np.testing.assert_array_equal(dl_hd[0], [0, 0, 0, 0, 0, 1, 1, 1])
    _, dl_pd = link_windows(s.replace(hd_dl_policy="per_device"), "HD")
    np.testing.assert_array_equal(dl_pd, dl)


def test_slot_rates_interference_excludes_own_downlink():
    s = toy_scenario()
    K, N = s.n_devices, s.n_slots
    q = np.linspace(s.uav.start, s.uav.end, N)
    a = np.full((K, N), 0.5)
    p1 = np.full((K, N), 0.01)
    p2 = np.array([np.full(N, 0.02), np.full(N, 0.03)])
    r1, r2 = slot_rates(s, q, a, a, p1, p2, "FD")
    expected = rate_lower_bound_ul(0.5, 0.01, q, s.devices[0].position, 0.03, s.channel, s.uav)
    np.testing.assert_allclose(r1[0], expected, rtol=1e-14)
    r1_hd, r2_hd = slot_rates(s, q, a, a, p1, p2, "HD")
    assert np.all(r1_hd >= r1)
    np.testing.assert_array_equal(r2, r2_hd)


def test_fading_mean_unit_power():
    for G in (0.0, 3.0):
        x = FadingModel(G, 7).sample_gain_sq(200_000)
        assert abs(x.mean() - 1.0) < 0.01


def test_fading_rejects_negative_factor():
    with pytest.raises(ValueError):
        FadingModel(-1.0)


def test_mc_closed_form_at_snr_10():
    est = mc_expected_rate(1.0, 1.0, 10.0, FadingModel(0.0, 1), 100_000)
    exact = math.exp(0.1) * 1.8229239584193906 / math.log(2)  # E1(0.1) from tables
    assert abs(est.mean - exact) <= est.half_width
    assert math.log2(1 + math.exp(-0.5772156649015329) * 10) <= est.mean - est.half_width


def test_mc_zero_power():
    est = mc_expected_rate(1.0, 0.0, 10.0, FadingModel(0.0, 1), 10_000)
    assert est.mean == 0.0 and est.std_error == 0.0


def test_mc_needs_samples():
    with pytest.raises(ValueError):
        mc_expected_rate(1.0, 1.0, 1.0, FadingModel(), 100)


def test_mc_reproducible_and_worker_independent():
    f = FadingModel(0.0, 11)
    a = mc_expected_rate(1.0, 1.0, 3.0, f, 150_000)
    b = mc_expected_rate(1.0, 1.0, 3.0, f, 150_000, workers=4)
    assert a == b


@pytest.mark.parametrize("snr", [1e-4, 2e-3, 1e-2, 5.0])
def test_expected_log_matches_quadrature(snr):
    from scipy import integrate

    val, _ = integrate.quad(lambda t: math.log1p(snr * t) * math.exp(-t), 0, math.inf)
    assert expected_log_exponential(snr) == pytest.approx(val, rel=1e-8)


def test_jensen_gap_shrinks_with_snr():
    # the gap peaks near unit SNR and decreases monotonically below it
    snrs = [1.0, 0.3, 0.1, 0.01, 1e-3, 1e-4]
    gaps = [expected_log_exponential(s) / math.log(2) - math.log2(1 + math.exp(-0.5772156649015329) * s)
            for s in snrs]
    assert all(g >= 0 for g in gaps)
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
