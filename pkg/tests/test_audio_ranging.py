import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactclass.audio_ranging import (
    LOCAL_PATH_M,
    SOUND_SPEED,
    AudioRangingConfig,
    DeviceTimingProfile,
    delay_std,
    delay_std_m,
    networked_schedule,
    pi_fa_audio,
    pi_md_audio,
    simulate_network,
    two_way_exchange,
)
from contactclass.errors import DomainError, SimulationError
from contactclass.propagation import CrowdLayout, crowd_average_pi_md, shell_product

CFG = AudioRangingConfig()
delays = st.floats(0.0, 0.2)


def mp_q(x):
    return float(mp.erfc(mp.mpf(x) / mp.sqrt(2)) / 2)


# configuration


def test_config_invariants():
    for bad in (dict(correlator_spacing=2.0), dict(correlator_spacing=0.0), dict(chip_duration=0), dict(sound_speed=-1), dict(code_length=1)):
        with pytest.raises(DomainError):
            AudioRangingConfig(**bad)
    assert CFG.signal_duration == pytest.approx(0.35)
    assert CFG.chip_rate == pytest.approx(1000.0)


def test_profile_invariants():
    with pytest.raises(DomainError):
        DeviceTimingProfile(tx_delay=-1e-3)
    assert DeviceTimingProfile().local_path == pytest.approx(LOCAL_PATH_M / SOUND_SPEED)


# delay variance


def _delay_std_by_hand(db, spacing=1.0, tc=1e-3):
    snr = 10 ** (db / 10)
    return tc * math.sqrt(spacing / (4 * snr) * (1 + 3 / ((2 - spacing) * snr)))


def test_delay_std_examples():
    assert delay_std(CFG, 6.0) / 1e-3 == pytest.approx(0.332, abs=1e-3)
    assert delay_std(CFG, 12.0) / 1e-3 == pytest.approx(0.137, abs=1e-3)
    assert delay_std_m(CFG, 6.0) == pytest.approx(0.114, abs=1e-3)
    assert delay_std_m(CFG, 12.0) == pytest.approx(0.047, abs=1e-3)
    ratio = delay_std(CFG, 12.0) / delay_std(CFG, 6.0)
    assert 0.40 <= ratio <= 0.45


def test_delay_std_high_snr_limit():
    # correction term vanishes: sigma -> Tc sqrt(spacing / (4 snr))
    snr = 10 ** 6
    assert delay_std(CFG, 60.0) == pytest.approx(1e-3 * math.sqrt(1 / (4 * snr)), rel=1e-5)


@given(st.floats(-10, 40), st.floats(0.05, 1.95))
def test_delay_std_formula(db, spacing):
    cfg = AudioRangingConfig(correlator_spacing=spacing)
    assert delay_std(cfg, db) == pytest.approx(_delay_std_by_hand(db, spacing), rel=1e-12)


@given(st.floats(-10, 40), st.floats(1e-3, 10))
def test_delay_std_decreasing(db, step):
    assert delay_std(CFG, db + step) < delay_std(CFG, db)


def test_delay_std_rejects_non_finite():
    with pytest.raises(DomainError):
        delay_std(CFG, math.inf)


# decision curves


def test_audio_md_examples():
    assert pi_md_audio(0.05, 2.0, 2.0) == 0.5
    assert abs(pi_md_audio(0.05, 2.0, 1.954) - 0.179) <= 2e-3
    assert pi_md_audio(0.05, 2.0, 1.954) == pytest.approx(mp_q(0.046 / 0.05), rel=1e-12)


def test_audio_crowd_average():
    layout = CrowdLayout.densest_packing()
    avg = crowd_average_pi_md(lambda d: float(pi_md_audio(0.05, 2.0, d)), layout)
    assert abs(avg - 0.016) <= 0.002


def test_audio_fa_examples():
    delta = 1 / math.sqrt(math.pi)
    assert pi_fa_audio(0.05, 2.0, 2.0 + delta) < 1e-28
    assert pi_fa_audio(0.05, 2.0, 2.05) == pytest.approx(0.1587, abs=1e-4)
    total = shell_product(lambda d: float(pi_fa_audio(0.05, 2.0, d)), 2.0)
    assert total < 1e-9


def test_audio_domain():
    with pytest.raises(DomainError):
        pi_md_audio(0.05, 2.0, 2.1)
    with pytest.raises(DomainError):
        pi_md_audio(0.0, 2.0, 1.0)
    with pytest.raises(DomainError):
        pi_fa_audio(0.05, 2.0, 2.0)


@given(st.floats(0.01, 1.999), st.floats(0.005, 0.5))
def test_audio_reflection_about_dc(d, sigma):
    # both sides are Q((d_c - d) / sigma)
    assert pi_md_audio(sigma, 2.0, d) == pytest.approx(pi_fa_audio(sigma, 2.0, 4.0 - d), abs=1e-15)


@pytest.mark.xfail(strict=True, reason="the two terms are equal, not complementary, so the sum is 2 Q")
def test_audio_literal_complement_sum():
    d = 1.95
    assert abs(pi_md_audio(0.05, 2.0, d) + pi_fa_audio(0.05, 2.0, 4.0 - d) - 1.0) < 1e-12


def test_audio_lognormal_symmetry_lost():
    # inversion about d_c, which works for lognormal shadowing, does not work here
    md = pi_md_audio(0.05, 2.0, 1.0)
    fa = pi_fa_audio(0.05, 2.0, 4.0)
    assert md != fa
    assert md > 0 and fa >= 0


def test_audio_curves_monotone():
    inside = np.linspace(1.0, 2.0, 100)
    outside = np.linspace(2.001, 3.0, 100)
    assert np.all(np.diff(pi_md_audio(0.05, 2.0, inside)) >= 0)
    assert np.all(np.diff(pi_fa_audio(0.05, 2.0, outside)) <= 0)


# two-way exchange


def test_exchange_noiseless_examples():
    _, d = two_way_exchange(DeviceTimingProfile(0.013, 0.021), DeviceTimingProfile(0.002, 0.0), 2.0)
    assert d == pytest.approx(2.0, abs=1e-12)
    ex, d = two_way_exchange(DeviceTimingProfile(tx_delay=0.037), DeviceTimingProfile(rx_delay=0.011), 3.5)
    assert d == pytest.approx(3.5, abs=1e-12)
    assert ex.tau == pytest.approx(3.5 / SOUND_SPEED, abs=1e-15)


def test_exchange_deltas_follow_timestamps():
    a, b = DeviceTimingProfile(0.01, 0.02, clock_offset=3.0), DeviceTimingProfile(0.005, 0.001, clock_offset=7.5)
    ex, _ = two_way_exchange(a, b, 1.2)
    assert ex.delta_a == pytest.approx(ex.t_rx_a - ex.t_self_rx_a + a.local_path, abs=1e-15)
    assert ex.delta_b == pytest.approx(ex.t_rx_b - ex.t_self_rx_b + b.local_path, abs=1e-15)


@given(delays, delays, delays, delays, st.floats(0, 100), st.floats(0, 100), st.floats(0.05, 20))
@settings(max_examples=300)
def test_exchange_cancels_device_delays(txa, rxa, txb, rxb, oa, ob, dist):
    a = DeviceTimingProfile(txa, rxa, clock_offset=oa)
    b = DeviceTimingProfile(txb, rxb, clock_offset=ob)
    _, got = two_way_exchange(a, b, dist)
    assert abs(got - dist) <= 1e-12 * SOUND_SPEED


def test_exchange_negative_timestamp():
    with pytest.raises(SimulationError):
        two_way_exchange(DeviceTimingProfile(clock_offset=-5.0), DeviceTimingProfile(), 1.0)


def test_exchange_domain():
    with pytest.raises(DomainError):
        two_way_exchange(DeviceTimingProfile(), DeviceTimingProfile(), 0.0)
    with pytest.raises(DomainError):
        two_way_exchange(DeviceTimingProfile(), DeviceTimingProfile(), 1.0, timestamp_noise=1e-4)


def test_exchange_range_bias_adds_to_distance():
    _, d = two_way_exchange(DeviceTimingProfile(range_bias=0.02), DeviceTimingProfile(range_bias=0.04), 2.0)
    assert d == pytest.approx(2.03, abs=1e-12)


def test_exchange_noise_propagation():
    # four noisy receptions, each Delta t gets two, tau halves the sum
    sigma_t = 1e-4
    rng = np.random.default_rng(11)
    a, b = DeviceTimingProfile(0.02, 0.01), DeviceTimingProfile(0.03, 0.005)
    errs = np.array([two_way_exchange(a, b, 2.0, timestamp_noise=sigma_t, rng=rng)[1] - 2.0 for _ in range(100_000)])
    assert errs.std(ddof=1) == pytest.approx(SOUND_SPEED * sigma_t, rel=0.01)
    assert abs(errs.mean()) < 4 * SOUND_SPEED * sigma_t / math.sqrt(100_000)


# networked protocol


@pytest.mark.parametrize("k,cycle,values", [(2, 0.8, 2), (5, 2.0, 20)])
def test_schedule_examples(k, cycle, values):
    s = networked_schedule(k, CFG)
    assert s.cycle_seconds == pytest.approx(cycle)
    assert s.n_values == values
    assert s.slot_seconds == pytest.approx(0.4)


def test_schedule_orders_by_id():
    s = networked_schedule(3, CFG, device_ids=[7, 2, 5])
    assert s.device_ids == (2, 5, 7)
    assert s.slot_starts == pytest.approx((0.0, 0.4, 0.8))


def test_schedule_domain():
    with pytest.raises(DomainError):
        networked_schedule(1, CFG)
    with pytest.raises(DomainError):
        networked_schedule(3, CFG, device_ids=[1, 1, 2])


def test_network_line_layout():
    profiles = [DeviceTimingProfile(0.01, 0.03, clock_offset=2.0), DeviceTimingProfile(0.0, 0.02), DeviceTimingProfile(0.04, 0.0, clock_offset=9.0)]
    res = simulate_network([0.0, 1.5, 3.0], profiles, CFG)
    assert res.distances[(0, 1)] == pytest.approx(1.5, abs=1e-12)
    assert res.distances[(0, 2)] == pytest.approx(3.0, abs=1e-12)
    assert res.distances[(1, 2)] == pytest.approx(1.5, abs=1e-12)
    assert len(res.deltas) == 6
    assert len(res.events) == 9
    assert res.transcript_csv().count("\n") == 10


@given(st.lists(st.tuples(delays, delays, st.floats(0, 50)), min_size=4, max_size=4))
@settings(max_examples=50)
def test_network_cancels_delays_2d(params):
    pos = [(0.0, 0.0), (1.0, 2.0), (3.0, -1.0), (-2.0, 0.5)]
    profiles = [DeviceTimingProfile(tx, rx, clock_offset=o) for tx, rx, o in params]
    res = simulate_network(pos, profiles, CFG)
    for (i, j), d in res.distances.items():
        assert d == pytest.approx(math.dist(pos[i], pos[j]), abs=1e-12 * SOUND_SPEED)


def test_network_domain():
    with pytest.raises(DomainError):
        simulate_network([0.0, 0.0], None, CFG)
    with pytest.raises(DomainError):
        simulate_network([0.0, 1.0], [DeviceTimingProfile()], CFG)
    with pytest.raises(DomainError):
        simulate_network([0.0, 1.0], None, CFG, timestamp_noise=1e-4)
