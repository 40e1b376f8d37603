import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings
from hypothesis import strategies as st

from uwacm import InvalidArgument
from uwacm import channel as ch
from uwacm import signal_chain as sc


def custom(paths, **kw):
    kw.setdefault("noise_snr_db", None)
    return ch.ChannelConfig(None, tuple(paths), **kw)


def test_thorp_values():
    # direct evaluation of the formula at 1 kHz
    f2 = 1.0
    expected = 0.11 * f2 / 2 + 44 * f2 / 4101 + 2.75e-4 * f2 + 0.003
    assert ch.thorp_absorption(1.0) == pytest.approx(expected, rel=1e-12)
    assert ch.thorp_absorption(1.0) == pytest.approx(0.0690, abs=5e-5)
    f2 = 200.0 ** 2
    a200 = 0.11 * f2 / (1 + f2) + 44 * f2 / (4100 + f2) + 2.75e-4 * f2 + 0.003
    assert ch.thorp_absorption(200.0) == pytest.approx(a200, rel=1e-12)
    assert ch.thorp_absorption(200.0) > ch.thorp_absorption(10.0)


def test_thorp_rejects_non_positive():
    with pytest.raises(InvalidArgument):
        ch.thorp_absorption(0.0)


@settings(max_examples=100)
@given(st.floats(1e-3, 1e4))
def test_thorp_positive(f):
    assert ch.thorp_absorption(f) > 0


def test_thorp_monotone_above_1khz():
    f = np.linspace(1, 1000, 5000)
    assert np.all(np.diff(ch.thorp_absorption(f)) > 0)


def test_presets():
    tank = ch.preset("tank-clean", seed=3)
    assert len(tank.paths) == 2 and tank.tap_wander_std == 0 and tank.noise_snr_db == 40
    lake = ch.preset("lake-clean")
    assert 4 <= len(lake.paths) <= 6 and lake.doppler_rate > 0 and lake.noise_snr_db == 25
    dist = ch.preset("lake-disturbed")
    assert dist.paths == lake.paths and dist.tap_wander_std == 0.02 and dist.doppler_jitter_std > 0
    with pytest.raises(InvalidArgument, match="tank-clean, lake-clean, lake-disturbed"):
        ch.preset("sea-state-9")


def test_tank_realization_tap_count():
    r = ch.make_channel(ch.preset("tank-clean", seed=5), 10_000)
    assert r.tap_trajectory.shape[1] == 2
    assert r.config.tap_wander_std == 0
    assert np.all(r.tap_trajectory == r.tap_trajectory[0])


def test_absorption_scales_gains():
    cfg = ch.preset("tank-clean")
    r = ch.make_channel(cfg, 1000)
    loss = 10 ** (-ch.thorp_absorption(200.0) * cfg.absorption_distance / 20)
    assert np.allclose(r.tap_trajectory[0], np.array([1.0, 0.3]) * loss, rtol=1e-14)


def test_realization_deterministic():
    cfg = ch.preset("lake-disturbed", seed=9)
    a = ch.make_channel(cfg, 50_000)
    b = ch.make_channel(cfg, 50_000)
    assert np.array_equal(a.tap_trajectory, b.tap_trajectory) and a.noise_seed == b.noise_seed
    x = np.random.default_rng(0).normal(size=50_000)
    assert ch.propagate(x, a).tobytes() == ch.propagate(x, b).tobytes()
    c = ch.make_channel(replace(cfg, seed=10), 50_000)
    assert not np.array_equal(a.tap_trajectory, c.tap_trajectory)


def test_trajectory_covers_signal():
    r = ch.make_channel(ch.preset("lake-clean"), 12_345)
    assert (len(r.tap_trajectory) - 1) * r.block >= 12_345
    assert r.gains(0, 12_345).shape == (12_345, 5)


@pytest.mark.parametrize("bad", [
    dict(paths=()),
    dict(paths=((3, 1.0),)),
    dict(paths=((0, float("nan")),)),
    dict(paths=((0, 1.0), (-2, 0.5))),
    dict(paths=((0, 1.0),), noise_snr_db=70.0),
    dict(paths=((0, 1.0),), tap_wander_std=-1.0),
])
def test_invalid_configs(bad):
    paths = bad.pop("paths")
    with pytest.raises(InvalidArgument):
        ch.make_channel(custom(paths, **bad), 100)


def test_make_channel_rejects_empty():
    with pytest.raises(InvalidArgument):
        ch.make_channel(custom([(0, 1.0)]), 0)


def test_identity_channel():
    x = np.random.default_rng(1).normal(size=1000)
    r = ch.make_channel(custom([(0, 1.0)]), 1000)
    assert np.array_equal(ch.propagate(x, r), x)


def test_pure_delay():
    x = np.random.default_rng(2).normal(size=1000)
    r = ch.make_channel(custom([(0, 0.0), (5, 1.0)]), 1000)
    y = ch.propagate(x, r)
    assert np.all(y[:5] == 0) and np.array_equal(y[5:], x[:-5])
    assert len(y) == len(x)


def test_two_tap_impulse():
    x = np.zeros(16)
    x[0] = 1.0
    r = ch.make_channel(custom([(0, 1.0), (3, 0.5)]), 16)
    y = ch.propagate(x, r)
    ref = np.convolve(x, [1.0, 0, 0, 0.5])[:16]  # direct convolution oracle
    assert np.array_equal(y, ref)
    assert y[0] == 1.0 and y[3] == 0.5


def test_passband_signal_wrapper():
    sig = sc.upconvert(np.ones(100, dtype=complex))
    out = ch.propagate(sig, ch.make_channel(custom([(0, 1.0)]), 100))
    assert isinstance(out, sc.PassbandSignal) and np.array_equal(out.samples, sig.samples)


def test_length_mismatch():
    r = ch.make_channel(custom([(0, 1.0)]), 100)
    with pytest.raises(InvalidArgument):
        ch.propagate(np.zeros(99), r)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_noise_off_linearity(a, b, seed):
    cfg = replace(ch.preset("lake-disturbed", seed=seed), noise_snr_db=None)
    n = 4000
    r = ch.make_channel(cfg, n)
    rng = np.random.default_rng(seed)
    x, z = rng.normal(size=n), rng.normal(size=n)
    lhs = ch.propagate(a * x + b * z, r)
    rhs = a * ch.propagate(x, r) + b * ch.propagate(z, r)
    scale = max(1.0, np.max(np.abs(lhs)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale


@pytest.mark.parametrize("snr", [40.0, 25.0, 0.0])
def test_measured_snr(snr):
    n = 1_000_000
    bits = sc.generate_bits(2 * (n // 500 + 10), seed=3)
    x = sc.transmit(bits).samples[:n]
    cfg = replace(ch.preset("lake-clean", seed=4), noise_snr_db=snr)
    r = ch.make_channel(cfg, n)
    clean = ch.propagate(x, r, noise=False)
    noisy = ch.propagate(x, r)
    assert abs(ch.measured_snr_db(clean, noisy) - snr) < 0.5


def test_random_walk_variance_grows_linearly():
    # Monte-Carlo over 100 seeds against sigma^2 t for a pure gain walk
    sigma = 0.02
    n = 2_000_000
    cfg = custom([(0, 1.0), (7, 0.5)], tap_wander_std=sigma)
    trajs = np.stack([ch.make_channel(replace(cfg, seed=s), n).tap_trajectory for s in range(100)])
    dt = ch.TRAJECTORY_BLOCK / 1e6
    steps = np.array([1000, 4000, 8000])
    var = trajs[:, steps, :].var(axis=0, ddof=1)
    expected = sigma ** 2 * steps * dt
    ratio = var / expected[:, None]
    assert np.all((ratio > 0.6) & (ratio < 1.5)), ratio
    # growth is linear: fitted slope through the origin within 25 %
    t = np.arange(1, trajs.shape[1]) * dt
    v = trajs[:, 1:, 0].var(axis=0, ddof=1)
    slope = float(v @ t / (t @ t))
    assert slope == pytest.approx(sigma ** 2, rel=0.25)


def test_disturbed_preset_variance_increases():
    n = 1_000_000
    trajs = np.stack([ch.make_channel(ch.preset("lake-disturbed", seed=s), n).tap_trajectory
                      for s in range(40)])
    v = trajs[:, :, 0].var(axis=0)
    assert v[-1] > 5 * v[len(v) // 10] > 0


def _ncc_peak(x, y):
    x = (x - x.mean()) / x.std()
    y = (y - y.mean()) / y.std()
    c = np.correlate(y, x, mode="full") / len(x)
    return float(np.max(np.abs(c)))


def test_tank_correlates_more_than_disturbed():
    n = 20_000
    x = sc.transmit(sc.generate_bits(2 * (n // 500 + 10), seed=1)).samples[:n]
    tank, dist = [], []
    for s in range(10):
        tank.append(_ncc_peak(x, ch.propagate(x, ch.make_channel(ch.preset("tank-clean", seed=s), n))))
        dist.append(_ncc_peak(x, ch.propagate(x, ch.make_channel(ch.preset("lake-disturbed", seed=s), n))))
    assert np.median(tank) > np.median(dist)
