import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmsched.channel import (
    FadingConfig,
    bessel_reference,
    gain_trace,
    init_channel,
    read_trace,
    write_trace,
)
from hmsched.phy import ConfigError


def test_same_seed_same_doppler():
    a = init_channel(FadingConfig(n_users=20, master_seed=7))
    b = init_channel(FadingConfig(n_users=20, master_seed=7))
    assert np.array_equal(a.doppler_hz, b.doppler_hz)
    assert a.t == 0


def test_degenerate_interval():
    ch = init_channel(FadingConfig(n_users=5, doppler_range_hz=(10.0, 10.0)))
    assert np.all(ch.doppler_hz == 10.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63))
def test_doppler_in_range(seed):
    ch = init_channel(FadingConfig(n_users=20, master_seed=seed))
    assert np.all((ch.doppler_hz >= 5.0) & (ch.doppler_hz <= 15.0))


def test_trace_bit_identical():
    cfg = FadingConfig(n_users=20, master_seed=123)
    assert gain_trace(cfg, 10_000).tobytes() == gain_trace(cfg, 10_000).tobytes()


def test_step_matches_trace():
    cfg = FadingConfig(n_users=4, master_seed=5)
    ch = init_channel(cfg)
    stepped = np.array([ch.step() for _ in range(50)])
    assert ch.t == 50
    np.testing.assert_array_equal(stepped, gain_trace(cfg, 50))
    # trace continues from the current slot
    np.testing.assert_array_equal(ch.trace(10), gain_trace(cfg, 60)[50:])


def test_adding_users_keeps_existing_traces():
    small = gain_trace(FadingConfig(n_users=3, master_seed=9), 500)
    large = gain_trace(FadingConfig(n_users=8, master_seed=9), 500)
    np.testing.assert_array_equal(small, large[:, :3])


def test_gains_positive_and_scaled():
    g = gain_trace(FadingConfig(n_users=3, mean_gain=(1e-3, 2e-3, 5e-4), master_seed=1), 2000)
    assert np.all(g > 0)
    ref = gain_trace(FadingConfig(n_users=3, mean_gain=1.0, master_seed=1), 2000)
    np.testing.assert_allclose(g, ref * [1e-3, 2e-3, 5e-4], rtol=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(mean_gain=0.0),
    dict(mean_gain=-1e-3),
    dict(mean_gain=(1e-3, 1e-3)),
    dict(doppler_range_hz=(15.0, 5.0)),
    dict(doppler_range_hz=(0.0, 5.0)),
    dict(n_users=0),
    dict(n_oscillators=4),
    dict(slot_duration_s=0.0),
])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        FadingConfig(**kwargs)


def test_trace_csv_roundtrip(tmp_path):
    g = gain_trace(FadingConfig(n_users=3, master_seed=2), 100)
    path = tmp_path / "trace.csv"
    write_trace(path, g)
    assert path.read_text().splitlines()[0] == "t,h_1,h_2,h_3"
    np.testing.assert_array_equal(read_trace(path), g)


def test_trace_import_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ConfigError):
        read_trace(path)
    path.write_text("t,h_1\n0,-1e-3\n")
    with pytest.raises(ConfigError):
        read_trace(path)


def test_short_statistics():
    # coarse version of the long-run checks in test_acceptance
    cfg = FadingConfig(n_users=4, doppler_range_hz=(10.0, 10.0), mean_gain=1.0, master_seed=4)
    ch = init_channel(cfg)
    c = ch.complex_at(np.arange(200_000))
    assert np.all(np.abs((np.abs(c) ** 2).mean(axis=0) - 1) < 0.05)
    x = c.real[:, 0] - c.real[:, 0].mean()
    lags = np.arange(1, 21)
    ac = np.array([np.mean(x[:-k] * x[k:]) for k in lags]) / np.mean(x * x)
    assert np.max(np.abs(ac - bessel_reference(10.0, 1.67e-3, lags))) <= 0.05


def test_bessel_reference_values():
    assert bessel_reference(10.0, 1.67e-3, [0])[0] == 1.0
    # first zero of J0 at 2.404826
    tau = 2.404825557695773 / (2 * np.pi * 10.0 * 1.67e-3)
    assert abs(bessel_reference(10.0, 1.67e-3, [tau])[0]) < 1e-12
