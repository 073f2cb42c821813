import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from a2gchan.csi import CsiTensor
from a2gchan.errors import ConfigError, NumericError
from a2gchan.pdp import (antenna_mean_pdp, averaged_pdp, clip_noise, impulse_response,
                         instantaneous_pdp, pdp_series, received_power, relative_delays,
                         rereference, taper, write_pdp_csv)

from conftest import random_tensor, small_config


def on_grid_paths(taps, gains, T=4, M=4, F=100, B=18e6):
    """H(f_k) for paths delayed by whole delay bins n/B on the centered frequency grid."""
    f = (np.arange(F) - F // 2) * B / F
    H = sum(g * np.exp(-2j * np.pi * f * n / B) for n, g in zip(taps, gains))
    return np.broadcast_to(H, (T, M, F)).copy()


def test_parseval_on_random_tensors():
    rng = np.random.default_rng(3)
    for _ in range(20):
        H = rng.standard_normal((5, 4, 37)) + 1j * rng.standard_normal((5, 4, 37))
        h = impulse_response(H)
        e_f, e_t = np.sum(np.abs(H) ** 2), np.sum(np.abs(h) ** 2)
        assert abs(e_t - e_f) <= 1e-9 * e_f


def test_two_on_grid_paths_give_two_taps():
    P = instantaneous_pdp(impulse_response(on_grid_paths([3, 11], [1.0, 0.5j])))
    peak = P.max()
    assert np.allclose(P[..., 3], 100.0)               # unitary IDFT: F |g|^2
    assert np.allclose(P[..., 11] / P[..., 3], 0.25)
    rest = np.delete(P, [3, 11], axis=-1)
    assert np.all(rest < 1e-12 * peak)


def test_averaged_pdp_matches_loop(rng):
    P = rng.random((12, 3, 8))
    W = 4
    got = averaged_pdp(P, W)
    want = np.array([P[i:i + W].mean(axis=(0, 1)) for i in range(12 - W + 1)])
    assert got.shape == (9, 8) and np.allclose(got, want)
    with pytest.raises(ConfigError, match="W=13"):
        averaged_pdp(P, 13)


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (6, 2, 5), elements=st.floats(0, 1e3)), st.integers(1, 6))
def test_averaging_preserves_mean_power(P, W):
    avg = averaged_pdp(P, W)
    assert np.all(avg >= 0)
    per = P.mean(axis=1).sum(axis=-1)
    want = np.array([per[i:i + W].mean() for i in range(6 - W + 1)])
    assert np.allclose(avg.sum(axis=-1), want)


def test_antenna_mean_pdp_chunked(rng):
    x = random_tensor(rng, T=37)
    full = instantaneous_pdp(impulse_response(x)).mean(axis=1)
    assert np.allclose(antenna_mean_pdp(x, chunk=5), full)


def test_relative_delay_axis():
    d = relative_delays(100, 18e6)
    assert d[0] == 0 and d[1] == pytest.approx(1 / 18e6)
    assert d[-1] == pytest.approx(-1 / 18e6) and d[50] < 0


def test_rereference_modes():
    P = np.zeros((3, 8))
    P[0, 5], P[1, 6], P[2, 5] = 1.0, 2.0, 1.0
    g, shift = rereference(P, "global")
    assert shift == 6 and g[1, 0] == 2.0 and g[0, 7] == 1.0
    s, shifts = rereference(P, "snapshot")
    assert list(shifts) == [5, 6, 5] and np.all(s[:, 0] > 0)
    with pytest.raises(ConfigError):
        rereference(P, "median")


def test_clip_noise():
    P = np.array([[1.0, 1e-3, 0.99e-3, 0.5]])
    out = clip_noise(P, 30.0)
    assert list(out[0]) == [1.0, 1e-3, 0.0, 0.5]
    assert np.array_equal(clip_noise(P, None), P)


def test_received_power():
    P = np.array([[4.0, 1.0], [1.0, 1.0]])
    assert list(received_power(P)) == [5.0, 2.0]
    assert list(received_power(P, "los_tap")) == [4.0, 1.0]
    db = received_power(P, db=True)
    assert db[0] == 0 and db[1] == pytest.approx(10 * np.log10(2 / 5))
    with pytest.raises(NumericError):
        received_power(np.zeros((2, 3)), db=True)
    with pytest.raises(ConfigError):
        received_power(P, "peak")


def test_taper_has_unit_power():
    for w in ("hann", "hamming"):
        t = taper(100, w)
        assert np.mean(t ** 2) == pytest.approx(1.0) and np.all(t > 0)
    assert taper(100, None) is None
    with pytest.raises(ConfigError):
        taper(100, "kaiser")


def test_pdp_series_puts_strongest_tap_at_zero_delay():
    H = on_grid_paths([7, 20], [1.0, 0.3], T=30)
    x = CsiTensor(small_config(F=100), H, np.arange(30) * 1e-3)
    s = pdp_series(x, 10, keep_instantaneous=True)
    assert s.averaged.shape == (21, 100) and s.shift == 7
    assert np.argmax(s.averaged[0]) == 0
    assert s.averaged[0, 13] == pytest.approx(0.09 * s.averaged[0, 0])
    assert s.instantaneous.shape == (30, 4, 100) and np.argmax(s.instantaneous[0, 0]) == 0
    assert s.delays[13] == pytest.approx(13 / 18e6)


def test_pdp_csv(tmp_path):
    H = on_grid_paths([0], [1.0], T=5, F=16)
    x = CsiTensor(small_config(F=16), H, np.arange(5) * 1e-3)
    s = pdp_series(x, 2)
    write_pdp_csv(s, tmp_path / "p.csv", db=True, floor_db=-90)
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["time_s", "delay_s", "power_db"] and len(rows) == 1 + 4 * 16
    delays = [float(r[1]) for r in rows[1:17]]
    assert delays == sorted(delays)
    vals = np.array([float(r[2]) for r in rows[1:]])
    assert vals.max() == 0.0 and vals.min() == -90.0
