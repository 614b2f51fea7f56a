import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lumicell import io
from lumicell.channel import (ChannelError, Luminaire, ReceiverModel, channel_gain, gain_field,
                              rss_model, superpose)
from lumicell.phy import Waveform


def lambert_oracle(lx, ly, h, rx, ry, m=1, area=1.0, fov=60.0):
    dx, dy = rx - lx, ry - ly
    d = math.sqrt(dx * dx + dy * dy + h * h)
    cos_a = h / d                       # both normals vertical: angles coincide
    if math.degrees(math.acos(cos_a)) > fov:
        return 0.0
    return (m + 1) * area / (2 * math.pi * d * d) * cos_a ** m * cos_a


def test_gain_directly_below():
    lum = Luminaire(1, (0, 0, 2.0))
    rx = ReceiverModel((0, 0, 0))
    assert channel_gain(lum, rx) == pytest.approx(2 / (2 * math.pi * 4))


@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0.5, 4), st.integers(1, 4))
def test_gain_matches_oracle(x, y, h, m):
    lum = Luminaire(1, (0.0, 0.0, h), m=m)
    rx = ReceiverModel((x, y, 0.0))
    assert channel_gain(lum, rx) == pytest.approx(lambert_oracle(0, 0, h, x, y, m), rel=1e-12, abs=1e-15)


def test_fov_cutoff():
    lum = Luminaire(1, (0, 0, 1.0))
    inside = ReceiverModel((math.tan(math.radians(59)), 0, 0))
    outside = ReceiverModel((math.tan(math.radians(61)), 0, 0))
    assert channel_gain(lum, inside) > 0
    assert channel_gain(lum, outside) == 0.0


def test_facing_away_and_degenerate():
    assert channel_gain(Luminaire(1, (0, 0, -1.0)), ReceiverModel((0, 0, 0))) == 0.0
    with pytest.raises(ChannelError, match="degenerate"):
        channel_gain(Luminaire(1, (0, 0, 0)), ReceiverModel((0, 0, 0)))
    with pytest.raises(ChannelError):
        ReceiverModel(fov_half_angle=0)
    with pytest.raises(ChannelError):
        Luminaire(70000, (0, 0, 1))


@given(st.floats(0.01, 100))
def test_rss_linear_in_power(c):
    rx = ReceiverModel((0.3, 0.2, 0))
    a = rss_model(Luminaire(1, (0, 0, 2.0), tx_power=1.0), rx)
    b = rss_model(Luminaire(1, (0, 0, 2.0), tx_power=c), rx)
    assert b == pytest.approx(c * a, rel=1e-12)


def test_gain_field_matches_pointwise():
    lums = [Luminaire(1, (0, 0, 2.5)), Luminaire(2, (3, 0, 2.5), m=2)]
    rx = ReceiverModel((0, 0, 0))
    xs, ys = np.linspace(-5, 5, 11), np.linspace(-1, 4, 6)
    f = gain_field(lums, rx, xs, ys)
    for k, lum in enumerate(lums):
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                assert f[k, j, i] == pytest.approx(channel_gain(lum, rx.moved(x, y)), rel=1e-12, abs=1e-15)


def test_gain_grid_csv(tmp_path):
    lums = [Luminaire(1, (0, 0, 2.5))]
    f = gain_field(lums, ReceiverModel(), [0, 1], [0])
    header, rows = io.read_rows(io.write_gain_grid(tmp_path / "g.csv", [0, 1], [0], {1: f[0]}))
    assert header == ["x", "y", "beacon_id", "gain"] and len(rows) == 2


def _w(v, rate=48_000):
    return Waveform(np.asarray(v, dtype=float), rate)


def test_superpose_identity_and_linearity():
    w = _w(np.arange(5.0))
    assert np.array_equal(superpose([(w, 1.0)]).samples, w.samples)
    assert np.allclose(superpose([(w, 0.3), (w, 0.5)]).samples, 0.8 * w.samples)


def test_superpose_pads_and_checks():
    out = superpose([(_w([1, 1, 1]), 1.0), (_w([2]), 1.0)])
    assert list(out.samples) == [3, 1, 1]
    with pytest.raises(ChannelError):
        superpose([(_w([1]), 1.0), (_w([1], 96_000), 1.0)])
    with pytest.raises(ChannelError):
        superpose([(_w([1]), -1.0)])


@given(st.lists(st.tuples(st.lists(st.floats(-1, 1), min_size=1, max_size=8), st.floats(0, 2)),
                min_size=1, max_size=5), st.randoms())
def test_superpose_commutative(items, rnd):
    ws = [(_w(v), g) for v, g in items]
    shuffled = ws[:]
    rnd.shuffle(shuffled)
    assert np.allclose(superpose(ws).samples, superpose(shuffled).samples, atol=1e-9)


def test_superpose_noise_variance():
    out = superpose([(_w(np.zeros(100_000)), 0.0)], noise_sigma=0.01, seed=1)
    assert np.var(out.samples) == pytest.approx(1e-4, rel=0.05)
    again = superpose([(_w(np.zeros(100_000)), 0.0)], noise_sigma=0.01, seed=1)
    assert np.array_equal(out.samples, again.samples)
