import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lumicell import bayes, io
from lumicell.bayes import MotionParams, Observation
from lumicell.gpr import GridSpec, IntensityMapSet

GRID = GridSpec(0.0, 0.0, 0.1, 21, 11)


def ramp_maps(var=1e-3):
    X, Y = np.meshgrid(GRID.xs, GRID.ys)
    maps = IntensityMapSet(GRID)
    for b, field in ((1, X), (2, Y), (3, X + Y)):
        maps.mean[b] = field
        maps.variance[b] = np.full(GRID.shape, var)
        maps.latent_variance[b] = np.zeros(GRID.shape)
    return maps


def test_uniform_init():
    b = bayes.init_belief(GRID)
    assert b.p.sum() == pytest.approx(1.0)
    assert np.all(b.p == b.p.flat[0])


def test_likelihood_matches_scipy():
    maps = ramp_maps()
    obs = Observation(0, {1: (0.7, True), 2: (0.3, True), 3: (5.0, False)})
    L = bayes.likelihood_grid(maps, obs)
    j, i = 4, 9
    ref = (stats.norm(maps.mean[1][j, i], np.sqrt(1e-3)).pdf(0.7)
           * stats.norm(maps.mean[2][j, i], np.sqrt(1e-3)).pdf(0.3))
    assert L[j, i] == pytest.approx(ref, rel=1e-10)
    assert bayes.likelihood(maps, obs, (0.9, 0.4)) == pytest.approx(ref, rel=1e-10)
    assert np.allclose(np.exp(bayes.log_likelihood_grid(maps, obs)), L, rtol=1e-10)


def test_missing_and_unknown_beacons():
    maps = ramp_maps()
    assert np.all(bayes.likelihood_grid(maps, Observation(0, {})) == 1.0)
    with pytest.raises(bayes.LocalizationError, match="not in map"):
        bayes.likelihood_grid(maps, Observation(0, {99: (0.1, True)}))
    with pytest.raises(bayes.LocalizationError, match="outside"):
        bayes.likelihood(maps, Observation(0, {}), (10.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 0.4), st.floats(0, 2), st.floats(0, 1)), min_size=1, max_size=8),
       st.floats(1e-8, 1.0))
def test_belief_stays_a_distribution(steps, var):
    maps = ramp_maps(var)
    b = bayes.init_belief(GRID)
    for sigma, x, y in steps:
        b = bayes.predict_step(b, MotionParams(sigma))
        b = bayes.update_step(b, maps, Observation(0, {1: (x, True), 2: (y, True)}))
        assert np.all(b.p >= 0)
        assert b.p.sum() == pytest.approx(1.0, abs=1e-9)


def test_underflow_switches_to_log_space():
    maps = ramp_maps(1e-7)
    b = bayes.init_belief(GRID)
    obs = Observation(0, {1: (1.33, True), 2: (0.62, True)})
    direct = b.p * bayes.likelihood_grid(maps, obs)
    assert direct.sum() < 1e-300
    post = bayes.update_step(b, maps, obs)
    (x, y), mass = bayes.map_estimate(post)
    assert (x, y) == pytest.approx((1.3, 0.6))
    assert mass > 0.99


def test_predict_zero_motion_is_identity_and_mass_conserving():
    b = bayes.init_belief(GRID)
    b.p[:] = 0
    b.p[5, 10] = 1.0
    assert np.array_equal(bayes.predict_step(b, MotionParams(0)).p, b.p)
    d = bayes.predict_step(b, MotionParams(0.2))
    assert d.p.sum() == pytest.approx(1.0)
    assert bayes.map_estimate(d)[0] == pytest.approx((1.0, 0.5))
    with pytest.raises(bayes.LocalizationError):
        MotionParams(-1)


def test_map_ties_break_row_major():
    b = bayes.init_belief(GRID)
    assert bayes.map_estimate(b)[0] == (0.0, 0.0)
    b.p[:] = 0
    b.p[3, 7] = b.p[2, 15] = 0.5
    assert bayes.map_estimate(b)[0] == pytest.approx((1.5, 0.2))


def test_static_noiseless_converges_within_half_diagonal():
    maps = ramp_maps()
    truth = (1.23, 0.57)
    obs = Observation(0, {1: (truth[0], True), 2: (truth[1], True), 3: (sum(truth), True)})
    b = bayes.init_belief(GRID)
    for _ in range(100):
        b = bayes.update_step(bayes.predict_step(b, MotionParams(0)), maps, obs)
    (x, y), _ = bayes.map_estimate(b)
    assert np.hypot(x - truth[0], y - truth[1]) <= GRID.resolution * np.sqrt(2) / 2


def test_grid_mismatch():
    other = GridSpec(0.0, 0.0, 0.2, 11, 6)
    with pytest.raises(bayes.LocalizationError):
        bayes.update_step(bayes.init_belief(other), ramp_maps(), Observation())


def test_error_metrics_and_csv(tmp_path):
    m = bayes.error_metrics([[0, 0], [3, 4], [1, 0]], [[0, 0], [0, 0], [0, 0]])
    assert list(m.errors) == [0, 5, 1]
    assert m.mean == pytest.approx(2.0)
    assert m.p90 == pytest.approx(np.percentile([0, 5, 1], 90))
    assert m.cdf[0].tolist() == [0, 0] and m.cdf[-1].tolist() == [100, 5]
    with pytest.raises(bayes.LocalizationError, match="length mismatch"):
        bayes.error_metrics([[0, 0]], [[0, 0], [1, 1]])
    header, rows = io.read_rows(io.write_cdf(tmp_path / "c.csv", m))
    assert header == ["percentile", "error_m"] and len(rows) == 101
