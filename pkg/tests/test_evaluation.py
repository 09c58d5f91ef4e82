import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mstnhp.core import UNIT_SQUARE, EventSequence, RandomStream, Rectangle
from mstnhp.ctlstm import ModelConfig, NeuralHawkes, intensity_at
from mstnhp.evaluation import (
    GridSpec, cumulative_mean_map, intensity_field, read_curve_csv, read_map_csv,
    recovery_metrics, spatial_map, temporal_curve, write_curve_csv, write_map_csv,
)
from mstnhp.kernels import BIV1, COMPARE, SeparableKernelParams, raw_intensity_field
from mstnhp.simulate import simulate

EMPTY = EventSequence([], [], 10.0, np.zeros((0, 2)), UNIT_SQUARE)
HIST = EventSequence([1, 2, 1, 2, 2], [0.8, 2.1, 2.2, 5.0, 7.5], 10.0,
                     [[0.3, 0.3], [0.7, 0.2], [0.5, 0.6], [0.1, 0.9], [0.6, 0.55]], UNIT_SQUARE)


def constant_spec(c):
    return SeparableKernelParams(np.array([c, c]), np.zeros((2, 2)), np.ones((2, 2)),
                                 np.full((2, 2), 0.5))


def neural(seed=0):
    return NeuralHawkes.initialize(ModelConfig("mstnhp", 2, 6, 3), RandomStream(seed))


def test_grid_spec():
    assert len(GridSpec().time_grid(10.0)) == 512
    assert GridSpec(times=(1.0, 2.0)).time_grid(10.0).tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        GridSpec(nx=1)


def test_constant_field_curve_is_flat():
    curve = temporal_curve(constant_spec(0.3), EMPTY, np.linspace(0, 10, 7), 8, 8)
    assert np.allclose(curve, 0.3, atol=1e-14)


def test_empty_history_biv1_curve_is_baseline():
    curve = temporal_curve(BIV1, EMPTY, nx=16, ny=16)
    assert curve.shape == (512, 2)
    assert np.allclose(curve, 0.1, atol=1e-14)


def test_curve_matches_monte_carlo_spatial_integral():
    rng = np.random.default_rng(11)
    pts = rng.uniform(size=(10**6, 2))
    times = rng.uniform(0.9, 10.0, 5)
    curve = temporal_curve(BIV1, HIST, times, 64, 64)
    for t, row in zip(times, curve):
        mc = np.maximum(raw_intensity_field(BIV1, HIST.types, HIST.times, HIST.locations, t,
                                            pts), 0.0).mean(axis=1)
        assert np.all(np.abs(row - mc) < 0.01 * mc)


def test_quadrature_converges():
    times = np.linspace(0, 10, 64)
    coarse = temporal_curve(BIV1, HIST, times, 32, 32)
    fine = temporal_curve(BIV1, HIST, times, 64, 64)
    assert np.all(np.abs(fine - coarse) < 0.01 * fine)


def test_temporal_model_curve_is_intensity():
    seq = EventSequence([1, 2], [1.0, 3.0], 5.0)
    times = np.array([0.5, 2.0, 4.0])
    curve = temporal_curve(COMPARE, seq, times)
    assert curve[1, 0] == pytest.approx(0.3 + 0.15 * math.exp(-1.3))


def test_spatial_map_constant_and_shape():
    m = spatial_map(constant_spec(0.2), EMPTY, 1.0, 5, 4)
    assert m.shape == (2, 4, 5)
    assert np.all(m == 0.2)


def test_spatial_map_peaks_at_event_cell():
    seq = EventSequence([1], [1.0], 10.0, [[0.72, 0.31]], UNIT_SQUARE)
    nx = ny = 20
    m = spatial_map(BIV1, seq, 1.5, nx, ny)
    iy, ix = np.unravel_index(np.argmax(m[0]), m[0].shape)
    assert (ix, iy) == (int(0.72 * nx), int(0.31 * ny))


def test_spatial_map_rejects_time_outside_window():
    with pytest.raises(ValueError):
        spatial_map(BIV1, EMPTY, 11.0)


def test_neural_maps_strictly_positive():
    m = neural()
    m.params["w"][...] = -30.0
    assert np.all(spatial_map(m, HIST, 3.0, 8, 8) > 0)
    assert np.all(cumulative_mean_map(m, HIST, 5.0, 8, 8, 16) > 0)


def test_cumulative_map_constant_and_single_point():
    assert np.allclose(cumulative_mean_map(constant_spec(0.4), EMPTY, 6.0, 4, 4, 9), 0.4)
    one = cumulative_mean_map(BIV1, HIST, 3.0, 6, 6, times=[3.0])
    assert np.array_equal(one, spatial_map(BIV1, HIST, 3.0, 6, 6))


def test_cumulative_map_nested_horizons():
    grid = np.linspace(0.0, 10.0, 41)
    a = cumulative_mean_map(BIV1, HIST, 4.0, 6, 6, times=grid)
    b = cumulative_mean_map(BIV1, HIST, 8.0, 6, 6, times=grid)
    n1, n2 = np.sum(grid <= 4.0), np.sum(grid <= 8.0)
    extra = sum(spatial_map(BIV1, HIST, t, 6, 6) for t in grid[(grid > 4.0) & (grid <= 8.0)])
    assert np.allclose(b, (n1 * a + extra) / n2, atol=1e-14)


def test_cumulative_map_rejects_horizon_beyond_window():
    with pytest.raises(ValueError):
        cumulative_mean_map(BIV1, EMPTY, 12.0)


def test_neural_field_matches_pointwise_intensity():
    m = neural(3)
    pts = np.array([[0.1, 0.2], [0.9, 0.4]])
    field = intensity_field(m, HIST, [2.5, 9.0], pts)
    states = m.run(HIST)
    direct = intensity_at(m, states, np.array([9.0, 9.0]), pts)
    assert np.allclose(field[1].T, direct, atol=1e-15)


def test_fitted_and_true_curves_share_grid_and_history():
    seq = simulate(BIV1, 10.0, RandomStream(4))
    times = GridSpec(n_times=32).time_grid(seq.T)
    fit = temporal_curve(neural(), seq, times, 8, 8)
    true = temporal_curve(BIV1, seq, times, 8, 8)
    assert fit.shape == true.shape == (32, 2)


# -- metrics -------------------------------------------------------------------------------


def test_metrics_identical_and_offset():
    a = np.array([0.1, 0.4, 0.2, 0.9])
    assert recovery_metrics(a, a) == (0.0, pytest.approx(1.0))
    rmse, corr = recovery_metrics(a + 0.3, a)
    assert rmse == pytest.approx(0.3) and corr == pytest.approx(1.0)


def test_metrics_hand_case():
    rmse, corr = recovery_metrics([1, 2, 3], [1, 2, 4])
    assert rmse == pytest.approx(0.57735, abs=1e-5)
    assert rmse == pytest.approx(math.sqrt(1 / 3), rel=1e-15)
    assert corr == pytest.approx(np.corrcoef([1, 2, 3], [1, 2, 4])[0, 1])


def test_metrics_constant_input_gives_undefined_correlation():
    rmse, corr = recovery_metrics([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    assert corr is None and rmse == pytest.approx(math.sqrt(5 / 3))
    with pytest.raises(ValueError):
        recovery_metrics([1, 2], [1, 2, 3])


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=20), st.floats(0.1, 5), st.floats(-5, 5))
def test_correlation_affine_invariant(xs, scale, shift):
    a = np.array(xs)
    b = np.sin(a) + a
    _, c1 = recovery_metrics(a, b)
    _, c2 = recovery_metrics(scale * a + shift, b)
    if c1 is None or c2 is None or np.std(a) < 1e-6:
        return
    assert c2 == pytest.approx(c1, abs=1e-9)


# -- CSV ---------------------------------------------------------------------------------


def test_curve_csv_round_trip(tmp_path):
    times = np.linspace(0, 1, 5)
    curves = np.random.default_rng(0).uniform(size=(5, 2))
    write_curve_csv(tmp_path / "c.csv", times, curves)
    t, c = read_curve_csv(tmp_path / "c.csv")
    assert np.array_equal(t, times) and np.array_equal(c, curves)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "t,lambda_1,lambda_2"


def test_map_csv_round_trip(tmp_path):
    vals = np.random.default_rng(1).uniform(size=(3, 4))
    dom = Rectangle(-1, 1, -1, 1)
    write_map_csv(tmp_path / "m.csv", vals, dom)
    got, xr, yr = read_map_csv(tmp_path / "m.csv")
    assert np.array_equal(got, vals) and xr == (-1.0, 1.0) and yr == (-1.0, 1.0)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[1] == "nx,4" and lines[2] == "ny,3"
