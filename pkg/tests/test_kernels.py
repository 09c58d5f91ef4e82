import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from mstnhp.core import UNIT_SQUARE, EventSequence
from mstnhp.kernels import (
    BIV1, BIV2, BIV3, BIV4, COMPARE, PRESETS, Biv4Kernel, SeparableKernelParams,
    TemporalHawkesSpec, compensator_st, compensator_temporal, raw_intensity_field,
    spatial_factor, spatial_mass, spec_from_dict, st_intensity, temporal_factor,
    temporal_intensity,
)

EMPTY_ST = EventSequence([], [], 10.0, np.zeros((0, 2)), UNIT_SQUARE)


def one_event(k=1, t=0.0, s=(0.5, 0.5), T=10.0):
    return EventSequence([k], [t], T, [s], UNIT_SQUARE)


# -- scalar factors -----------------------------------------------------------


def test_temporal_factor_indicator_is_strict():
    assert temporal_factor(0.3, 0.0) == 0.0
    assert temporal_factor(0.7, -1.0) == 0.0


def test_temporal_factor_value():
    assert temporal_factor(0.3, 1.0) == pytest.approx(0.222245, abs=1e-6)
    assert temporal_factor(0.3, 1.0) == pytest.approx(0.3 * math.exp(-0.3), rel=1e-15)


def test_spatial_factor_values():
    assert spatial_factor(0.5, (0.0, 0.0)) == pytest.approx(0.318310, abs=1e-6)
    # oracle: (1 / (2 pi 0.25)) exp(-0.5) = 0.3861294...
    assert spatial_factor(0.25, (0.5, 0.0)) == pytest.approx(0.38612941052, abs=1e-10)
    assert spatial_factor(0.25, (0.5, 0.0)) == pytest.approx(math.exp(-0.5) / (0.5 * math.pi))


def test_spatial_factor_integrates_to_one():
    val, _ = integrate.dblquad(lambda y, x: spatial_factor(0.5, (x, y)), -12, 12, -12, 12)
    assert val == pytest.approx(1.0, abs=1e-8)


# -- spatio-temporal intensities ---------------------------------------------------


@pytest.mark.parametrize("name", ["biv1", "biv2", "biv3", "biv4"])
def test_empty_history_gives_baseline(name):
    for k in (1, 2):
        assert st_intensity(PRESETS[name], EMPTY_ST, k, (0.3, 0.7), 1.0) == pytest.approx(0.1)


def test_biv1_single_event_value():
    lam = st_intensity(BIV1, one_event(), 1, (0.5, 0.5), 1.0)
    assert lam == pytest.approx(0.117686, abs=1e-6)
    # brute-force term sum
    assert lam == pytest.approx(0.1 + 0.25 * (1 / math.pi) * 0.3 * math.exp(-0.3), rel=1e-14)


def test_biv2_inhibition_clamps_to_zero():
    # each coincident type-2 event removes about 0.0095 from lambda_1
    n = 15
    hist = EventSequence([2] * n, np.arange(n) * 1e-6, 1.0, [[0.5, 0.5]] * n, UNIT_SQUARE)
    raw = raw_intensity_field(BIV2, hist.types, hist.times, hist.locations, 0.01,
                              np.array([[0.5, 0.5]]))
    assert raw[0, 0] < 0
    assert st_intensity(BIV2, hist, 1, (0.5, 0.5), 0.01) == 0.0


def test_st_intensity_rejects_bad_type_and_time():
    with pytest.raises(ValueError):
        st_intensity(BIV1, EMPTY_ST, 3, (0.5, 0.5), 1.0)
    with pytest.raises(ValueError):
        st_intensity(BIV1, one_event(t=2.0), 1, (0.5, 0.5), 1.0)


def test_biv4_pair_factors():
    h = one_event(k=2, t=0.0)
    s = (0.6, 0.5)
    sp = math.exp(-2 * 0.1)
    dt = 1.5
    assert st_intensity(BIV4, h, 1, s, dt) == pytest.approx(0.1 + 0.03 * math.exp(-0.3 * dt) * sp)
    assert st_intensity(BIV4, h, 2, s, dt) == pytest.approx(0.1 + math.sin(dt) / 8 * sp)
    h1 = one_event(k=1)
    assert st_intensity(BIV4, h1, 1, s, dt) == pytest.approx(0.1 + 0.15 * (0.5 + dt) ** -1.3 * sp)
    assert st_intensity(BIV4, h1, 2, s, dt) == pytest.approx(
        0.1 + (0.05 * math.exp(-0.2 * dt) + 0.16 * math.exp(-0.8 * dt)) * sp)


def test_biv4_sine_factor_vanishes_beyond_four():
    h = one_event(k=2)
    assert st_intensity(BIV4, h, 2, (0.5, 0.5), 4.5) == pytest.approx(0.1)
    # negative lobe of the sine is floored at zero inside the support too
    assert st_intensity(BIV4, h, 2, (0.5, 0.5), 3.5) == pytest.approx(0.1)


def test_biv4_time_integral_matches_quadrature():
    for k in range(2):
        for l in range(2):
            for a, b in ((0.0, 2.0), (1.0, 5.0), (3.0, 9.0)):
                exact = BIV4.time_integral(np.array([l]), np.array([a]), np.array([b]))[k, 0]
                num, _ = integrate.quad(lambda u: Biv4Kernel._g(k, l, np.array([u]))[0], a, b,
                                        limit=200, points=[np.pi, 4.0])
                assert exact == pytest.approx(num, abs=1e-10)


@pytest.mark.parametrize("spec", [BIV1, BIV2, BIV3, BIV4, COMPARE])
def test_envelope_dominates_future_weights(spec):
    l = np.array([0, 1])
    for u in np.linspace(0.0, 6.0, 25):
        env = spec.time_envelope(l, np.array([u, u]))
        for v in np.linspace(u, u + 10.0, 60):
            w = np.maximum(spec.time_weights(l, np.array([v, v])), 0.0)
            assert np.all(w <= env + 1e-15)


def test_superposition_of_disjoint_histories():
    rng = np.random.default_rng(0)
    locs = rng.uniform(size=(6, 2))
    times = np.sort(rng.uniform(0, 5, 6))
    types = rng.integers(1, 3, 6)
    pts = rng.uniform(size=(4, 2))

    def excess(idx):
        return raw_intensity_field(BIV2, types[idx], times[idx], locs[idx], 6.0, pts) - \
            BIV2.mu[:, None]

    a, b = np.arange(3), np.arange(3, 6)
    assert np.allclose(excess(np.arange(6)), excess(a) + excess(b), atol=1e-15)


@given(st.floats(0.01, 5.0), st.floats(0.0, 5.0), st.integers(1, 2), st.integers(1, 2))
def test_unclamped_sum_decays_between_events(t0, gap, k, l):
    spec = BIV3
    h = one_event(k=l, t=0.0, s=(0.3, 0.6))
    p = np.array([[0.4, 0.4]])
    a = raw_intensity_field(spec, h.types, h.times, h.locations, t0, p)[k - 1, 0]
    b = raw_intensity_field(spec, h.types, h.times, h.locations, t0 + gap, p)[k - 1, 0]
    assert b <= a + 1e-15


@given(st.floats(0.0, 2 * math.pi), st.floats(0.0, 0.3))
def test_intensity_depends_only_on_distance(theta, r):
    src = (0.5, 0.5)
    h = one_event(s=src)
    base = st_intensity(BIV3, h, 2, (src[0] + r, src[1]), 1.0)
    rot = (src[0] + r * math.cos(theta), src[1] + r * math.sin(theta))
    assert st_intensity(BIV3, h, 2, rot, 1.0) == pytest.approx(base, rel=1e-12)


def test_biv4_continuous_between_events():
    h = EventSequence([1, 2], [0.0, 0.7], 10.0, [[0.2, 0.2], [0.6, 0.6]], UNIT_SQUARE)
    ts = np.linspace(0.71, 8.0, 4000)
    vals = np.array([raw_intensity_field(BIV4, h.types, h.times, h.locations, t,
                                         np.array([[0.5, 0.5]]))[:, 0] for t in ts])
    assert np.max(np.abs(np.diff(vals, axis=0))) < 1e-3


# -- temporal intensities and compensators -----------------------------------------


def test_temporal_empty_history_baseline():
    empty = EventSequence([], [], 10.0)
    assert temporal_intensity(COMPARE, empty, 1, 1.0) == pytest.approx(0.3)


def test_temporal_one_event_value():
    h = EventSequence([1], [0.0], 10.0)
    val = temporal_intensity(COMPARE, h, 1, 1.0)
    assert val == pytest.approx(0.340880, abs=1e-6)
    assert val == pytest.approx(0.3 + 0.15 * math.exp(-1.3), rel=1e-14)


def test_temporal_jump_at_event_is_alpha():
    h = EventSequence([2], [1.0], 10.0)
    before = raw_intensity_field(COMPARE, h.types, h.times, None, 1.0)
    after = raw_intensity_field(COMPARE, h.types, h.times, None, 1.0 + 1e-12)
    assert after - before == pytest.approx(COMPARE.alpha[:, 1], abs=1e-9)


def test_poisson_compensator():
    spec = TemporalHawkesSpec(np.array([0.3, 0.3]), np.zeros((2, 2)), np.array([1.0, 1.0]))
    assert compensator_temporal(spec, EventSequence([], [], 10.0), 1, 0.0, 10.0) == \
        pytest.approx(3.0)


def test_single_event_complete_integral():
    h = EventSequence([1], [0.0], 1e3)
    c = compensator_temporal(COMPARE, h, 2, 0.0, 1e3) - 0.3 * 1e3
    assert c == pytest.approx(0.01 / 0.4, rel=1e-12)


def test_temporal_compensator_matches_trapezoid():
    h = EventSequence([1, 2, 1], [0.4, 1.1, 2.5], 5.0)
    for k in (1, 2):
        exact = compensator_temporal(COMPARE, h, k, 0.0, 5.0)
        # piecewise trapezoid between events, 10^4 points per piece
        edges = [0.0, 0.4, 1.1, 2.5, 5.0]
        num = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            u = np.linspace(a, b, 10**4)
            u[0] = np.nextafter(a, np.inf)
            lam = np.array([raw_intensity_field(COMPARE, h.types, h.times, None, x)[k - 1]
                            for x in u])
            num += np.trapezoid(lam, u)
        assert exact == pytest.approx(num, rel=1e-6)


def test_st_compensator_matches_quadrature():
    h = EventSequence([1, 2], [0.5, 1.5], 4.0, [[0.3, 0.4], [0.8, 0.9]], UNIT_SQUARE)
    mass = spatial_mass(BIV1, h.types, h.locations, UNIT_SQUARE, 64, 64)
    assert np.all((mass > 0) & (mass < 1))
    exact = compensator_st(BIV1, h, 1, 0.0, 4.0, mass)
    ts = np.linspace(0.0, 4.0, 4001)
    from mstnhp.core import midpoint_grid
    _, _, pts, w = midpoint_grid(UNIT_SQUARE, 64, 64)
    curve = np.array([raw_intensity_field(BIV1, h.types, h.times, h.locations, t, pts)[0] @ w
                      for t in ts])
    assert exact == pytest.approx(np.trapezoid(curve, ts), rel=1e-3)


def test_spec_invariants_enforced():
    with pytest.raises(ValueError):
        SeparableKernelParams(np.array([0.1]), np.array([[0.1]]), np.array([[0.0]]),
                              np.array([[0.5]]))
    with pytest.raises(ValueError):
        SeparableKernelParams(np.array([-0.1]), np.array([[0.1]]), np.array([[1.0]]),
                              np.array([[0.5]]))
    with pytest.raises(ValueError):
        TemporalHawkesSpec(np.array([0.0]), np.array([[0.1]]), np.array([1.0]))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_spec_dict_round_trip(name):
    spec = PRESETS[name]
    again = spec_from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()
