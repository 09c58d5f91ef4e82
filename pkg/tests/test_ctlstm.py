import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mstnhp import autodiff as ad
from mstnhp.core import UNIT_SQUARE, EventSequence, RandomStream, STEvent
from mstnhp.ctlstm import IntervalState, ModelConfig, NeuralHawkes, intensity_at
from mstnhp.likelihood import MCConfig, sequence_loglik
from _helpers import central_difference, rel_error

TOY = EventSequence([1, 2, 2, 1, 2], [0.7, 1.3, 2.9, 3.1, 4.6], 6.0,
                    [[0.2, 0.3], [0.8, 0.1], [0.5, 0.5], [0.45, 0.9], [0.1, 0.6]], UNIT_SQUARE)


def model(variant="mstnhp", D=8, seed=0, bias_scale=0.0):
    m = NeuralHawkes.initialize(ModelConfig(variant, 2, D, 4), RandomStream(seed))
    if bias_scale:
        m.params["b"][:] = np.random.default_rng(seed).uniform(-bias_scale, bias_scale,
                                                               m.params["b"].shape)
    return m


def zero_model(variant="mstnhp"):
    m = model(variant)
    for k in m.params.names():
        m.params[k][...] = 0.0
    return m


def state(c_start, c_bar, dt, ds, o, t0=0.0, s0=(0.0, 0.0)):
    D = len(c_start)
    return IntervalState(np.asarray(c_start, float), np.asarray(c_bar, float),
                         np.full(D, dt, float), np.asarray(o, float), t0,
                         np.full(D, ds, float), np.asarray(s0, float))


# -- configuration ---------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig("other")
    with pytest.raises(ValueError):
        ModelConfig(D=0)
    with pytest.raises(ValueError):
        ModelConfig(K=2, tau=(1.0, -1.0))
    assert ModelConfig(K=3).tau == (1.0, 1.0, 1.0)


def test_parameter_shapes_per_variant():
    st_, mt = model("mstnhp"), model("mtnhp")
    assert st_.params["W"].shape == (8 * 8, 4 + 2)
    assert mt.params["W"].shape == (7 * 8, 4)
    assert st_.params["embedding"].shape == (3, 4)
    assert st_.params["w"].shape == (2, 8)
    assert np.all(st_.params["b"] == 0.0)
    r = 8 ** -0.5
    assert np.all(np.abs(st_.params["U"]) <= r)


# -- initial state ----------------------------------------------------------------


def test_init_state_with_zero_weights():
    s = zero_model().init_state()
    assert np.all(s.c_start == 0.0) and np.all(s.c_bar == 0.0)
    assert np.all(s.o == 0.5)
    assert s.anchor_t == 0.0
    assert np.array_equal(s.anchor_s, UNIT_SQUARE.centroid)


def test_init_state_deterministic():
    m = model(bias_scale=1.0)
    a, b = m.init_state(), m.init_state()
    for f in ("c_start", "c_bar", "delta_t", "delta_s", "o"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_init_state_matches_run_first_interval():
    m = model(bias_scale=1.0)
    s = m.init_state()
    states = m.run(TOY)
    assert np.allclose(states.c_start[0], s.c_start, atol=1e-15)
    assert np.allclose(states.delta_s[0], s.delta_s, atol=1e-15)


# -- cell decay --------------------------------------------------------------------


def test_decay_example_value():
    m = model()
    s = state([2.0], [1.0], 0.5, 1.0, [0.5])
    c = m.decay_cell(s, (0.5, 0.0), 1.0)
    assert c[0] == pytest.approx(1.367879, abs=1e-6)
    assert c[0] == pytest.approx(1 + math.exp(-1.0), rel=1e-15)


def test_decay_at_anchor_is_c_start_exactly():
    m = model()
    s = state([0.3, -1.7], [1.1, 0.4], 0.9, 2.0, [0.5, 0.5], t0=2.0, s0=(0.1, 0.2))
    assert np.array_equal(m.decay_cell(s, (0.1, 0.2), 2.0), s.c_start)


def test_decay_limit_is_c_bar():
    m = model()
    s = state([0.3, -1.7], [1.1, 0.4], 0.05, 2.0, [0.5, 0.5])
    c = m.decay_cell(s, (0.0, 0.0), 1e3 / 0.05)
    assert np.all(np.abs(c - s.c_bar) < 1e-12)


def test_decay_rejects_past():
    m = model()
    s = state([0.0], [0.0], 1.0, 1.0, [0.5], t0=1.0)
    with pytest.raises(ValueError):
        m.decay_cell(s, (0.0, 0.0), 0.5)


def test_temporal_variant_ignores_location():
    m = model("mtnhp")
    s = state([2.0], [1.0], 0.5, 1.0, [0.5])
    s.delta_s, s.anchor_s = None, None
    assert m.decay_cell(s, (9.0, 9.0), 1.0)[0] == pytest.approx(1 + math.exp(-0.5))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 5), st.floats(0.01, 5),
       st.floats(0, 5), st.floats(0, 5), st.floats(0, 2), st.floats(0, 2))
def test_decay_is_monotone_in_time_and_distance(c0, cb, dt, ds, t1, gap, r1, rgap):
    m = model()
    s = state([c0], [cb], dt, ds, [0.5])
    near = abs(m.decay_cell(s, (r1, 0.0), t1)[0] - cb)
    later = abs(m.decay_cell(s, (r1, 0.0), t1 + gap)[0] - cb)
    farther = abs(m.decay_cell(s, (0.0, r1 + rgap), t1)[0] - cb)
    assert later <= near + 1e-15
    assert farther <= near + 1e-15


# -- hidden state and intensity -------------------------------------------------------


def test_hidden_examples():
    m = model()
    s = state([0.5], [0.5], 1.0, 1.0, [1.0])
    assert m.hidden(s, (0.0, 0.0), 3.0)[0] == pytest.approx(0.462117, abs=1e-6)
    assert m.hidden(s, (0.0, 0.0), 3.0)[0] == pytest.approx(math.tanh(0.5), rel=1e-14)
    z = state([0.0], [0.0], 1.0, 1.0, [0.7])
    assert m.hidden(z, (0.0, 0.0), 1.0)[0] == 0.0
    big = state([50.0], [50.0], 1.0, 1.0, [0.7])
    assert m.hidden(big, (0.0, 0.0), 1.0)[0] == pytest.approx(0.7, rel=1e-15)


def test_intensity_examples():
    m = zero_model()
    s = m.init_state()
    assert m.intensity(s, 1, (0.5, 0.5), 1.0) == pytest.approx(math.log(2), abs=1e-12)
    assert m.link(np.array([2.0]))[0] == pytest.approx(2.126928, abs=1e-6)
    assert m.link(np.array([2.0]))[0] == pytest.approx(math.log1p(math.exp(2.0)), rel=1e-15)
    assert 0.0 < m.link(np.array([-40.0]))[0] < 1e-16


def test_intensity_scale_tau():
    m = NeuralHawkes(ModelConfig("mstnhp", 2, 2, 2, tau=(1.0, 0.5)), model(D=2).params)
    out = m.link(np.array([1.0, 1.0]))
    assert out[0] == pytest.approx(math.log1p(math.e))
    assert out[1] == pytest.approx(0.5 * math.log1p(math.exp(2.0)))


def test_hidden_bounded_on_random_states():
    rng = np.random.default_rng(5)
    m = model()
    for _ in range(200):
        D = 50
        s = state(rng.normal(0, 20, D), rng.normal(0, 20, D), rng.uniform(0.01, 3),
                  rng.uniform(0.01, 3), rng.uniform(0, 1, D))
        h = m.hidden(s, rng.uniform(-1, 1, 2), rng.uniform(0, 10))
        assert np.max(np.abs(h)) < 1.0


@given(st.integers(0, 10**6), st.floats(0.0, 6.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_intensity_positive_for_any_weights(seed, t, x, y):
    rng = np.random.default_rng(seed)
    m = model(seed=seed % 100)
    for k in m.params.names():
        m.params[k][...] = rng.normal(0, 3, m.params[k].shape)
    states = m.run(TOY)
    lam = intensity_at(m, states, np.array([t]), np.array([[x, y]]))
    assert np.all(lam > 0)


# -- event updates ---------------------------------------------------------------------


def test_zero_weights_update_gives_zero_cells():
    m = zero_model()
    s = m.update_at_event(m.init_state(), STEvent(1, 0.5, (0.2, 0.9)))
    assert np.all(s.c_start == 0.0) and np.all(s.c_bar == 0.0)
    assert s.anchor_t == 0.5 and np.array_equal(s.anchor_s, [0.2, 0.9])


def test_pure_carry_gate_limit():
    m = model(D=3)
    D = 3
    b = m.params["b"]
    b[:D] = -60.0       # i -> 0
    b[D:2 * D] = 60.0   # f -> 1
    s0 = m.init_state()
    ev = STEvent(2, 1.0, (0.3, 0.3))
    c_minus = m.decay_cell(s0, ev.s, ev.t)
    s1 = m.update_at_event(s0, ev)
    assert np.allclose(s1.c_start, c_minus, atol=1e-15)


def test_identical_inputs_identical_updates():
    m = model(bias_scale=1.0)
    s = m.init_state()
    ev = STEvent(1, 0.4, (0.6, 0.2))
    a, b = m.update_at_event(s, ev), m.update_at_event(s, ev)
    for f in ("c_start", "c_bar", "delta_t", "delta_s", "o"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_update_rejects_time_regression():
    m = model()
    s = m.update_at_event(m.init_state(), STEvent(1, 1.0, (0.5, 0.5)))
    with pytest.raises(ValueError):
        m.update_at_event(s, STEvent(1, 0.5, (0.5, 0.5)))


def test_run_matches_stepwise_updates():
    m = model(bias_scale=1.0)
    states = m.run(TOY)
    s = m.init_state()
    for i, ev in enumerate(TOY.events()):
        h_minus = m.hidden(s, ev.s, ev.t)
        assert np.allclose(states.h_minus[i], h_minus, atol=1e-14)
        s = m.update_at_event(s, ev)
        assert np.allclose(states.c_bar[i + 1], s.c_bar, atol=1e-14)


def test_interval_lookup_is_left_open():
    m = model()
    states = m.run(TOY)
    idx = states.interval_index(np.array([0.0, 0.7, 0.7 + 1e-12, 6.0]))
    assert idx.tolist() == [0, 0, 1, 5]


def test_zero_space_decay_matches_temporal_variant():
    st_model = model("mstnhp", bias_scale=1.0)
    D, E = 8, 4
    st_model.params["W"][:, E:] = 0.0  # coordinates do not enter the gates
    mt = model("mtnhp")
    mt.params["embedding"][...] = st_model.params["embedding"]
    mt.params["W"][...] = st_model.params["W"][:7 * D, :E]
    mt.params["U"][...] = st_model.params["U"][:7 * D]
    mt.params["b"][...] = st_model.params["b"][:7 * D]
    mt.params["w"][...] = st_model.params["w"]
    temporal = EventSequence(TOY.types, TOY.times, TOY.T)
    a = st_model.run(TOY, zero_space_decay=True)
    b = mt.run(temporal)
    assert np.array_equal(a.h_minus, b.h_minus)
    assert np.array_equal(a.c_bar, b.c_bar)


# -- full-model gradient -------------------------------------------------------------------


def test_full_loglik_gradient_matches_finite_differences():
    m = model(D=8, seed=3, bias_scale=0.5)
    mc = MCConfig(mult=10)

    def value():
        return float(sequence_loglik(m, TOY, mc, RandomStream(77)))

    tape = ad.Tape()
    leaves = m.params.bind(tape)
    ad.backward(sequence_loglik(m, TOY, mc, RandomStream(77), leaves))
    for name, leaf in leaves.items():
        num = central_difference(value, m.params[name], 1e-4)
        err = rel_error(leaf.grad, num, floor=1e-8)
        assert np.max(err) < 1e-3, (name, np.max(err))
