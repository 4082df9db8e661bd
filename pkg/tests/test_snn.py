import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvsconv.aedat import EventStream
from dvsconv.ann import DEFAULT_ARCH, ArchSpec, Dense, Flatten, init_params
from dvsconv.convert import build_spiking, convert
from dvsconv.errors import DvsConvError
from dvsconv.preprocess import ClassLabel, Sample
from dvsconv.snn import (
    InputKind,
    SimConfig,
    SimState,
    advance,
    fast_forward,
    make_analog_driver,
    make_dvs_driver,
    make_poisson_driver,
    predicted_class,
    run_naive,
    run_sample,
    step,
)

from helpers import random_ff_case, random_params, rate_fidelity


def dense_net(weights, biases=None):
    """Single dense IF layer: weights (n_in, n_out)."""
    weights = np.asarray(weights, dtype=np.float64)
    arch = ArchSpec((weights.shape[0], 1, 1), (Flatten(), Dense(weights.shape[1])))
    p = init_params(arch)
    p.weights[1] = weights
    if biases is not None:
        p.biases[1] = np.asarray(biases, dtype=np.float64)
    return build_spiking(p)


def spike_ticks(net, n_ticks, engine):
    state = SimState.zeros(net)
    if engine == "naive":
        ticks = []
        for _ in range(n_ticks):
            if step(net, state)[-1][0]:
                ticks.append(state.t)
        return ticks, state
    raster, _ = advance(net, state, n_ticks, record_raster=True, dense=engine == "dense")
    return raster[:, 0].tolist(), state


@pytest.mark.parametrize("engine", ["naive", "event", "dense"])
def test_constant_current_spike_times(engine):
    net = dense_net([[0.0]], [0.4])
    ticks, state = spike_ticks(net, 10, engine)
    assert ticks == [3, 5, 8, 10]
    assert state.v[0] == 0
    assert state.count[0] == 4


def test_zero_input_never_spikes():
    net = build_spiking(init_params(DEFAULT_ARCH))
    state = SimState.zeros(net)
    fast_forward(net, state, 100_000)
    assert state.count.sum() == 0 and state.ops == 0 and state.t == 100_000


def test_spike_charges_the_fan_out():
    arch = ArchSpec((1, 1, 1), (Flatten(), Dense(1), Dense(25)))
    p = init_params(arch)
    p.biases[1][:] = 1.0
    net = build_spiking(p)
    state = SimState.zeros(net)
    step(net, state)
    assert state.count[0] == 1
    assert state.ops == 25


def test_fast_forward_zero_ticks_is_a_no_op():
    net, state, _ = random_ff_case(1)
    before = state.copy()
    fast_forward(net, state, 0)
    assert state.same_as(before)


@pytest.mark.parametrize("seed", range(12))
def test_fast_forward_matches_naive_stepping(seed):
    net, state, delta = random_ff_case(seed, max_ticks=2000)
    a, b = state.copy(), state.copy()
    fast_forward(net, a, delta)
    run_naive(net, b, delta)
    assert a.same_as(b)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 400), st.integers(1, 30))
def test_event_and_dense_engines_match_naive_with_input(seed, n_ticks, n_events):
    net, state, _ = random_ff_case(seed)
    rng = np.random.default_rng(seed)
    ticks = np.sort(rng.integers(1, n_ticks + 1, n_events))
    pix = rng.integers(0, net.n_inputs, n_events)
    inputs = {}
    for t, x in zip(ticks, pix):
        inputs.setdefault(int(t), np.zeros(net.n_inputs, np.int64))[x] += 1
    ref = state.copy()
    run_naive(net, ref, n_ticks, inputs=inputs, tick_ops=3)
    for dense in (False, True):
        s = state.copy()
        advance(net, s, n_ticks, ev_tick=ticks, ev_pix=pix, tick_ops=3, dense=dense)
        assert s.same_as(ref)


def test_potentials_settle_below_threshold():
    net, state, delta = random_ff_case(7, 3000)
    state.v[:] = 0
    fast_forward(net, state, delta)
    assert np.all(state.v < net.theta_fixed)


@pytest.mark.parametrize("seed", range(4))
def test_rate_coding_fidelity(seed):
    err, r = rate_fidelity(seed)
    assert err <= 0.02 and r >= 0.99


def test_burst_asymmetry():
    # one excitatory (+0.5) and one inhibitory (-0.5) afferent, 6 spikes each
    net = dense_net([[0.5], [-0.5]])
    exc_first = (np.arange(1, 13), np.array([0] * 6 + [1] * 6))
    interleaved = (np.arange(1, 13), np.array([0, 1] * 6))
    counts = []
    for ticks, pix in (exc_first, interleaved):
        assert np.sum(pix == 0) == np.sum(pix == 1) == 6
        state = SimState.zeros(net)
        advance(net, state, 12, ev_tick=ticks, ev_pix=pix)
        counts.append(int(state.count[0]))
    assert counts[0] >= 1
    assert counts[1] == 0


def test_strong_drive_to_one_output_wins():
    # only the second output neuron (class index 1) receives current
    w = np.zeros((4, 4))
    w[1, 1] = 1.0
    net = dense_net(w)
    frame = np.zeros((4, 1, 1))
    frame[1] = 1.0
    res = run_sample(net, make_analog_driver(net, frame, 50))
    assert res.prediction is ClassLabel.CENTER


def test_zero_frame_analog_predicts_left():
    net = build_spiking(init_params(DEFAULT_ARCH))
    drv = make_analog_driver(net, np.zeros((36, 36)))
    assert np.all(drv.currents == 0)
    res = run_sample(net, drv)
    assert res.counts.sum() == 0
    assert res.prediction is ClassLabel.LEFT
    assert res.ticks == 450


def test_analog_op_accounting():
    net = build_spiking(init_params(DEFAULT_ARCH))
    res = run_sample(net, make_analog_driver(net, np.zeros((36, 36)), 10))
    assert res.ops == 2 * 102400 + 10 * 4096


@pytest.mark.parametrize("gain", [0.1, 0.5, 0.9])
def test_poisson_counts_follow_the_binomial_bound(gain):
    net = dense_net([[1.0]])
    for seed in range(5):
        drv = make_poisson_driver(net, np.ones((1, 1, 1)), gain, seed, 1000)
        assert abs(len(drv.ev_tick) - 1000 * gain) <= 3 * np.sqrt(1000 * gain * (1 - gain))


def test_poisson_gain_zero_is_silent_and_seeded_runs_repeat():
    net = build_spiking(init_params(DEFAULT_ARCH))
    frame = np.random.default_rng(0).random((36, 36))
    assert len(make_poisson_driver(net, frame, 0.0).ev_tick) == 0
    a = make_poisson_driver(net, frame, 1.0, seed=[4, 2])
    b = make_poisson_driver(net, frame, 1.0, seed=[4, 2])
    assert np.array_equal(a.ev_tick, b.ev_tick) and np.array_equal(a.ev_pix, b.ev_pix)


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_frame_range_is_checked(bad):
    net = build_spiking(init_params(DEFAULT_ARCH))
    with pytest.raises(DvsConvError):
        make_analog_driver(net, np.full((36, 36), bad))


def dvs_sample(t, x, y):
    ev = EventStream(np.asarray(t), np.asarray(x), np.asarray(y), np.ones(len(t)), (36, 36))
    return Sample(ev, ClassLabel.RIGHT)


def test_dvs_driver_replays_events_in_order():
    net = build_spiking(init_params(DEFAULT_ARCH))
    s = dvs_sample([100, 100, 105, 140], [1, 2, 3, 1], [0, 0, 5, 0])
    drv = make_dvs_driver(net, s)
    assert drv.kind is InputKind.DVS
    assert drv.ev_tick.tolist() == [1, 1, 6, 41]
    assert drv.ev_pix.tolist() == [1, 2, 183, 1]
    assert drv.t_steps == 41
    # default bias budget: the busiest pixel's event count, spread over the sample
    assert drv.bias_scale == pytest.approx(2 / 41)
    assert make_dvs_driver(net, s, t_ref=450).bias_scale == pytest.approx(450 / 41)


def test_empty_dvs_sample_is_degenerate():
    net = build_spiking(init_params(DEFAULT_ARCH))
    with pytest.raises(DvsConvError):
        make_dvs_driver(net, dvs_sample([], [], []))


def test_dvs_run_timeline_and_ops():
    rng = np.random.default_rng(3)
    p = random_params(DEFAULT_ARCH, 3, 0.01)
    n = 400
    s = dvs_sample(np.sort(rng.integers(0, 20_000, n)), rng.integers(0, 36, n), rng.integers(0, 36, n))
    net = convert(p, rng.random((4, 36, 36)))
    res = run_sample(net, make_dvs_driver(net, s), SimConfig(record_raster=True))
    tl = res.timeline
    assert tl[0].tolist() == [0, 0, 0]
    assert np.all(np.diff(tl[:, 0]) >= 0) and np.all(np.diff(tl[:, 1]) >= 0)
    assert tl[-1, 1] == res.ops and tl[-1, 2] == int(res.prediction)
    spikes = res.raster[res.raster[:, 1] >= 0]
    input_ops = int(net.input_fan_out()[s.events.y.astype(int) * 36 + s.events.x].sum())
    assert res.ops == input_ops + int(net.fan_out()[spikes[:, 2] + net.layer_start[spikes[:, 1]]].sum())
    assert res.input_spikes == n


def test_state_reset_and_carry():
    p = random_params(DEFAULT_ARCH, 2, 0.01)
    net = convert(p, np.random.default_rng(0).random((4, 36, 36)))
    frame = np.random.default_rng(1).random((36, 36))
    drv = make_analog_driver(net, frame, 100)
    first = run_sample(net, drv)
    again = run_sample(net, drv, SimConfig(t_steps=100), first.state)
    assert np.array_equal(first.counts, again.counts)
    carried = run_sample(net, drv, SimConfig(t_steps=100, carry_state=True), first.state.copy())
    assert carried.state.t == 200


def test_zero_count_tie_break():
    assert predicted_class(np.zeros(4)) == 0
    assert predicted_class(np.zeros(4), np.array([0.1, 0.3, 0.2, 0.0])) == 1
    assert predicted_class(np.array([0, 3, 3, 1])) == 1
