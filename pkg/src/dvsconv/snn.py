"""
Time-stepped simulation of a converted network at 1 us per tick.

Per tick, populations are updated in topological order and spikes reach the
next population within the same tick (no synaptic delay):

    V += sum(w * incoming spikes) + bias_scale * b'
    if V >= theta: emit one spike, V -= theta

A pooling unit forwards a spike only when it comes from the input whose
running spike count (including this tick) is the largest, lowest index
winning ties.

``step`` is the literal dense per-tick update. ``advance`` runs the same
dynamics event-driven: between input events the only drive is the constant
bias, so each neuron's next threshold crossing is solved in closed form and
ticks in which nothing happens are skipped. Integer (fixed-point) potentials
make both paths agree exactly. For inputs that arrive on nearly every tick
(ANALOG, POISSON) a compiled dense loop is cheaper and is used instead; all
three paths produce identical states.

Synaptic operations: every spike charges the emitter's fan-out (the number
of outgoing synapses, including the single edge into a pooling unit); every
input spike charges the fan-out of its pixel. ANALOG input charges
2 * MACs of the first layer once, plus one update per first-layer neuron per
tick.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import types
from numba.typed import List

from .ann import forward, mac_counts
from .convert import IF_KIND, ONE, SpikingNetwork, to_fixed
from .errors import DvsConvError
from .preprocess import ClassLabel, Sample

INPUT_LAYER = -1
NEVER = np.iinfo(np.int64).max


class InputKind(str, enum.Enum):
    ANALOG = "analog"
    POISSON = "poisson"
    DVS = "dvs"


@dataclass
class SimConfig:
    t_steps: int = 450
    t_ref: float | None = None  # DVS bias budget in ticks; None = the sample's peak pixel count
    carry_state: bool = False
    record_raster: bool = False


@dataclass
class SimState:
    v: np.ndarray  # fixed-point membrane potential
    count: np.ndarray
    last_spike: np.ndarray
    t: int = 0
    ops: int = 0

    @classmethod
    def zeros(cls, net: SpikingNetwork) -> "SimState":
        n = net.n_neurons
        return cls(np.zeros(n, np.int64), np.zeros(n, np.int64), np.full(n, -1, np.int64))

    def copy(self) -> "SimState":
        return SimState(self.v.copy(), self.count.copy(), self.last_spike.copy(), self.t, self.ops)

    @property
    def potentials(self) -> np.ndarray:
        return self.v / ONE

    def gate_counts(self, net: SpikingNetwork) -> np.ndarray:
        """Running input spike counts seen by the pooling gates."""
        return self.count[net.pool_idx]

    def same_as(self, other: "SimState") -> bool:
        return (
            self.t == other.t
            and self.ops == other.ops
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.count, other.count)
            and np.array_equal(self.last_spike, other.last_spike)
        )


@dataclass
class InputDriver:
    kind: InputKind
    t_steps: int
    frame: np.ndarray | None = None
    gain: float = 1.0
    seed: int = 0
    ev_tick: np.ndarray | None = None  # 1-based ticks
    ev_pix: np.ndarray | None = None
    bias_scale: float = 1.0
    currents: np.ndarray | None = None  # ANALOG: first-population currents per tick


@dataclass
class SampleResult:
    prediction: ClassLabel | int
    counts: np.ndarray
    ops: int
    ticks: int
    timeline: np.ndarray  # rows (tick, cumulative_ops, running_prediction)
    raster: np.ndarray | None = None  # rows (tick, layer, neuron_index); layer -1 = input
    input_spikes: int = 0
    final_potential: np.ndarray | None = field(default=None, repr=False)
    state: SimState | None = field(default=None, repr=False)


def predicted_class(counts: np.ndarray, potentials: np.ndarray | None = None) -> int:
    """Most spikes wins, lowest index on ties; with no spikes at all, highest potential."""
    counts = np.asarray(counts)
    if counts.max(initial=0) > 0 or potentials is None:
        return int(np.argmax(counts))
    return int(np.argmax(potentials))


def _label(i: int, n: int):
    return ClassLabel(i) if n == len(ClassLabel) else i


# --- reference stepper -------------------------------------------------------


def _pool_table(net: SpikingNetwork, L: int) -> np.ndarray:
    sl = net.layer_slice(L)
    starts, stops = net.pool_ptr[sl.start:sl.stop], net.pool_ptr[sl.start + 1:sl.stop + 1]
    width = int((stops - starts).max(initial=0))
    table = np.full((sl.stop - sl.start, max(width, 1)), -1, dtype=np.int64)
    for k in range(width):
        has = starts + k < stops
        table[has, k] = net.pool_idx[starts[has] + k]
    return table


@dataclass
class _StepTables:
    """Per-network constants of the reference stepper, computed once per run."""

    theta: int
    fan: np.ndarray
    in_fan: np.ndarray
    slices: list
    pools: dict

    @classmethod
    def of(cls, net: SpikingNetwork) -> "_StepTables":
        pools = {L: _pool_table(net, L) for L in range(net.n_layers) if net.layer_kind[L] != IF_KIND}
        slices = [net.layer_slice(L) for L in range(net.n_layers)]
        return cls(net.theta_fixed, net.fan_out(), net.input_fan_out(), slices, pools)


def step(net: SpikingNetwork, state: SimState, input_spikes=None, bias_scale: float = 1.0, bias=None, tick_ops: int = 0,
         tables: _StepTables | None = None):
    """Advance ``state`` by exactly one tick, updating every neuron.

    ``input_spikes`` holds a spike count per input pixel (or None). Returns
    the boolean spike vector of every population.
    """
    c = tables or _StepTables.of(net)
    b = net.bias_fixed(bias_scale) if bias is None else bias
    theta = c.theta
    t = state.t + 1
    inbuf = np.zeros(net.n_neurons, dtype=np.int64)
    state.ops += tick_ops
    if input_spikes is not None:
        inp = np.asarray(input_spikes, dtype=np.int64).ravel()
        if inp.any():
            state.ops += int(np.sum(inp * c.in_fan))
            reps = np.repeat(inp, c.in_fan)
            np.add.at(inbuf, net.in_idx, net.in_w * reps)
    out = []
    for L, sl in enumerate(c.slices):
        if L not in c.pools:
            v = state.v[sl]
            v += b[sl] + inbuf[sl]
            spk = v >= theta
            v[spk] -= theta
        else:
            table = c.pools[L]
            cnt = np.where(table >= 0, state.count[np.maximum(table, 0)], -1)
            best = table[np.arange(len(table)), np.argmax(cnt, axis=1)]
            spk = (best >= 0) & (state.last_spike[np.maximum(best, 0)] == t)
        ids = np.flatnonzero(spk) + sl.start
        if ids.size:
            state.count[ids] += 1
            state.last_spike[ids] = t
            state.ops += int(c.fan[ids].sum())
            edges = np.concatenate([np.arange(net.ptr[j], net.ptr[j + 1]) for j in ids])
            np.add.at(inbuf, net.idx[edges], net.w[edges])
        out.append(spk)
    state.t = t
    return out


def run_naive(net: SpikingNetwork, state: SimState, n_ticks: int, bias_scale: float = 1.0, inputs=None, tick_ops: int = 0):
    """Call ``step`` ``n_ticks`` times; ``inputs`` maps tick offset (1-based) to pixel counts."""
    b = net.bias_fixed(bias_scale)
    tables = _StepTables.of(net)
    for k in range(1, n_ticks + 1):
        spikes = None if inputs is None else inputs.get(k)
        step(net, state, spikes, bias=b, tick_ops=tick_ops, tables=tables)
    return state


# --- event-driven engine ------------------------------------------------------


@numba.njit(cache=True)
def _next_cross(v, b, theta, last):
    if v + b >= theta:
        return last + 1
    if b > 0:
        return last + (theta - v + b - 1) // b
    return NEVER


@numba.njit(cache=True)
def _heap_push(ht, hj, size, t, j):
    if size == ht.shape[0]:
        nt = np.empty(2 * size, np.int64)
        nj = np.empty(2 * size, np.int64)
        nt[:size] = ht
        nj[:size] = hj
        ht, hj = nt, nj
    i = size
    ht[i] = t
    hj[i] = j
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] > ht[i] or (ht[p] == ht[i] and hj[p] > hj[i]):
            ht[p], ht[i] = ht[i], ht[p]
            hj[p], hj[i] = hj[i], hj[p]
            i = p
        else:
            break
    return ht, hj, size + 1


@numba.njit(cache=True)
def _heap_pop(ht, hj, size):
    size -= 1
    ht[0] = ht[size]
    hj[0] = hj[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < size and (ht[l] < ht[m] or (ht[l] == ht[m] and hj[l] < hj[m])):
            m = l
        if r < size and (ht[r] < ht[m] or (ht[r] == ht[m] and hj[r] < hj[m])):
            m = r
        if m == i:
            break
        ht[m], ht[i] = ht[i], ht[m]
        hj[m], hj[i] = hj[i], hj[m]
        i = m
    return size


@numba.njit(cache=True)
def _advance(
    kind, layer_of, layer_start, layer_kind,
    in_ptr, in_idx, in_w, ptr, idx, w, pool_ptr, pool_idx,
    theta, b, v, count, last_spike, ops_in, t0, t_end,
    ev_tick, ev_pix, tick_ops, record_raster, raster_t, raster_l, raster_j, tl_t, tl_ops, tl_pred,
):
    n = v.shape[0]
    n_layers = layer_kind.shape[0]
    out_lo = layer_start[n_layers - 1]
    out_hi = layer_start[n_layers]
    last_t = np.full(n, t0, np.int64)
    nxt = np.full(n, NEVER, np.int64)
    inbuf = np.zeros(n, np.int64)
    touched_at = np.full(n, -1, np.int64)
    stack = np.empty(n, np.int64)
    tcount = np.zeros(n_layers, np.int64)
    # The heap holds at most one live entry per neuron, keyed at hkey[j] <=
    # nxt[j]; a popped entry whose neuron has moved later is re-queued.
    ht = np.empty(max(16, n), np.int64)
    hj = np.empty(max(16, n), np.int64)
    hkey = np.full(n, NEVER, np.int64)
    hsize = 0
    ops = ops_in
    out_cnt = np.zeros(out_hi - out_lo, np.int64)
    for j in range(n):
        if kind[j] == IF_KIND:
            nx = _next_cross(v[j], b[j], theta, t0)
            nxt[j] = nx
            if nx <= t_end:
                ht, hj, hsize = _heap_push(ht, hj, hsize, nx, j)
                hkey[j] = nx
    e = 0
    n_ev = ev_tick.shape[0]
    t_cur = t0
    while True:
        while hsize > 0 and nxt[hj[0]] != ht[0]:
            j = hj[0]
            tk = ht[0]
            hsize = _heap_pop(ht, hj, hsize)
            if hkey[j] == tk:
                hkey[j] = NEVER
                if nxt[j] <= t_end:
                    ht, hj, hsize = _heap_push(ht, hj, hsize, nxt[j], j)
                    hkey[j] = nxt[j]
        t_ev = ev_tick[e] if e < n_ev else NEVER
        t_h = ht[0] if hsize > 0 else NEVER
        t = min(t_ev, t_h)
        if t > t_end:
            break
        ops += (t - t_cur) * tick_ops
        t_cur = t
        # input spikes
        while e < n_ev and ev_tick[e] == t:
            p = ev_pix[e]
            ops += in_ptr[p + 1] - in_ptr[p]
            if record_raster:
                raster_t.append(t)
                raster_l.append(-1)
                raster_j.append(p)
            for k in range(in_ptr[p], in_ptr[p + 1]):
                j = in_idx[k]
                inbuf[j] += in_w[k]
                if touched_at[j] != t:
                    touched_at[j] = t
                    L = layer_of[j]
                    stack[layer_start[L] + tcount[L]] = j
                    tcount[L] += 1
            e += 1
        # bias-driven crossings due now
        while hsize > 0 and ht[0] == t:
            j = hj[0]
            hsize = _heap_pop(ht, hj, hsize)
            if hkey[j] == t:
                hkey[j] = NEVER
                if t < nxt[j] <= t_end:
                    ht, hj, hsize = _heap_push(ht, hj, hsize, nxt[j], j)
                    hkey[j] = nxt[j]
            if nxt[j] == t and touched_at[j] != t:
                touched_at[j] = t
                L = layer_of[j]
                stack[layer_start[L] + tcount[L]] = j
                tcount[L] += 1
        out_spiked = False
        for L in range(n_layers):
            base = layer_start[L]
            for s in range(tcount[L]):
                j = stack[base + s]
                fired = False
                if layer_kind[L] == IF_KIND:
                    vj = v[j] + (t - 1 - last_t[j]) * b[j] + b[j] + inbuf[j]
                    inbuf[j] = 0
                    last_t[j] = t
                    if vj >= theta:
                        vj -= theta
                        fired = True
                    v[j] = vj
                    nx = _next_cross(vj, b[j], theta, t)
                    nxt[j] = nx
                    if nx < hkey[j] and nx <= t_end:
                        ht, hj, hsize = _heap_push(ht, hj, hsize, nx, j)
                        hkey[j] = nx
                else:
                    best = -1
                    bestc = -1
                    for k in range(pool_ptr[j], pool_ptr[j + 1]):
                        i = pool_idx[k]
                        if count[i] > bestc:
                            bestc = count[i]
                            best = i
                    if best >= 0 and last_spike[best] == t:
                        fired = True
                if fired:
                    count[j] += 1
                    last_spike[j] = t
                    ops += ptr[j + 1] - ptr[j]
                    if record_raster:
                        raster_t.append(t)
                        raster_l.append(L)
                        raster_j.append(j - base)
                    if j >= out_lo:
                        out_spiked = True
                        out_cnt[j - out_lo] += 1
                    for k in range(ptr[j], ptr[j + 1]):
                        q = idx[k]
                        if kind[q] == IF_KIND:
                            inbuf[q] += w[k]
                        if touched_at[q] != t:
                            touched_at[q] = t
                            Lq = layer_of[q]
                            stack[layer_start[Lq] + tcount[Lq]] = q
                            tcount[Lq] += 1
            tcount[L] = 0
        if out_spiked:
            best = 0
            for j in range(out_cnt.shape[0]):
                if out_cnt[j] > out_cnt[best]:
                    best = j
            tl_t.append(t)
            tl_ops.append(ops)
            tl_pred.append(best)
    ops += (t_end - t_cur) * tick_ops
    for j in range(n):
        if kind[j] == IF_KIND:
            v[j] += (t_end - last_t[j]) * b[j]
    return ops


@numba.njit(cache=True)
def _advance_dense(
    kind, layer_of, layer_start, layer_kind,
    in_ptr, in_idx, in_w, ptr, idx, w, pool_ptr, pool_idx,
    theta, b, v, count, last_spike, ops_in, t0, t_end,
    ev_tick, ev_pix, tick_ops, record_raster, raster_t, raster_l, raster_j, tl_t, tl_ops, tl_pred,
):
    n = v.shape[0]
    n_layers = layer_kind.shape[0]
    out_lo = layer_start[n_layers - 1]
    out_hi = layer_start[n_layers]
    out_cnt = np.zeros(out_hi - out_lo, np.int64)
    inbuf = np.zeros(n, np.int64)
    ops = ops_in
    e = 0
    n_ev = ev_tick.shape[0]
    for t in range(t0 + 1, t_end + 1):
        ops += tick_ops
        while e < n_ev and ev_tick[e] == t:
            p = ev_pix[e]
            ops += in_ptr[p + 1] - in_ptr[p]
            if record_raster:
                raster_t.append(t)
                raster_l.append(-1)
                raster_j.append(p)
            for k in range(in_ptr[p], in_ptr[p + 1]):
                inbuf[in_idx[k]] += in_w[k]
            e += 1
        out_spiked = False
        for L in range(n_layers):
            base = layer_start[L]
            for j in range(base, layer_start[L + 1]):
                fired = False
                if layer_kind[L] == IF_KIND:
                    vj = v[j] + b[j] + inbuf[j]
                    inbuf[j] = 0
                    if vj >= theta:
                        vj -= theta
                        fired = True
                    v[j] = vj
                else:
                    best = -1
                    bestc = -1
                    for k in range(pool_ptr[j], pool_ptr[j + 1]):
                        i = pool_idx[k]
                        if count[i] > bestc:
                            bestc = count[i]
                            best = i
                    if best >= 0 and last_spike[best] == t:
                        fired = True
                if fired:
                    count[j] += 1
                    last_spike[j] = t
                    ops += ptr[j + 1] - ptr[j]
                    if record_raster:
                        raster_t.append(t)
                        raster_l.append(L)
                        raster_j.append(j - base)
                    if j >= out_lo:
                        out_spiked = True
                        out_cnt[j - out_lo] += 1
                    for k in range(ptr[j], ptr[j + 1]):
                        q = idx[k]
                        if kind[q] == IF_KIND:
                            inbuf[q] += w[k]
        if out_spiked:
            best = 0
            for j in range(out_cnt.shape[0]):
                if out_cnt[j] > out_cnt[best]:
                    best = j
            tl_t.append(t)
            tl_ops.append(ops)
            tl_pred.append(best)
    return ops


def _int_list():
    return List.empty_list(types.int64)


def advance(
    net: SpikingNetwork,
    state: SimState,
    n_ticks: int,
    bias_scale: float = 1.0,
    ev_tick=None,
    ev_pix=None,
    bias=None,
    tick_ops: int = 0,
    record_raster: bool = False,
    dense: bool = False,
):
    """Run ``n_ticks`` ticks; ``ev_tick`` is relative to ``state.t`` (1-based).

    ``dense`` selects the per-tick loop instead of event-driven skipping; the
    result is identical either way. Returns (raster rows, timeline rows).
    """
    if n_ticks < 0:
        raise ValueError("n_ticks must be >= 0")
    b = net.bias_fixed(bias_scale) if bias is None else np.asarray(bias, dtype=np.int64)
    if ev_tick is None:
        ev_tick = np.zeros(0, np.int64)
        ev_pix = np.zeros(0, np.int64)
    ev_tick = np.ascontiguousarray(ev_tick, dtype=np.int64) + state.t
    ev_pix = np.ascontiguousarray(ev_pix, dtype=np.int64)
    if ev_tick.size and (np.any(np.diff(ev_tick) < 0) or ev_tick[0] <= state.t or ev_tick[-1] > state.t + n_ticks):
        raise ValueError("input ticks must be sorted and inside the run")
    lists = [_int_list() for _ in range(6)]
    engine = _advance_dense if dense else _advance
    ops = engine(
        net.kind, net.layer_of, net.layer_start, net.layer_kind,
        net.in_ptr, net.in_idx, net.in_w, net.ptr, net.idx, net.w, net.pool_ptr, net.pool_idx,
        net.theta_fixed, b, state.v, state.count, state.last_spike, state.ops, state.t, state.t + n_ticks,
        ev_tick, ev_pix, int(tick_ops), bool(record_raster), *lists,
    )
    state.ops = int(ops)
    state.t += n_ticks
    raster = np.column_stack([np.asarray(lst, dtype=np.int64) for lst in lists[:3]]) if record_raster else None
    timeline = np.column_stack([np.asarray(lst, dtype=np.int64) for lst in lists[3:]])
    if timeline.size == 0:
        timeline = np.zeros((0, 3), np.int64)
    return raster, timeline


def fast_forward(net: SpikingNetwork, state: SimState, n_ticks: int, bias_scale: float = 1.0, bias=None, tick_ops: int = 0):
    """Advance over ``n_ticks`` ticks without input, skipping idle ticks."""
    advance(net, state, n_ticks, bias_scale, bias=bias, tick_ops=tick_ops)
    return state


# --- input drivers -----------------------------------------------------------


def _check_frame(net: SpikingNetwork, frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size != net.n_inputs:
        raise DvsConvError(f"frame has {frame.size} pixels, network expects {net.n_inputs}")
    if frame.min(initial=0) < 0 or frame.max(initial=0) > 1:
        raise DvsConvError("frame values must lie in [0, 1]")
    return frame.reshape(net.arch.input_shape)


def make_analog_driver(net: SpikingNetwork, frame, t_steps: int = 450) -> InputDriver:
    frame = _check_frame(net, frame)
    first = net.params.param_layers()[0]
    currents = forward(net.params, frame).pre_activations[first].ravel()
    return InputDriver(InputKind.ANALOG, int(t_steps), frame=frame, currents=currents)


def make_poisson_driver(net: SpikingNetwork, frame, gain: float = 1.0, seed: int = 0, t_steps: int = 450) -> InputDriver:
    frame = _check_frame(net, frame)
    rng = np.random.default_rng(seed)
    prob = np.clip(gain * frame.ravel(), 0.0, 1.0)
    fire = rng.random((int(t_steps), prob.size)) < prob
    ticks, pix = np.nonzero(fire)
    return InputDriver(InputKind.POISSON, int(t_steps), frame=frame, gain=gain, seed=seed, ev_tick=ticks + 1, ev_pix=pix)


def make_dvs_driver(net: SpikingNetwork, sample, t_ref: float | None = None) -> InputDriver:
    """Replay the sample's events, one unit spike per event.

    Biases are spread over the sample so that their total charge equals
    ``t_ref`` ticks' worth: bias_scale = t_ref / duration. With ``t_ref=None``
    the sample's peak pixel count is used, which is the factor by which the
    event stream's total input charge exceeds that of one tick of the
    max-scaled training frame; input and bias charge then stand in the same
    ratio as in the ANN.
    """
    ev = sample.events if isinstance(sample, Sample) else sample
    if len(ev) == 0:
        raise DvsConvError("degenerate sample: no events")
    w, h = ev.geometry
    if w * h != net.n_inputs:
        raise DvsConvError(f"sample geometry {w}x{h} does not match the network input")
    t0 = int(ev.t[0])
    ticks = ev.t - t0 + 1
    duration = int(ticks[-1])
    pix = ev.y.astype(np.int64) * w + ev.x
    if t_ref is None:
        t_ref = int(np.bincount(pix).max())
    if t_ref < 0:
        raise DvsConvError("t_ref must be >= 0")
    return InputDriver(InputKind.DVS, duration, ev_tick=ticks, ev_pix=pix, bias_scale=float(t_ref) / duration)


def make_driver(net, kind, item, config: SimConfig, gain=1.0, seed=0) -> InputDriver:
    kind = InputKind(kind)
    if kind is InputKind.ANALOG:
        return make_analog_driver(net, item, config.t_steps)
    if kind is InputKind.POISSON:
        return make_poisson_driver(net, item, gain, seed, config.t_steps)
    return make_dvs_driver(net, item, config.t_ref)


def analog_setup_ops(net: SpikingNetwork) -> tuple[int, int]:
    """(one-off ops, ops per tick) charged for ANALOG input."""
    first = net.params.param_layers()[0]
    macs = mac_counts(net.arch)[first]
    n_first = int(net.layer_start[1] - net.layer_start[0])
    return 2 * macs, n_first


def run_sample(net: SpikingNetwork, driver: InputDriver, config: SimConfig | None = None, state: SimState | None = None) -> SampleResult:
    """Simulate one sample. The state is reset unless ``config.carry_state`` and a state is given."""
    config = config or SimConfig()
    if state is None or not config.carry_state:
        state = SimState.zeros(net)
    out = net.output_slice
    start_ops, t_start = state.ops, state.t
    counts_before = state.count[out].copy()
    tick_ops = 0
    bias = net.bias_fixed(driver.bias_scale)
    if driver.kind is InputKind.ANALOG:
        setup, tick_ops = analog_setup_ops(net)
        state.ops += setup
        bias = bias.copy()
        bias[net.layer_slice(0)] = to_fixed(driver.currents)
    raster, timeline = advance(
        net, state, driver.t_steps, ev_tick=driver.ev_tick, ev_pix=driver.ev_pix, bias=bias,
        tick_ops=tick_ops, record_raster=config.record_raster, dense=driver.kind is not InputKind.DVS,
    )
    counts = state.count[out] - counts_before
    potentials = state.potentials[out]
    pred = predicted_class(counts, potentials)
    rows = [np.array([[0, 0, 0]], dtype=np.int64)]
    if len(timeline):
        rows.append(np.column_stack([timeline[:, 0] - t_start, timeline[:, 1] - start_ops, timeline[:, 2]]))
    rows.append(np.array([[driver.t_steps, state.ops - start_ops, pred]], dtype=np.int64))
    if raster is not None:
        raster[:, 0] -= t_start
    return SampleResult(
        prediction=_label(pred, net.n_outputs),
        counts=counts,
        ops=int(state.ops - start_ops),
        ticks=int(driver.t_steps),
        timeline=np.vstack(rows),
        raster=raster,
        input_spikes=0 if driver.ev_tick is None else int(len(driver.ev_tick)),
        final_potential=potentials,
        state=state,
    )
