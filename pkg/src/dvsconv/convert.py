"""
ANN -> SNN conversion.

Each conv/dense layer becomes a population of non-leaky integrate-and-fire
neurons, each max-pool layer a population of gating units, and flatten is a
pure re-indexing. Parameters are rescaled layer by layer with a data-based
scale (a percentile of the layer's ReLU activations), so that a firing rate
of one spike per tick corresponds to an activation of ``lambda_l``.

Percentiles are taken over all activation values of the layer, zeros
included, with the averaged inverted empirical CDF
(``numpy.percentile(method="averaged_inverted_cdf")``): the smallest value
whose cumulative share reaches p, averaged with the next order statistic when
the share lands exactly on p. For 0..9 the median is 4.5, p = 100 is the
maximum, and, unlike interpolation on the index (n - 1) * p, the result only
depends on the empirical distribution, so repeating the calibration set does
not change it.

Membrane arithmetic in the simulator is fixed point: weights, biases and the
threshold are stored as int64 multiples of 1e-12. Additions are then exact,
which is what allows event-driven fast-forwarding to reproduce tick-by-tick
stepping bit for bit; a decimal scale also keeps hand-written values such as
0.4 exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ann import ArchSpec, Conv, Dense, Flatten, MaxPool, NetworkParams, forward
from .errors import ConfigError, NumericError

ONE = 10 ** 12
MAX_FIXED = 1e6

IF_KIND = 0
POOL_KIND = 1


def to_fixed(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)) or np.any(np.abs(a) >= MAX_FIXED):
        raise NumericError("value not representable in the fixed-point membrane format")
    return np.rint(a * ONE).astype(np.int64)


@dataclass
class ScaleFactors:
    """``lambdas[i]`` for every layer index of the arch; pooling/flatten inherit."""

    lambdas: list[float]
    percentile: float

    def for_layer(self, i: int) -> float:
        return self.lambdas[i]


def layer_activations(params: NetworkParams, frames, chunk: int = 256) -> dict[int, np.ndarray]:
    """ReLU activations of every parameterised layer, flattened per layer."""
    frames = np.asarray(frames)
    if frames.ndim == len(params.arch.input_shape) - 1 or frames.shape == tuple(params.arch.input_shape):
        frames = frames[None]
    acts: dict[int, list] = {i: [] for i in params.param_layers()}
    p64 = params.astype(np.float64)
    for s in range(0, len(frames), chunk):
        fr = forward(p64, frames[s:s + chunk])
        for i in acts:
            acts[i].append(np.maximum(fr.pre_activations[i], 0.0).ravel())
    return {i: np.concatenate(v) for i, v in acts.items()}


def estimate_scales(params: NetworkParams, frames, percentile: float = 99.9) -> ScaleFactors:
    if not 0 < percentile <= 100:
        raise ConfigError("percentile must lie in (0, 100]")
    if len(frames) == 0:
        raise ConfigError("need at least one calibration frame")
    acts = layer_activations(params, frames)
    lambdas = []
    current = 1.0
    for i, layer in enumerate(params.arch.layers):
        if i in acts:
            current = float(np.percentile(acts[i], percentile, method="averaged_inverted_cdf"))
            if current <= 0:
                raise NumericError(f"layer {i} ({type(layer).__name__}) is dead on the calibration set (scale 0)")
        lambdas.append(current)
    return ScaleFactors(lambdas, percentile)


def rescale(params: NetworkParams, scales: ScaleFactors) -> NetworkParams:
    out = params.astype(np.float64)
    prev = 1.0
    for i in params.param_layers():
        lam = scales.lambdas[i]
        if lam <= 0:
            raise NumericError(f"non-positive scale for layer {i}")
        out.weights[i] = out.weights[i] * (prev / lam)
        out.biases[i] = out.biases[i] / lam
        prev = lam
    return out


@dataclass(frozen=True, eq=False)
class SpikingNetwork:
    """Flat, immutable description of the converted network.

    Neurons of all populations share one index space; population ``L`` owns
    ``layer_start[L]:layer_start[L+1]``, each in row-major (y, x, c) order.
    Outgoing synapses are stored in CSR form: ``ptr/idx/w`` for neurons,
    ``in_ptr/in_idx/in_w`` for input pixels. Edges into a pooling unit carry
    weight 0; ``pool_ptr/pool_idx`` list each unit's inputs in ascending order.
    """

    arch: ArchSpec
    params: NetworkParams
    layer_names: tuple[str, ...]
    layer_kind: np.ndarray
    layer_start: np.ndarray
    layer_of: np.ndarray
    kind: np.ndarray
    n_inputs: int
    in_ptr: np.ndarray
    in_idx: np.ndarray
    in_w: np.ndarray
    ptr: np.ndarray
    idx: np.ndarray
    w: np.ndarray
    pool_ptr: np.ndarray
    pool_idx: np.ndarray
    bias: np.ndarray  # float, per neuron, in threshold units
    threshold: float = 1.0
    scales: ScaleFactors | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_neurons(self) -> int:
        return int(self.layer_start[-1])

    @property
    def n_layers(self) -> int:
        return len(self.layer_names)

    @property
    def theta_fixed(self) -> int:
        return int(to_fixed(self.threshold))

    def fan_out(self) -> np.ndarray:
        return np.diff(self.ptr)

    def input_fan_out(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def layer_slice(self, L: int) -> slice:
        return slice(int(self.layer_start[L]), int(self.layer_start[L + 1]))

    @property
    def output_slice(self) -> slice:
        return self.layer_slice(self.n_layers - 1)

    @property
    def n_outputs(self) -> int:
        s = self.output_slice
        return s.stop - s.start

    def bias_fixed(self, bias_scale: float = 1.0) -> np.ndarray:
        return to_fixed(self.bias * bias_scale)


@dataclass
class BiasAuditReport:
    ratios: np.ndarray  # |b'| / theta per neuron (0 for gating units)
    warnings: list  # (ratio, layer name, local index), sorted by ratio, descending
    warn_fraction: float

    def summary(self, network: SpikingNetwork) -> str:
        lines = [f"bias audit: warn at |b'| >= {self.warn_fraction:g} * theta (theta = {network.threshold:g})"]
        for L, name in enumerate(network.layer_names):
            r = self.ratios[network.layer_slice(L)]
            n_warn = sum(1 for _, lname, _ in self.warnings if lname == name)
            lines.append(f"  {name}: max ratio {r.max() if r.size else 0:.4f}, flagged {n_warn}/{r.size}")
        for ratio, name, i in self.warnings[:20]:
            lines.append(f"  {name}[{i}]: {ratio:.4f}")
        if len(self.warnings) > 20:
            lines.append(f"  ... {len(self.warnings) - 20} more")
        return "\n".join(lines)


def audit_biases(snn: SpikingNetwork, warn_fraction: float = 0.5) -> BiasAuditReport:
    ratios = np.abs(snn.bias) / snn.threshold
    flagged = np.flatnonzero((ratios >= warn_fraction * 1.0) & (snn.kind == IF_KIND) & (snn.bias != 0))
    warnings = []
    for j in flagged:
        L = int(snn.layer_of[j])
        warnings.append((float(ratios[j]), snn.layer_names[L], int(j - snn.layer_start[L])))
    warnings.sort(key=lambda r: (-r[0], r[1], r[2]))
    return BiasAuditReport(ratios, warnings, warn_fraction)


def _conv_edges(in_shape, out_shape, W):
    """(src, tgt, weight) for a valid cross-correlation with kernel W[ky, kx, c, m]."""
    H, Wd, C = in_shape
    Ho, Wo, M = out_shape
    k = W.shape[0]
    oy, ox, c, m, dy, dx = np.meshgrid(
        np.arange(Ho), np.arange(Wo), np.arange(C), np.arange(M), np.arange(k), np.arange(k), indexing="ij"
    )
    y, x = oy + dy, ox + dx
    src = ((y * Wd + x) * C + c).ravel()
    tgt = ((oy * Wo + ox) * M + m).ravel()
    return src, tgt, W[dy, dx, c, m].ravel()


def _pool_edges(in_shape, out_shape, s):
    H, Wd, C = in_shape
    Ho, Wo, _ = out_shape
    y, x, c = np.meshgrid(np.arange(Ho * s), np.arange(Wo * s), np.arange(C), indexing="ij")
    src = ((y * Wd + x) * C + c).ravel()
    tgt = (((y // s) * Wo + (x // s)) * C + c).ravel()
    return src, tgt, np.zeros(src.size)


def _dense_edges(n_in, W):
    src, tgt = np.meshgrid(np.arange(n_in), np.arange(W.shape[1]), indexing="ij")
    return src.ravel(), tgt.ravel(), W.ravel()


def _csr(n_src, src, tgt, w):
    order = np.lexsort((tgt, src))
    src, tgt, w = src[order], tgt[order], w[order]
    ptr = np.zeros(n_src + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), tgt.astype(np.int64), w


def build_spiking(params_rescaled: NetworkParams, threshold: float = 1.0, scales: ScaleFactors | None = None) -> SpikingNetwork:
    params = params_rescaled.astype(np.float64)
    arch = params.arch
    if params.flatten_order is None:
        raise ConfigError("parameters carry no flatten-order metadata; cannot map dense weights onto neurons")
    if threshold <= 0:
        raise ConfigError("threshold must be positive")
    shapes = arch.shapes()

    names, kinds, sizes, biases = [], [], [], []
    edge_blocks = []  # (source population or -1 for input, src, tgt, w)
    src_pop = -1
    src_shape = shapes[0]
    for i, layer in enumerate(arch.layers):
        out_shape = shapes[i + 1]
        if isinstance(layer, Flatten):
            src_shape = out_shape
            continue
        if isinstance(layer, Conv):
            e = _conv_edges(src_shape, out_shape, params.weights[i])
            b = np.broadcast_to(params.biases[i], out_shape).ravel()
            kind = IF_KIND
        elif isinstance(layer, Dense):
            e = _dense_edges(int(np.prod(src_shape)), params.weights[i])
            b = params.biases[i]
            kind = IF_KIND
        elif isinstance(layer, MaxPool):
            if src_pop < 0:
                raise ConfigError("a pooling layer cannot read the input plane directly")
            e = _pool_edges(src_shape, out_shape, layer.size)
            b = np.zeros(int(np.prod(out_shape)))
            kind = POOL_KIND
        else:
            raise TypeError(layer)
        edge_blocks.append((src_pop, *e))
        names.append(f"{len(names)}_{type(layer).__name__.lower()}")
        kinds.append(kind)
        sizes.append(int(np.prod(out_shape)))
        biases.append(np.asarray(b, dtype=np.float64))
        src_pop = len(names) - 1
        src_shape = out_shape

    layer_start = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(layer_start[-1])
    n_inputs = int(np.prod(shapes[0]))

    all_src, all_tgt, all_w = [], [], []
    in_edges = None
    for L, (sp, src, tgt, w) in enumerate(edge_blocks):
        tgt = tgt + layer_start[L]
        if sp < 0:
            in_edges = (src, tgt, w)
        else:
            all_src.append(src + layer_start[sp])
            all_tgt.append(tgt)
            all_w.append(w)
    in_ptr, in_idx, in_w = _csr(n_inputs, *in_edges)
    if all_src:
        ptr, idx, w = _csr(n, np.concatenate(all_src), np.concatenate(all_tgt), np.concatenate(all_w))
    else:
        ptr, idx, w = np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)

    layer_of = np.repeat(np.arange(len(sizes)), sizes).astype(np.int64)
    kind = np.repeat(np.array(kinds, dtype=np.int64), sizes)
    # inputs of each pooling unit, ascending
    is_pool_edge = kind[idx] == POOL_KIND
    src_of_edge = np.repeat(np.arange(n), np.diff(ptr))
    p_src, p_tgt = src_of_edge[is_pool_edge], idx[is_pool_edge]
    pool_ptr, pool_idx, _ = _csr(n, p_tgt, p_src, np.zeros(p_src.size))

    return SpikingNetwork(
        arch=arch,
        params=params,
        layer_names=tuple(names),
        layer_kind=np.array(kinds, dtype=np.int64),
        layer_start=layer_start,
        layer_of=layer_of,
        kind=kind,
        n_inputs=n_inputs,
        in_ptr=in_ptr,
        in_idx=in_idx,
        in_w=to_fixed(in_w),
        ptr=ptr,
        idx=idx,
        w=to_fixed(w),
        pool_ptr=pool_ptr,
        pool_idx=pool_idx,
        bias=np.concatenate(biases),
        threshold=float(threshold),
        scales=scales,
    )


def convert(params: NetworkParams, calibration_frames, percentile: float = 99.9, threshold: float = 1.0) -> SpikingNetwork:
    scales = estimate_scales(params, calibration_frames, percentile)
    snn = build_spiking(rescale(params, scales), threshold, scales)
    snn.meta.update(
        percentile=percentile,
        calibration_fingerprint=fingerprint_frames(calibration_frames),
    )
    return snn


def fingerprint_frames(frames) -> str:
    import hashlib

    arr = np.ascontiguousarray(np.asarray(frames, dtype=np.float32))
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]
