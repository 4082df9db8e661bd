"""
A small frame-based CNN with hand-written forward and backward passes.

Tensors are channel-last: inputs ``(N, H, W, C)``, conv kernels
``(kh, kw, C_in, C_out)``, dense weights ``(D_in, D_out)``. Flatten is
row-major over ``(H, W, C)``, so flat index = (y * W + x) * C + c. The
spiking conversion relies on this ordering.

Weights are initialised from U(-a, a) with a = sqrt(6 / fan_in) (He-uniform);
biases start at zero.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError, NumericError

FLATTEN_ORDER = "row-major (y, x, c), channel-last"


@dataclass(frozen=True)
class Conv:
    out_maps: int
    kernel: int = 5
    activation: str = "relu"


@dataclass(frozen=True)
class MaxPool:
    size: int = 2


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "relu"


Layer = Union[Conv, MaxPool, Flatten, Dense]


@dataclass(frozen=True)
class ArchSpec:
    input_shape: tuple[int, int, int]
    layers: tuple[Layer, ...]

    def shapes(self) -> list[tuple[int, ...]]:
        """Output shape of every layer, input shape first."""
        shapes = [tuple(self.input_shape)]
        for layer in self.layers:
            s = shapes[-1]
            if isinstance(layer, Conv):
                shapes.append((s[0] - layer.kernel + 1, s[1] - layer.kernel + 1, layer.out_maps))
            elif isinstance(layer, MaxPool):
                shapes.append((s[0] // layer.size, s[1] // layer.size, s[2]))
            elif isinstance(layer, Flatten):
                shapes.append((int(np.prod(s)),))
            elif isinstance(layer, Dense):
                shapes.append((layer.units,))
            else:
                raise TypeError(layer)
            if min(shapes[-1]) < 1:
                raise ValueError(f"layer {layer} produces empty output from {s}")
        return shapes

    def param_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]] | None]:
        out = []
        shapes = self.shapes()
        for layer, s in zip(self.layers, shapes):
            if isinstance(layer, Conv):
                out.append(((layer.kernel, layer.kernel, s[-1], layer.out_maps), (layer.out_maps,)))
            elif isinstance(layer, Dense):
                out.append(((s[0], layer.units), (layer.units,)))
            else:
                out.append(None)
        return out

    def param_count(self) -> int:
        return sum(int(np.prod(w)) + int(np.prod(b)) for w, b in filter(None, self.param_shapes()))

    def neuron_count(self) -> int:
        # flatten is a re-indexing, not a population
        return sum(
            int(np.prod(s))
            for layer, s in zip(self.layers, self.shapes()[1:])
            if not isinstance(layer, Flatten)
        )

    @property
    def n_classes(self) -> int:
        return self.shapes()[-1][0]

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            d = {"type": type(layer).__name__}
            d.update(layer.__dict__)
            layers.append(d)
        return {"input_shape": list(self.input_shape), "layers": layers}

    @classmethod
    def from_dict(cls, d) -> "ArchSpec":
        kinds = {"Conv": Conv, "MaxPool": MaxPool, "Flatten": Flatten, "Dense": Dense}
        layers = []
        for spec in d["layers"]:
            spec = dict(spec)
            layers.append(kinds[spec.pop("type")](**spec))
        return cls(tuple(d["input_shape"]), tuple(layers))


DEFAULT_ARCH = ArchSpec(
    input_shape=(36, 36, 1),
    layers=(
        Conv(4, 5),
        MaxPool(2),
        Conv(4, 5),
        MaxPool(2),
        Flatten(),
        Dense(40),
        Dense(4, activation="softmax"),
    ),
)


@dataclass
class NetworkParams:
    arch: ArchSpec
    weights: list  # per layer; None for parameter-free layers
    biases: list
    flatten_order: str | None = FLATTEN_ORDER

    def param_layers(self) -> list[int]:
        return [i for i, w in enumerate(self.weights) if w is not None]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for i in self.param_layers():
            out += [self.weights[i], self.biases[i]]
        return out

    def copy(self) -> "NetworkParams":
        return copy.deepcopy(self)

    def count(self) -> int:
        return sum(a.size for a in self.arrays())

    @property
    def dtype(self):
        return self.weights[self.param_layers()[0]].dtype

    def astype(self, dtype) -> "NetworkParams":
        cast = lambda a: None if a is None else np.asarray(a, dtype=dtype)
        return NetworkParams(self.arch, [cast(w) for w in self.weights], [cast(b) for b in self.biases], self.flatten_order)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    l2: float = 1e-4
    use_biases: bool = True
    seed: int = 0
    dtype: str = "float32"

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.l2 < 0:
            raise ConfigError("need epochs >= 1, batch_size >= 1, l2 >= 0")
        if np.dtype(self.dtype) not in (np.float32, np.float64):
            raise ConfigError("dtype must be float32 or float64")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "AdamState":
        arrs = params.arrays()
        return cls([np.zeros_like(a) for a in arrs], [np.zeros_like(a) for a in arrs], 0)


def init_params(arch: ArchSpec, seed: int = 0, dtype=np.float64) -> NetworkParams:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for ps in arch.param_shapes():
        if ps is None:
            weights.append(None)
            biases.append(None)
            continue
        wshape, bshape = ps
        fan_in = int(np.prod(wshape[:-1]))
        a = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-a, a, wshape).astype(dtype))
        biases.append(np.zeros(bshape, dtype=dtype))
    return NetworkParams(arch, weights, biases)


# --- layer primitives -------------------------------------------------------


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    n, h, w, c = x.shape
    ho, wo = h - k + 1, w - k + 1
    if c == 1:
        # shifted-slice copies are much faster than a strided gather here
        cols_t = np.empty((k, k, n, ho, wo), dtype=x.dtype)
        x2 = x[..., 0]
        for i in range(k):
            for j in range(k):
                cols_t[i, j] = x2[:, i:i + ho, j:j + wo]
        return cols_t.reshape(k * k, n * ho * wo).T
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))  # N,Ho,Wo,C,k,k
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * c)


def conv_forward(x, W, b):
    k = W.shape[0]
    n, h, w, _ = x.shape
    ho, wo = h - k + 1, w - k + 1
    cols = _im2col(x, k)
    z = cols @ W.reshape(-1, W.shape[-1]) + b
    return z.reshape(n, ho, wo, W.shape[-1]), cols


def conv_backward(dz, x_shape, cols, W, need_dx=True):
    k = W.shape[0]
    m = W.shape[-1]
    dz2 = dz.reshape(-1, m)
    dW = (cols.T @ dz2).reshape(W.shape)
    db = dz2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    # full correlation of dz with the spatially flipped, transposed kernel
    padded = np.pad(dz, ((0, 0), (k - 1, k - 1), (k - 1, k - 1), (0, 0)))
    W_rev = W[::-1, ::-1].transpose(0, 1, 3, 2)
    dx, _ = conv_forward(padded, W_rev, 0.0)
    return dx, dW, db


def pool_forward(x, s):
    n, h, w, c = x.shape
    ho, wo = h // s, w // s
    out = x[:, 0:ho * s:s, 0:wo * s:s, :].copy()
    idx = np.zeros(out.shape, dtype=np.int8)
    k = 0
    for di in range(s):
        for dj in range(s):
            if k:
                cand = x[:, di:ho * s:s, dj:wo * s:s, :]
                better = cand > out  # strict: the first maximum wins ties
                out[better] = cand[better]
                idx[better] = k
            k += 1
    return out, idx


def pool_backward(dout, x_shape, idx, s):
    ho, wo = dout.shape[1:3]
    dx = np.zeros(x_shape, dtype=dout.dtype)
    k = 0
    for di in range(s):
        for dj in range(s):
            dx[:, di:ho * s:s, dj:wo * s:s, :] = np.where(idx == k, dout, 0.0)
            k += 1
    return dx


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(arch: ArchSpec, frames, dtype=np.float64) -> np.ndarray:
    x = np.asarray(frames, dtype=dtype)
    shape = tuple(arch.input_shape)
    if x.shape == shape or x.shape == shape[:2]:
        x = x[None]
    return x.reshape((x.shape[0],) + shape)


@dataclass
class ForwardResult:
    activations: list  # output of every layer (post-nonlinearity); logits for the last
    pre_activations: list
    logits: np.ndarray
    probs: np.ndarray
    caches: list = field(repr=False, default_factory=list)


def forward(params: NetworkParams, frames, keep_cache: bool = False) -> ForwardResult:
    arch = params.arch
    x = _as_batch(arch, frames, params.dtype)
    acts, pres, caches = [], [], []
    for i, layer in enumerate(arch.layers):
        inp = x
        cache = None
        if isinstance(layer, Conv):
            z, cols = conv_forward(x, params.weights[i], params.biases[i])
            cache = cols
        elif isinstance(layer, Dense):
            z = x @ params.weights[i] + params.biases[i]
        elif isinstance(layer, MaxPool):
            z, cache = pool_forward(x, layer.size)
        else:
            z = x.reshape(x.shape[0], -1)
        pres.append(z)
        act = getattr(layer, "activation", None)
        x = np.maximum(z, 0.0) if act == "relu" else z
        acts.append(x)
        if keep_cache:
            caches.append((inp.shape, inp, cache))
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite value in forward pass")
    logits = x
    return ForwardResult(acts, pres, logits, softmax(logits), caches)


def loss_grad(params: NetworkParams, frames, labels, l2: float = 0.0, use_biases: bool = True):
    """Mean cross-entropy plus ``l2 * sum(param**2)`` over weights and biases."""
    loss, grads, _ = _loss_grad(params, frames, labels, l2, use_biases)
    return loss, grads


def _loss_grad(params, frames, labels, l2, use_biases):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty batch")
    fr = forward(params, frames, keep_cache=True)
    n = labels.size
    p = fr.probs
    ce = -np.mean(np.log(np.maximum(p[np.arange(n), labels], 1e-300)))
    reg = l2 * sum(float(np.sum(a * a)) for a in params.arrays())
    arch = params.arch
    gw = [None] * len(arch.layers)
    gb = [None] * len(arch.layers)
    d = p.copy()
    d[np.arange(n), labels] -= 1.0
    d /= n
    first_param = params.param_layers()[0]
    for i in range(len(arch.layers) - 1, -1, -1):
        layer = arch.layers[i]
        in_shape, inp, cache = fr.caches[i]
        if getattr(layer, "activation", None) == "relu":
            d = d * (fr.pre_activations[i] > 0)
        need_dx = i > first_param
        if isinstance(layer, Conv):
            d, gw[i], gb[i] = conv_backward(d, in_shape, cache, params.weights[i], need_dx)
        elif isinstance(layer, Dense):
            gw[i] = inp.T @ d
            gb[i] = d.sum(axis=0)
            d = d @ params.weights[i].T if need_dx else None
        elif isinstance(layer, MaxPool):
            d = pool_backward(d, in_shape, cache, layer.size)
        else:
            d = d.reshape(in_shape)
        if gw[i] is not None:
            gw[i] = gw[i] + 2.0 * l2 * params.weights[i]
            gb[i] = gb[i] + 2.0 * l2 * params.biases[i] if use_biases else np.zeros_like(gb[i])
        if d is None:
            break
    grads = NetworkParams(arch, gw, gb, params.flatten_order)
    return float(ce + reg), grads, p


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState, config: TrainConfig):
    t = state.t + 1
    new_w = list(params.weights)
    new_b = list(params.biases)
    m_out, v_out = [], []
    lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.epsilon
    k = 0
    for i in params.param_layers():
        for name, store in (("weights", new_w), ("biases", new_b)):
            p = getattr(params, name)[i]
            g = getattr(grads, name)[i]
            m = b1 * state.m[k] + (1 - b1) * g
            v = b2 * state.v[k] + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            store[i] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
            m_out.append(m)
            v_out.append(v)
            k += 1
    return NetworkParams(params.arch, new_w, new_b, params.flatten_order), AdamState(m_out, v_out, t)


def predict_batch(params: NetworkParams, frames, chunk: int = 512) -> np.ndarray:
    x = _as_batch(params.arch, frames, params.dtype)
    out = [forward(params, x[i:i + chunk]).probs.argmax(axis=1) for i in range(0, len(x), chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def predict(params: NetworkParams, frame) -> int:
    from .preprocess import ClassLabel

    probs = forward(params, frame).probs[0]
    idx = int(np.argmax(probs))
    return ClassLabel(idx) if params.arch.n_classes == len(ClassLabel) else idx


def train(frames, labels, arch: ArchSpec = DEFAULT_ARCH, config: TrainConfig | None = None, val=None, params=None):
    """Mini-batch Adam. Returns (params, history); ``val`` is an optional (frames, labels) pair."""
    config = config or TrainConfig()
    config.validate()
    dtype = np.dtype(config.dtype)
    x = _as_batch(arch, frames, dtype)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    params = init_params(arch, config.seed, dtype) if params is None else params.astype(dtype)
    if not config.use_biases:
        params.biases = [None if b is None else np.zeros_like(b) for b in params.biases]
    state = AdamState.zeros_like(params)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x))
        total_loss, correct = 0.0, 0
        for s in range(0, len(x), config.batch_size):
            idx = order[s:s + config.batch_size]
            loss, grads, probs = _loss_grad(params, x[idx], y[idx], config.l2, config.use_biases)
            correct += int(np.sum(probs.argmax(axis=1) == y[idx]))
            params, state = adam_step(params, grads, state, config)
            if not config.use_biases:
                params.biases = [None if b is None else np.zeros_like(b) for b in params.biases]
            total_loss += loss * len(idx)
        row = {"epoch": epoch, "loss": total_loss / len(x), "train_acc": correct / len(x), "val_acc": float("nan")}
        if val is not None and len(val[1]):
            row["val_acc"] = float(np.mean(predict_batch(params, val[0]) == np.asarray(val[1])))
        history.append(row)
    return params, history


def mac_counts(arch: ArchSpec) -> list[int]:
    """Multiply-accumulates per layer for one frame (zero for parameter-free layers)."""
    out = []
    for layer, s_in, s_out in zip(arch.layers, arch.shapes(), arch.shapes()[1:]):
        if isinstance(layer, Conv):
            out.append(s_out[0] * s_out[1] * s_out[2] * layer.kernel * layer.kernel * s_in[-1])
        elif isinstance(layer, Dense):
            out.append(s_in[0] * layer.units)
        else:
            out.append(0)
    return out


def ann_op_count(arch: ArchSpec) -> int:
    """2 ops (multiply + add) per MAC, summed over conv and dense layers."""
    return 2 * sum(mac_counts(arch))
