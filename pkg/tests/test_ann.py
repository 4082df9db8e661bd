import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvsconv.ann import (
    DEFAULT_ARCH,
    AdamState,
    ArchSpec,
    Dense,
    Flatten,
    NetworkParams,
    TrainConfig,
    adam_step,
    ann_op_count,
    forward,
    init_params,
    loss_grad,
    mac_counts,
    predict,
    predict_batch,
    train,
)
from dvsconv.errors import ConfigError
from dvsconv.preprocess import ClassLabel

from helpers import fd_check, random_arch, random_params


def test_default_architecture_counts():
    assert DEFAULT_ARCH.param_count() == 6472
    assert DEFAULT_ARCH.neuron_count() == 5884
    assert init_params(DEFAULT_ARCH).count() == 6472


def test_spatial_shape_trace():
    shapes = DEFAULT_ARCH.shapes()
    spatial = [s[0] for s in shapes if len(s) == 3]
    assert spatial == [36, 32, 16, 12, 6]
    assert shapes[-3:] == [(144,), (40,), (4,)]


def test_zero_frame_gives_uniform_probabilities():
    p = init_params(DEFAULT_ARCH, seed=1)
    fr = forward(p, np.zeros((36, 36)))
    assert np.allclose(fr.probs, 0.25)
    assert all(np.all(a == 0) for a in fr.activations[:-1])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_probabilities_sum_to_one_and_relu_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p = random_params(DEFAULT_ARCH, seed, bias_scale=0.3)
    fr = forward(p, rng.random((3, 36, 36)))
    assert np.allclose(fr.probs.sum(axis=1), 1.0, atol=1e-9)
    for layer, a in zip(DEFAULT_ARCH.layers[:-1], fr.activations[:-1]):
        assert a.min() >= 0


def test_first_layer_is_linear_in_input():
    p = init_params(DEFAULT_ARCH, seed=2)
    x = np.random.default_rng(0).random((36, 36))
    z1 = forward(p, x).pre_activations[0]
    z2 = forward(p, 2 * x).pre_activations[0]
    assert np.array_equal(z2, 2 * z1)


def test_gradients_match_finite_differences_on_tiny_nets():
    for s in range(20):
        rng = np.random.default_rng(s)
        arch = random_arch(rng, s % 3)
        p = random_params(arch, s, 0.1)
        frames = rng.random((3,) + tuple(arch.input_shape))
        labels = rng.integers(0, arch.n_classes, 3)
        assert fd_check(p, frames, labels, l2=1e-3) <= 1e-4


def test_gradients_match_finite_differences_on_default_arch_sample():
    rng = np.random.default_rng(0)
    p = random_params(DEFAULT_ARCH, 0, 0.1)
    frames = rng.random((2, 36, 36, 1))
    assert fd_check(p, frames, [0, 3], l2=1e-4, max_checks=8) <= 1e-4


def test_confident_correct_prediction_has_vanishing_loss():
    arch = ArchSpec((2, 1, 1), (Flatten(), Dense(2, activation="softmax")))
    p = init_params(arch)
    p.weights[1] = np.array([[60.0, -60.0], [0.0, 0.0]])
    loss, g = loss_grad(p, np.array([[[[1.0]], [[0.0]]]]), [0])
    assert loss < 1e-40
    assert np.abs(g.weights[1]).max() < 1e-40


def test_l2_penalty_is_linear_in_coefficient():
    p = random_params(DEFAULT_ARCH, 4, 0.2)
    x = np.random.default_rng(1).random((4, 36, 36))
    y = [0, 1, 2, 3]
    base, _ = loss_grad(p, x, y, 0.0)
    one, _ = loss_grad(p, x, y, 1e-3)
    two, _ = loss_grad(p, x, y, 2e-3)
    assert two - base == pytest.approx(2 * (one - base), rel=1e-9)
    assert one - base == pytest.approx(1e-3 * sum(np.sum(a ** 2) for a in p.arrays()), rel=1e-9)


def test_adam_zero_gradient_leaves_params_unchanged():
    p = random_params(DEFAULT_ARCH, 0, 0.1)
    zero = NetworkParams(p.arch, [None if w is None else np.zeros_like(w) for w in p.weights],
                         [None if b is None else np.zeros_like(b) for b in p.biases])
    q, state = adam_step(p, zero, AdamState.zeros_like(p), TrainConfig())
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    assert state.t == 1


def test_adam_first_step_moves_by_learning_rate_against_gradient_sign():
    arch = ArchSpec((3, 1, 1), (Flatten(), Dense(2)))
    p = random_params(arch, 0, 0.1)
    g = random_params(arch, 1, 0.5)
    cfg = TrainConfig(learning_rate=0.01)
    q, _ = adam_step(p, g, AdamState.zeros_like(p), cfg)
    for a, b, ga in zip(p.arrays(), q.arrays(), g.arrays()):
        assert np.allclose(b - a, -0.01 * np.sign(ga), rtol=1e-5)


def test_adam_converges_on_a_quadratic():
    arch = ArchSpec((1, 1, 1), (Flatten(), Dense(1)))
    p = init_params(arch)
    p.weights[1][:] = 5.0
    p.biases[1][:] = -4.0
    state = AdamState.zeros_like(p)
    cfg = TrainConfig(learning_rate=0.05)
    for _ in range(2000):
        g = NetworkParams(arch, [None, 2 * (p.weights[1] - 2.0)], [None, 2 * (p.biases[1] - 1.0)])
        p, state = adam_step(p, g, state, cfg)
    assert abs(p.weights[1].item() - 2.0) < 1e-3
    assert abs(p.biases[1].item() - 1.0) < 1e-3


def toy_set(n=64, seed=0):
    """Four linearly separable 6x6 classes: a bright quadrant per class."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 4
    frames = rng.random((n, 6, 6)) * 0.1
    for i, c in enumerate(labels):
        r, q = divmod(int(c), 2)
        frames[i, 3 * r:3 * r + 3, 3 * q:3 * q + 3] += 0.9
    return frames, labels


TOY_ARCH = ArchSpec((6, 6, 1), (Flatten(), Dense(8), Dense(4, activation="softmax")))


def test_training_reaches_perfect_accuracy_on_separable_set():
    x, y = toy_set()
    params, hist = train(x, y, TOY_ARCH, TrainConfig(epochs=40, batch_size=8, learning_rate=0.01, seed=3))
    assert np.mean(predict_batch(params, x) == y) == 1.0
    assert hist[-1]["loss"] < hist[0]["loss"]
    assert [h["epoch"] for h in hist] == list(range(1, 41))


def test_training_is_bitwise_deterministic():
    x, y = toy_set()
    cfg = TrainConfig(epochs=3, batch_size=8, seed=5)
    a, ha = train(x, y, TOY_ARCH, cfg)
    b, hb = train(x, y, TOY_ARCH, cfg)
    assert all(np.array_equal(u, v) for u, v in zip(a.arrays(), b.arrays()))
    strip = lambda h: [(r["epoch"], r["loss"], r["train_acc"]) for r in h]  # noqa: E731
    assert strip(ha) == strip(hb)


def test_training_without_biases_keeps_them_zero():
    x, y = toy_set()
    params, _ = train(x, y, TOY_ARCH, TrainConfig(epochs=3, batch_size=8, use_biases=False))
    assert all(np.all(params.biases[i] == 0) for i in params.param_layers())


def test_l2_shrinks_the_largest_bias():
    x, y = toy_set(128, seed=1)
    kw = dict(epochs=30, batch_size=8, learning_rate=0.01, seed=2)
    free, _ = train(x, y, TOY_ARCH, TrainConfig(l2=0.0, **kw))
    reg, _ = train(x, y, TOY_ARCH, TrainConfig(l2=1e-2, **kw))
    max_bias = lambda p: max(np.abs(p.biases[i]).max() for i in p.param_layers())  # noqa: E731
    assert max_bias(reg) < max_bias(free)


@pytest.mark.parametrize("bad", [dict(epochs=0), dict(batch_size=0), dict(l2=-1.0), dict(dtype="int32")])
def test_invalid_train_config_is_rejected(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad).validate()


def test_predict_ties_resolve_to_left():
    p = init_params(DEFAULT_ARCH)
    assert predict(p, np.zeros((36, 36))) is ClassLabel.LEFT


def test_op_counts():
    arch = ArchSpec((10, 1, 1), (Flatten(), Dense(5)))
    assert ann_op_count(arch) == 100
    assert mac_counts(DEFAULT_ARCH) == [102400, 0, 57600, 0, 0, 5760, 160]
    assert sum(mac_counts(DEFAULT_ARCH)) == 165920
    assert ann_op_count(DEFAULT_ARCH) == 331840
