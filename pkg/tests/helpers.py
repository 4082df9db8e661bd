"""Shared test helpers: small random networks and a finite-difference oracle."""

import numpy as np

from dvsconv.ann import ArchSpec, Conv, Dense, Flatten, MaxPool, init_params, loss_grad  # noqa: F401


def random_arch(rng, depth=None):
    """Small random conv/dense stacks used across the simulator and training tests."""
    kind = rng.integers(0, 3) if depth is None else depth
    if kind == 0:
        return ArchSpec((rng.integers(2, 5), rng.integers(2, 5), 1), (Flatten(), Dense(int(rng.integers(2, 6))), Dense(3)))
    if kind == 1:
        return ArchSpec((6, 6, 1), (Conv(2, 3), MaxPool(2), Flatten(), Dense(3)))
    return ArchSpec((7, 7, 2), (Conv(2, 2), Conv(3, 3), MaxPool(2), Flatten(), Dense(4), Dense(2)))


def random_params(arch, seed, bias_scale=0.0):
    rng = np.random.default_rng(seed)
    p = init_params(arch, seed)
    for i in p.param_layers():
        p.biases[i] = rng.normal(0, bias_scale, p.biases[i].shape) if bias_scale else np.zeros_like(p.biases[i])
    return p


def fd_check(params, frames, labels, l2=0.0, eps=1e-5, max_checks=None, seed=0):
    """Largest component-wise relative error between analytic and central-difference gradients."""
    _, grads = loss_grad(params, frames, labels, l2)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in params.param_layers():
        for name in ("weights", "biases"):
            arr = getattr(params, name)[i]
            g = getattr(grads, name)[i]
            flat = np.arange(arr.size)
            if max_checks is not None and arr.size > max_checks:
                flat = rng.choice(arr.size, max_checks, replace=False)
            for k in flat:
                idx = np.unravel_index(k, arr.shape)
                old = arr[idx]
                arr[idx] = old + eps
                lp, _ = loss_grad(params, frames, labels, l2)
                arr[idx] = old - eps
                lm, _ = loss_grad(params, frames, labels, l2)
                arr[idx] = old
                num = (lp - lm) / (2 * eps)
                den = max(abs(num), abs(g[idx]), 1e-6)
                worst = max(worst, abs(num - g[idx]) / den)
    return worst


def random_relu_net(seed):
    """A 2- or 3-layer ReLU net (dense, or conv followed by dense) with zero biases."""
    rng = np.random.default_rng(seed)
    if seed % 3 == 2:
        arch = ArchSpec((6, 6, 1), (Conv(3, 3), Flatten(), Dense(int(rng.integers(4, 10))), Dense(4)))
    else:
        depth = 2 + seed % 2
        arch = ArchSpec((int(rng.integers(6, 20)), 1, 1), (Flatten(),) + tuple(Dense(int(rng.integers(4, 16))) for _ in range(depth)))
    return random_params(arch, seed, 0.0)


def rate_fidelity(seed, ticks=2000):
    """(max |rate - a/lambda|, Pearson r) over all IF neurons for one random net and frame."""
    from dvsconv.ann import forward
    from dvsconv.convert import convert
    from dvsconv.snn import SimConfig, make_analog_driver, run_sample

    p = random_relu_net(seed)
    frame = np.random.default_rng(seed + 1000).random(p.arch.input_shape)
    net = convert(p, frame[None], percentile=100)
    res = run_sample(net, make_analog_driver(net, frame, ticks), SimConfig(t_steps=ticks))
    fr = forward(p, frame)
    expected = np.concatenate([
        np.maximum(fr.pre_activations[i], 0).ravel() / net.scales.lambdas[i] for i in p.param_layers()
    ])
    got = res.state.count / ticks
    return float(np.abs(got - expected).max()), float(np.corrcoef(got, expected)[0, 1])


def random_ff_case(seed, max_ticks=10_000):
    """A random converted net (pooling included), nonzero biases and a random prior state."""
    from dvsconv.convert import build_spiking
    from dvsconv.snn import SimState

    rng = np.random.default_rng(seed)
    arch = random_arch(rng)
    p = random_params(arch, seed, bias_scale=float(rng.choice([0.001, 0.01, 0.05])))
    net = build_spiking(p)
    state = SimState.zeros(net)
    theta = net.theta_fixed
    state.v[:] = rng.integers(-theta, theta, net.n_neurons)
    state.count[:] = rng.integers(0, 3, net.n_neurons)
    delta = int(rng.integers(0, max_ticks + 1))
    return net, state, delta


def random_hot_sample(rng, n=5000):
    """A 36x36 sample of ``n`` events concentrated on a few random hot pixels plus uniform noise."""
    from dvsconv.aedat import EventStream
    from dvsconv.preprocess import ClassLabel, Sample

    k = rng.integers(1, 40)
    hot = rng.integers(0, 36, (k, 2))
    weights = rng.dirichlet(np.ones(k) * rng.uniform(0.1, 2))
    which = rng.choice(k, n, p=weights)
    noise = rng.random(n) < rng.uniform(0, 0.5)
    x = np.where(noise, rng.integers(0, 36, n), hot[which, 0])
    y = np.where(noise, rng.integers(0, 36, n), hot[which, 1])
    t = np.sort(rng.integers(0, 10**5, n))
    return Sample(EventStream(t, x, y, np.ones(n), (36, 36)), ClassLabel.CENTER)


ACCEPTANCE = {}


def report(criterion, ok, detail):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok
