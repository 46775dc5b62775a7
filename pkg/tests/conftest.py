import numpy as np
import pytest

from spikecmd.autodiff import SurrogateConfig
from spikecmd.network import LayerSpec, NetworkSpec, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dense_net(sizes, n_in, time_steps=4, decoding="cmd", alpha=2.0, detach_reset=False, head_bias=True):
    layers = [LayerSpec("dense", n) for n in sizes[:-1]]
    layers.append(LayerSpec("dense", sizes[-1], has_if_neurons=decoding == "rate"))
    return NetworkSpec((n_in,), tuple(layers), time_steps, decoding,
                       SurrogateConfig(alpha, detach_reset), head_bias)


@pytest.fixture
def small_net(rng):
    spec = dense_net([6, 5, 3], 4, time_steps=4)
    return spec, init_params(spec, rng)


def replay_count(spec, params, trace):
    """One AC per (spike, downstream synapse) pair, by brute force."""
    count = 0
    shapes = spec.shapes()
    for li, train in enumerate(trace):
        if li + 1 >= len(spec.layers):
            break
        layer = spec.layers[li + 1]
        in_shape, out_shape = shapes[li + 1]
        for t in range(train.shape[0]):
            for n in range(train.shape[1]):
                spikes = train[t, n]
                for idx in zip(*np.nonzero(spikes)):
                    if layer.kind == "dense":
                        count += layer.out
                        continue
                    c, y, x = idx
                    for oy in range(out_shape[1]):
                        for ox in range(out_shape[2]):
                            dy = y + layer.padding - oy * layer.stride
                            dx = x + layer.padding - ox * layer.stride
                            if 0 <= dy < layer.kernel and 0 <= dx < layer.kernel:
                                count += layer.out
    return count


def random_small_net(rng):
    t = int(rng.integers(1, 11))
    decoding = "cmd" if rng.random() < 0.5 else "rate"
    if rng.random() < 0.5:
        sizes = [int(n) for n in rng.integers(2, 9, size=int(rng.integers(2, 5)))]
        return dense_net(sizes, int(rng.integers(2, 6)), t, decoding)
    layers = [LayerSpec("conv2d", int(rng.integers(1, 4)), 3, 1, 1)]
    if rng.random() < 0.5:
        layers.append(LayerSpec("conv2d", int(rng.integers(1, 4)), 2, 2, 0))
    layers.append(LayerSpec("dense", 3, has_if_neurons=decoding == "rate"))
    return NetworkSpec((int(rng.integers(1, 3)), 4, 4), tuple(layers), t, decoding)
