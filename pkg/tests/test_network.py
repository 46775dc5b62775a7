import numpy as np
import pytest

from spikecmd import autodiff as ad
from spikecmd.autodiff import SurrogateConfig, Tape
from spikecmd.network import (LayerSpec, NetworkSpec, decode_cmd, decode_rate, direct_encode,
                              forward, init_params, param_names)
from spikecmd.neuron import IFConfig, run_layer
from spikecmd.numerics import ShapeError

from conftest import dense_net


def test_direct_encode_replicates():
    x = np.arange(6.0).reshape(2, 3)
    enc = direct_encode(x, 3)
    assert enc.shape == (3, 2, 3)
    for t in range(3):
        np.testing.assert_array_equal(enc[t], x)
    np.testing.assert_array_equal(direct_encode(x, 1)[0], x)
    with pytest.raises(ValueError):
        direct_encode(x, 0)


def test_zero_image_drives_bias_only(rng):
    spec = dense_net([4, 2], 3, time_steps=3)
    params = init_params(spec, rng)
    params["layer0.bias"] = np.array([0.4, 0.0, 1.0, -0.2])
    trace = []
    forward(spec, params, np.zeros((1, 3)), trace=trace)
    # bias-only current of 0.4/step: v = 0.4, 0.8, 1.2 -> spike at t=3
    np.testing.assert_array_equal(trace[0][:, 0, 0], [0, 0, 1])
    np.testing.assert_array_equal(trace[0][:, 0, 2], [1, 1, 1])
    np.testing.assert_array_equal(trace[0][:, 0, 3], [0, 0, 0])


def test_decode_cmd_examples():
    train = np.ones((4, 1))
    assert decode_cmd(train, np.array([[0.5]]))[0] == pytest.approx(0.5)
    np.testing.assert_array_equal(decode_cmd(np.zeros((4, 3)), np.ones((3, 2))), [0.0, 0.0])
    x = np.array([[1, 0], [0, 1], [1, 1]], dtype=float)
    out = decode_cmd(x, np.array([[0.2], [-0.4]]), time_steps=3)
    assert out[0] == pytest.approx((0.2 - 0.4 + (0.2 - 0.4)) / 3, abs=1e-15)
    with pytest.raises(ShapeError):
        decode_cmd(x, np.array([[0.2], [-0.4]]), time_steps=4)


def test_decode_rate_examples():
    assert decode_rate(np.ones((6, 1)))[0] == 1.0
    assert decode_rate(np.zeros((6, 1)))[0] == 0.0
    assert decode_rate(np.array([1, 0, 1, 0, 1, 0.0])[:, None])[0] == 0.5


def test_zero_network_outputs_zero(rng):
    spec = dense_net([5, 5, 3], 4)
    params = {k: np.zeros_like(v) for k, v in init_params(spec, rng).items()}
    np.testing.assert_array_equal(forward(spec, params, rng.random((2, 4))), 0.0)


def test_single_step_hand_trace():
    spec = NetworkSpec((2,), (LayerSpec("dense", 2), LayerSpec("dense", 1, has_if_neurons=False)), time_steps=1)
    params = {
        "layer0.weight": np.array([[1.0, 0.3], [0.5, 0.2]]),
        "layer0.bias": np.array([0.0, 0.1]),
        "layer1.weight": np.array([[2.0], [-3.0]]),
        "layer1.bias": np.array([0.25]),
    }
    # currents: [0.8*1 + 0.4*0.5, 0.8*0.3 + 0.4*0.2 + 0.1] = [1.0, 0.42] -> spikes [1, 0]
    out = forward(spec, params, np.array([[0.8, 0.4]]))
    assert out[0, 0] == pytest.approx(2.0 + 0.25)


def test_forward_is_deterministic(small_net, rng):
    spec, params = small_net
    x = rng.random((3, 4))
    np.testing.assert_array_equal(forward(spec, params, x), forward(spec, params, x))


def test_forward_agrees_with_layer_simulation(rng):
    spec = dense_net([7, 5, 3], 4, time_steps=6)
    params = init_params(spec, rng, gain=2.0)
    x = rng.random((1, 4))
    trace = []
    out = forward(spec, params, x, trace=trace)
    enc = direct_encode(x, 6)
    s0 = run_layer(enc, params["layer0.weight"], params["layer0.bias"], IFConfig())
    s1 = run_layer(s0, params["layer1.weight"], params["layer1.bias"], IFConfig())
    np.testing.assert_array_equal(trace[0], s0)
    np.testing.assert_array_equal(trace[1], s1)
    np.testing.assert_allclose(out, decode_cmd(s1, params["layer2.weight"], params["layer2.bias"]), rtol=1e-14)


def test_conv_network_shapes(rng):
    spec = NetworkSpec(
        (2, 8, 8),
        (LayerSpec("conv2d", 4, 3, 1, 1), LayerSpec("conv2d", 6, 2, 2, 0),
         LayerSpec("conv2d", 7, 1, has_if_neurons=False)),
        time_steps=3,
    )
    assert spec.output_shape == (7, 4, 4)
    params = init_params(spec, rng)
    assert forward(spec, params, rng.random((2, 2, 8, 8))).shape == (2, 7, 4, 4)


def test_spec_validation():
    head = LayerSpec("dense", 2, has_if_neurons=False)
    with pytest.raises(ValueError):
        NetworkSpec((3,), (head,))
    with pytest.raises(ValueError):
        NetworkSpec((3,), (LayerSpec("dense", 4), head), decoding="rate")
    with pytest.raises(ValueError):
        NetworkSpec((3,), (LayerSpec("dense", 4, has_if_neurons=False), head))
    with pytest.raises(ShapeError):
        NetworkSpec((3,), (LayerSpec("dense", 4), LayerSpec("conv2d", 2, has_if_neurons=False)))
    with pytest.raises(ShapeError):
        forward(dense_net([4, 2], 3), init_params(dense_net([4, 2], 3), np.random.default_rng(0)), np.ones((1, 5)))


def test_head_bias_optional(rng):
    spec = dense_net([4, 2], 3, head_bias=False)
    assert "layer1.bias" not in param_names(spec)
    assert "layer1.bias" not in init_params(spec, rng)


def test_cmd_reproduced_from_logged_spikes(rng):
    for _ in range(20):
        spec = dense_net([9, 6, 4], 5, time_steps=int(rng.integers(1, 8)))
        params = init_params(spec, rng, gain=1.5)
        trace = []
        out = forward(spec, params, rng.random((3, 5)), trace=trace)
        w, b = params["layer2.weight"], params["layer2.bias"]
        replay = np.zeros_like(out)
        for t in range(spec.time_steps):
            for n in range(3):
                for j in range(4):
                    replay[n, j] += sum(trace[1][t, n, i] * w[i, j] for i in range(6)) + b[j]
        replay /= spec.time_steps
        np.testing.assert_allclose(out, replay, rtol=0, atol=1e-12)


def test_cmd_unbounded_rate_bounded_and_quantized(rng):
    seen_outside = False
    for _ in range(20):
        t = int(rng.integers(1, 9))
        cmd = dense_net([8, 8, 4], 3, time_steps=t)
        params = init_params(cmd, rng, gain=3.0)
        x = rng.random((5, 3))
        out_cmd = forward(cmd, params, x)
        out_rate = forward(cmd.with_decoding("rate"), params, x)
        seen_outside |= bool(np.any((out_cmd < 0) | (out_cmd > 1)))
        assert np.all((out_rate >= 0) & (out_rate <= 1))
        np.testing.assert_allclose(out_rate * t, np.rint(out_rate * t), atol=1e-12)
    assert seen_outside


def test_cmd_resolution_not_coarser_than_rate():
    # one presynaptic neuron with weight w: reachable cmd values {k w / T}
    for t in (4, 6):
        for w in (0.37, 1.0, 2.5):
            cmd_vals, rate_vals = set(), set()
            for pattern in range(2 ** t):
                train = np.array([(pattern >> k) & 1 for k in range(t)], dtype=float)[:, None]
                cmd_vals.add(round(float(decode_cmd(train, np.array([[w]]))[0]), 12))
                out = run_layer(train, np.array([[w]]), np.zeros(1), IFConfig())
                rate_vals.add(round(float(decode_rate(out)[0]), 12))
            assert len(cmd_vals) >= len(rate_vals)
            spacing = np.diff(sorted(cmd_vals))
            np.testing.assert_allclose(spacing, abs(w) / t, rtol=1e-9)


def test_gradient_reaches_first_layer(rng):
    spec = dense_net([12, 10, 3], 6, time_steps=6)
    for _ in range(10):
        params = init_params(spec, rng, gain=1.5)
        x = rng.random((4, 6))
        trace = []
        tape = Tape()
        out = forward(spec, params, x, tape=tape, trace=trace)
        if any(t.sum() == 0 for t in trace):
            continue
        grads = tape.gradients(ad.mse(out, rng.random((4, 3))))
        assert np.any(grads["layer0.weight"] != 0)
        return
    pytest.fail("no random network spiked in every layer")
