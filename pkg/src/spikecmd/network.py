"""Time-unrolled spiking network with direct encoding and a decoding head.

The first layer receives the real-valued input at every step and drives IF
neurons. Hidden layers map spikes to currents that drive further IF layers.
The last layer is the decoding layer:

* ``cmd``  (current mean decoding): the time-mean of the head's synaptic
  currents, an unconstrained real vector.
* ``rate``: the head drives IF neurons and the output is spike count / T.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import SurrogateConfig, Var
from .neuron import IFConfig
from .numerics import ShapeError, as_tensor, conv_output_size

DECODINGS = ("cmd", "rate")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    has_if_neurons: bool = True
    if_config: IFConfig = field(default_factory=IFConfig)

    def __post_init__(self):
        if self.kind not in ("dense", "conv2d"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.out < 1:
            raise ValueError("layer must have at least one output")

    def output_shape(self, in_shape):
        if self.kind == "dense":
            return (self.out,)
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d layer needs C x H x W input, got {in_shape}")
        _, h, w = in_shape
        return (
            self.out,
            conv_output_size(h, self.kernel, self.stride, self.padding),
            conv_output_size(w, self.kernel, self.stride, self.padding),
        )

    def weight_shape(self, in_shape):
        if self.kind == "dense":
            return (int(np.prod(in_shape)), self.out)
        return (self.out, in_shape[0], self.kernel, self.kernel)

    def fan_in(self, in_shape):
        ws = self.weight_shape(in_shape)
        return ws[0] if self.kind == "dense" else int(np.prod(ws[1:]))


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple
    layers: tuple
    time_steps: int = 6
    decoding: str = "cmd"
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    head_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(n) for n in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.time_steps < 1:
            raise ValueError("time_steps must be >= 1")
        if self.decoding not in DECODINGS:
            raise ValueError(f"decoding must be one of {DECODINGS}, got {self.decoding!r}")
        if len(self.layers) < 2:
            raise ValueError("need an encoding layer and a decoding layer")
        if not self.layers[0].has_if_neurons:
            raise ValueError("the encoding layer must be followed by IF neurons")
        if any(not l.has_if_neurons for l in self.layers[:-1]):
            raise ValueError("every layer before the decoding layer must have IF neurons")
        if self.layers[-1].has_if_neurons != (self.decoding == "rate"):
            raise ValueError("decoding layer has IF neurons exactly when decoding='rate'")
        self.shapes()

    def shapes(self):
        """``[(in_shape, out_shape), ...]`` per layer."""
        out = []
        shape = self.input_shape
        for layer in self.layers:
            nxt = layer.output_shape(shape)
            out.append((shape, nxt))
            shape = nxt
        return out

    @property
    def output_shape(self):
        return self.shapes()[-1][1]

    def with_decoding(self, decoding: str) -> "NetworkSpec":
        head = replace(self.layers[-1], has_if_neurons=decoding == "rate")
        return replace(self, decoding=decoding, layers=self.layers[:-1] + (head,))


def param_names(spec: NetworkSpec):
    names = []
    last = len(spec.layers) - 1
    for i in range(len(spec.layers)):
        names.append(f"layer{i}.weight")
        if i < last or spec.head_bias:
            names.append(f"layer{i}.bias")
    return names


def init_params(spec: NetworkSpec, rng: np.random.Generator, gain: float = 1.0):
    """Kaiming fan-in normal weights, zero biases."""
    params = {}
    last = len(spec.layers) - 1
    for i, (layer, (in_shape, _)) in enumerate(zip(spec.layers, spec.shapes())):
        std = gain * np.sqrt(2.0 / layer.fan_in(in_shape))
        params[f"layer{i}.weight"] = rng.normal(0.0, std, size=layer.weight_shape(in_shape))
        if i < last or spec.head_bias:
            params[f"layer{i}.bias"] = np.zeros(layer.out)
    return params


def direct_encode(image, time_steps: int):
    """Present the same real-valued image at every step: ``[T, *image.shape]``."""
    if time_steps < 1:
        raise ValueError("time_steps must be >= 1")
    image = as_tensor(image)
    return np.broadcast_to(image, (time_steps,) + image.shape).copy()


def _affine(layer: LayerSpec, x, weight, bias):
    if layer.kind == "dense":
        xv = ad.value(x)
        if xv.ndim > 2:
            x = ad.reshape(x, (xv.shape[0], -1))
        return ad.linear(x, weight, bias)
    return ad.conv2d(x, weight, bias, layer.stride, layer.padding)


def decode_cmd(spike_train_in, weight, bias=None, time_steps=None):
    """Current mean decoding of a ``[T, ..., n_in]`` spike train through a dense head."""
    n_t = len(spike_train_in)
    if time_steps is not None and n_t != time_steps:
        raise ShapeError(f"decode_cmd: train has {n_t} steps, expected {time_steps}")
    currents = [ad.linear(x_t, weight, bias) for x_t in spike_train_in]
    return ad.mul(ad.sum_list(currents), 1.0 / n_t)


def decode_rate(spike_train_out, time_steps=None):
    """Spike count divided by T for a ``[T, ...]`` train."""
    n_t = len(spike_train_out)
    if time_steps is not None and n_t != time_steps:
        raise ShapeError(f"decode_rate: train has {n_t} steps, expected {time_steps}")
    return ad.mul(ad.sum_list(list(spike_train_out)), 1.0 / n_t)


def forward(spec: NetworkSpec, params, images, tape=None, smooth=False, trace=None):
    """Run the network on a batch ``images[B, *input_shape]``.

    With ``tape`` every parameter is watched under its name and the returned
    output is a :class:`Var`. ``smooth=True`` replaces the spike step with the
    surrogate function in the forward pass. If ``trace`` is a list, it is
    filled with one ``[T, B, *shape]`` spike array per IF layer.
    """
    x = as_tensor(images)
    if x.shape[1:] != spec.input_shape:
        raise ShapeError(f"forward: input shape {x.shape[1:]} does not match {spec.input_shape}")
    if tape is not None:
        p = {name: tape.watch(name, params[name]) for name in param_names(spec)}
    else:
        p = {name: params[name] for name in param_names(spec)}
    n_t = spec.time_steps
    cfg = spec.surrogate
    layers = spec.layers
    # direct encoding: the input is identical at every step, so its current is too
    enc_current = _affine(layers[0], x, p["layer0.weight"], p["layer0.bias"])
    v = [None] * len(layers)
    spikes_log = [[] for _ in layers]
    head_out = []
    for _ in range(n_t):
        h = enc_current
        for i, layer in enumerate(layers):
            if i > 0:
                h = _affine(layer, h, p[f"layer{i}.weight"], p.get(f"layer{i}.bias"))
            if not layer.has_if_neurons:
                head_out.append(h)
                continue
            th = layer.if_config.v_threshold
            if v[i] is None:
                v[i] = ad.add(h, layer.if_config.v_init)
            else:
                v[i] = ad.add(v[i], h)
            s = ad.spike(ad.sub(v[i], th), cfg, smooth=smooth)
            reset = ad.detach(s) if cfg.detach_reset else s
            v[i] = ad.sub(v[i], ad.mul(reset, th))
            spikes_log[i].append(ad.value(s))
            h = s
            if i == len(layers) - 1:
                head_out.append(s)
    if trace is not None:
        for i, layer in enumerate(layers):
            if layer.has_if_neurons:
                trace.append(np.stack(spikes_log[i]))
    return ad.mul(ad.sum_list(head_out), 1.0 / n_t)


def predict(spec: NetworkSpec, params, images, batch_size: int = 256):
    """Forward without recording, in chunks."""
    x = as_tensor(images)
    outs = [forward(spec, params, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(outs) if outs else np.zeros((0,) + spec.output_shape)

