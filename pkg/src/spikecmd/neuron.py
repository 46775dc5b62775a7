"""Integrate-and-fire dynamics with subtractive reset (no leak, no refractory)."""

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, Tensor, as_tensor, conv2d_batch, matmul


@dataclass(frozen=True)
class IFConfig:
    v_threshold: float = 1.0
    v_init: float = 0.0

    def __post_init__(self):
        if not self.v_threshold > 0:
            raise ValueError(f"v_threshold must be positive, got {self.v_threshold}")


@dataclass(frozen=True)
class NeuronState:
    v_mem: Tensor

    @classmethod
    def initial(cls, shape, cfg: IFConfig) -> "NeuronState":
        return cls(np.full(shape, cfg.v_init, dtype=np.float64))


def heaviside(x) -> Tensor:
    """Step function with H(0) = 1."""
    return (as_tensor(x) >= 0).astype(np.float64)


def if_step(state: NeuronState, input_current, cfg: IFConfig):
    """Advance one time step.

    Integrates the current, fires where the potential reached threshold and
    subtracts the threshold from the neurons that fired. Returns
    ``(spikes, new_state)``.
    """
    current = as_tensor(input_current)
    if current.shape != state.v_mem.shape:
        raise ShapeError(f"if_step: state {state.v_mem.shape} vs current {current.shape}")
    v_pre = state.v_mem + current
    spikes = heaviside(v_pre - cfg.v_threshold)
    return spikes, NeuronState(v_pre - cfg.v_threshold * spikes)


def synaptic_current(spikes_in, weights, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """Affine drive from presynaptic spikes.

    A 2-d ``weights[in, out]`` gives a dense map over the last axis of
    ``spikes_in``; a 4-d ``weights[F, C, kh, kw]`` gives a convolution over
    ``spikes_in[..., C, H, W]``.
    """
    s = as_tensor(spikes_in)
    w = as_tensor(weights)
    b = as_tensor(bias)
    if w.ndim == 2:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"synaptic_current: bias {b.shape} does not match {w.shape[1]} outputs")
        return matmul(s, w) + b
    if w.ndim == 4:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"synaptic_current: bias {b.shape} does not match {w.shape[0]} filters")
        lead = s.shape[:-3]
        flat = s.reshape((-1,) + s.shape[-3:])
        out = conv2d_batch(flat, w, stride, padding) + b[:, None, None]
        return out.reshape(lead + out.shape[1:])
    raise ShapeError(f"synaptic_current: weights must be 2-d or 4-d, got {w.shape}")


def run_layer(spike_train_in, weights, bias, cfg: IFConfig, stride: int = 1, padding: int = 0) -> Tensor:
    """Drive an IF layer with a ``[T, ...]`` spike train; state starts fresh."""
    train = as_tensor(spike_train_in)
    if train.ndim < 2 or train.shape[0] < 1:
        raise ShapeError("run_layer: input needs a leading time axis of length >= 1")
    state = None
    out = []
    for x_t in train:
        current = synaptic_current(x_t, weights, bias, stride, padding)
        if state is None:
            state = NeuronState.initial(current.shape, cfg)
        spikes, state = if_step(state, current, cfg)
        out.append(spikes)
    return np.stack(out)


def constant_drive(current: float, time_steps: int, cfg: IFConfig):
    """Simulate one neuron under constant drive; returns ``(spike_train, v_final)``."""
    state = NeuronState.initial((), cfg)
    spikes = np.empty(time_steps)
    for t in range(time_steps):
        s, state = if_step(state, np.float64(current), cfg)
        spikes[t] = s
    return spikes, float(state.v_mem)
