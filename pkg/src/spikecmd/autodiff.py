"""Reverse-mode differentiation over a recorded tape.

Every op accepts either :class:`Var` or plain arrays. When no operand is a
``Var`` the op simply computes with numpy, so the same forward code runs with
or without gradient recording and produces identical values.

The spike nonlinearity is a Heaviside step in the forward pass whose backward
rule is the derivative of the arctangent surrogate
``g(x) = atan(pi/2 * alpha * x) / pi + 1/2``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .neuron import heaviside
from .numerics import ShapeError, as_tensor, col2im, conv_output_size, im2col


@dataclass(frozen=True)
class SurrogateConfig:
    alpha: float = 2.0
    detach_reset: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def surrogate_value(x, cfg: SurrogateConfig):
    return np.arctan(0.5 * math.pi * cfg.alpha * np.asarray(x, dtype=np.float64)) / math.pi + 0.5


def surrogate_grad(x, cfg: SurrogateConfig):
    z = 0.5 * math.pi * cfg.alpha * np.asarray(x, dtype=np.float64)
    return cfg.alpha / (2.0 * (1.0 + z * z))


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value, tape, index):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


class Tape:
    """Ordered record of operations; one tape per forward/backward pass."""

    def __init__(self):
        self._parents = []
        self._backward = []
        self._values = []
        self.params = {}

    def __len__(self):
        return len(self._values)

    def _push(self, value, parents=(), backward=None) -> Var:
        var = Var(value, self, len(self._values))
        self._values.append(value)
        # indices only: the tape must not reference its Vars (no cycles)
        self._parents.append(tuple(p.index if isinstance(p, Var) else None for p in parents))
        self._backward.append(backward)
        return var

    def variable(self, value) -> Var:
        return self._push(as_tensor(value))

    def watch(self, name: str, value) -> Var:
        """Register a named parameter leaf."""
        var = self.variable(value)
        self.params[name] = var.index
        return var

    def record(self, value, parents, backward) -> Var:
        """Record ``value`` computed from ``parents``.

        ``backward(upstream)`` must return one gradient (or ``None``) per
        parent, in order.
        """
        return self._push(value, parents, backward)

    def backward(self, loss: Var):
        """Reverse sweep from a scalar ``loss``; returns ``{index: grad}``."""
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ValueError("backward: loss must be a Var recorded on this tape")
        if loss.value.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.value.shape}")
        grads = {loss.index: np.ones_like(loss.value)}
        for i in range(loss.index, -1, -1):
            g = grads.get(i)
            if g is None or self._backward[i] is None:
                continue
            parent_grads = self._backward[i](g)
            for parent, pg in zip(self._parents[i], parent_grads):
                if pg is None or parent is None:
                    continue
                if parent in grads:
                    grads[parent] = grads[parent] + pg
                else:
                    grads[parent] = pg
        return grads

    def gradients(self, loss: Var):
        """Gradients of ``loss`` for every watched parameter (zeros if disconnected)."""
        grads = self.backward(loss)
        return {
            name: grads.get(i, np.zeros_like(self._values[i])) for name, i in self.params.items()
        }

    def grad_of(self, loss: Var, var: Var):
        return self.backward(loss).get(var.index, np.zeros_like(var.value))

    def param_var(self, name: str) -> Var:
        i = self.params[name]
        return Var(self._values[i], self, i)


def value(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _shape(x):
    return np.shape(value(x))


def add(a, b):
    out = np.add(value(a), value(b))
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = _shape(a), _shape(b)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    out = np.subtract(value(a), value(b))
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = _shape(a), _shape(b)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    va, vb = value(a), value(b)
    out = np.multiply(va, vb)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(
        out, (a, b), lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb))
    )


def square(a):
    va = value(a)
    out = va * va
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (2.0 * va * g,))


def total(a):
    """Sum of all entries, as a 0-d value."""
    va = value(a)
    out = np.asarray(va.sum())
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (np.broadcast_to(g, va.shape).copy(),))


def mean(a):
    va = value(a)
    n = va.size
    out = np.asarray(va.sum() / n)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (np.full(va.shape, float(g) / n),))


def reshape(a, shape):
    va = value(a)
    out = va.reshape(shape)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g.reshape(va.shape),))


def sum_list(xs):
    """Sum a sequence of same-shape values with a single tape node."""
    vals = [value(x) for x in xs]
    out = vals[0].copy()
    for v in vals[1:]:
        out = out + v
    tape = _tape_of(*xs)
    if tape is None:
        return out
    n = len(xs)
    return tape.record(out, tuple(xs), lambda g: (g,) * n)


def linear(x, weight, bias=None):
    """``x[..., in] @ weight[in, out] + bias[out]``."""
    vx, vw = value(x), value(weight)
    if vx.shape[-1] != vw.shape[0]:
        raise ShapeError(f"linear: input width {vx.shape[-1]} vs weight {vw.shape}")
    out = vx @ vw
    if bias is not None:
        out = out + value(bias)
    tape = _tape_of(x, weight, bias)
    if tape is None:
        return out
    has_bias = bias is not None

    def backward(g):
        gx = g @ vw.T
        gw = vx.reshape(-1, vx.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if has_bias else None
        return gx, gw, gb

    return tape.record(out, (x, weight, bias), backward)


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0):
    """Batched cross-correlation ``x[B, C, H, W]`` with ``kernel[F, C, kh, kw]``."""
    vx, vk = value(x), value(kernel)
    if vx.ndim != 4 or vk.ndim != 4 or vx.shape[1] != vk.shape[1]:
        raise ShapeError(f"conv2d: incompatible input {vx.shape} and kernel {vk.shape}")
    bsz = vx.shape[0]
    f, c, kh, kw = vk.shape
    oh = conv_output_size(vx.shape[2], kh, stride, padding)
    ow = conv_output_size(vx.shape[3], kw, stride, padding)
    cols = im2col(vx, kh, kw, stride, padding)
    kmat = vk.reshape(f, -1)
    out = (kmat @ cols).reshape(bsz, f, oh, ow)
    if bias is not None:
        out = out + value(bias)[:, None, None]
    tape = _tape_of(x, kernel, bias)
    if tape is None:
        return out
    has_bias = bias is not None
    need_gx = isinstance(x, Var)

    def backward(g):
        gm = g.reshape(bsz, f, oh * ow)
        gk = np.tensordot(gm, cols, axes=([0, 2], [0, 2])).reshape(vk.shape)
        gx = None
        if need_gx:
            gx = col2im(kmat.T @ gm, vx.shape, kh, kw, stride, padding)
        gb = g.sum(axis=(0, 2, 3)) if has_bias else None
        return gx, gk, gb

    return tape.record(out, (x, kernel, bias), backward)


def spike(v_minus_th, cfg: SurrogateConfig, smooth: bool = False):
    """Spike nonlinearity.

    Forward is the exact Heaviside step; the recorded backward multiplies the
    upstream gradient by ``surrogate_grad``. With ``smooth=True`` the forward
    value is ``surrogate_value`` instead, which makes the recorded graph the
    exact derivative of a smooth network (used for gradient checking).
    """
    vx = value(v_minus_th)
    out = surrogate_value(vx, cfg) if smooth else heaviside(vx)
    tape = _tape_of(v_minus_th)
    if tape is None:
        return out
    return tape.record(out, (v_minus_th,), lambda g: (g * surrogate_grad(vx, cfg),))


def detach(x):
    """Value of ``x`` with no gradient path."""
    return value(x)


def mse(pred, target):
    """Mean squared error against a constant target."""
    vp = value(pred)
    t = as_tensor(target)
    if vp.shape != t.shape:
        raise ShapeError(f"mse: prediction {vp.shape} vs target {t.shape}")
    diff = vp - t
    out = np.asarray(np.mean(diff * diff))
    tape = _tape_of(pred)
    if tape is None:
        return out
    return tape.record(out, (pred,), lambda g: (g * 2.0 * diff / diff.size,))


def custom(x, fn):
    """Record ``fn(value) -> (out, grad_fn)`` as one node with a hand-written gradient."""
    out, grad_fn = fn(value(x))
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (grad_fn(g),))
