"""Dense float64 tensor helpers.

Tensors are plain ``numpy.ndarray`` values in C (row-major) order. The
functions here validate shapes strictly and never mutate their inputs.
"""

import numpy as np

Tensor = np.ndarray


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(data) -> Tensor:
    return np.asarray(data, dtype=np.float64, order="C")


def zeros(shape) -> Tensor:
    return np.zeros(shape, dtype=np.float64)


def _check_same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def elementwise_add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")
    return a + b


def elementwise_mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    return a * b


def scale(a, c: float) -> Tensor:
    return as_tensor(a) * float(c)


def matmul(a, b) -> Tensor:
    """Matrix product of ``a[..., m, k]`` and ``b[k, n]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim != 2:
        raise ShapeError(f"matmul: unsupported ranks {a.ndim} and {b.ndim}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions {a.shape[-1]} and {b.shape[0]} differ")
    return a @ b


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - kernel
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: invalid stride {stride} or padding {padding}")
    if span < 0:
        raise ShapeError(f"conv2d: kernel {kernel} larger than padded extent {size + 2 * padding}")
    if span % stride:
        raise ShapeError(
            f"conv2d: (extent {size} + 2*{padding} - {kernel}) not divisible by stride {stride}"
        )
    return span // stride + 1


def im2col(x: Tensor, kh: int, kw: int, stride: int, padding: int) -> Tensor:
    """Unfold ``x[B, C, H, W]`` into columns ``[B, C*kh*kw, OH*OW]``."""
    b, c, h, w = x.shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(b, c * kh * kw, oh * ow)


def col2im(cols: Tensor, shape, kh: int, kw: int, stride: int, padding: int) -> Tensor:
    """Adjoint of :func:`im2col`: scatter-add columns back to ``shape``."""
    b, c, h, w = shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    cols = cols.reshape(b, c, kh, kw, oh, ow)
    out = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(out)


def conv2d_batch(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate a batch ``x[B, C, H, W]`` with ``kernel[F, C, kh, kw]``."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and kernel, got {x.shape}, {kernel.shape}")
    f, c, kh, kw = kernel.shape
    if x.shape[1] != c:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, kernel expects {c}")
    oh = conv_output_size(x.shape[2], kh, stride, padding)
    ow = conv_output_size(x.shape[3], kw, stride, padding)
    cols = im2col(x, kh, kw, stride, padding)
    out = kernel.reshape(f, -1) @ cols
    return out.reshape(x.shape[0], f, oh, ow)


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """Single-image convolution: ``x[C, H, W]`` -> ``[F, H', W']``."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"conv2d: expected C x H x W input, got shape {x.shape}")
    return conv2d_batch(x[None], kernel, stride, padding)[0]
