import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikecmd.numerics import (ShapeError, col2im, conv2d, conv2d_batch, elementwise_add,
                               elementwise_mul, im2col, matmul)


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for q in range(k):
                out[i, j] += a[i, q] * b[q, j]
    return out


def naive_conv(x, k, stride, pad):
    c, h, w = x.shape
    f, _, kh, kw = k.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((f, oh, ow))
    for fi in range(f):
        for i in range(oh):
            for j in range(ow):
                for ci in range(c):
                    for a in range(kh):
                        for b in range(kw):
                            out[fi, i, j] += k[fi, ci, a, b] * xp[ci, i * stride + a, j * stride + b]
    return out


def test_add_examples():
    np.testing.assert_array_equal(elementwise_add([1, 2], [3, 4]), [4, 6])
    x = np.array([0.3, -1.5, 2.0])
    np.testing.assert_array_equal(elementwise_add(x, np.zeros(3)), x)
    np.testing.assert_array_equal(elementwise_add([0.5], [-0.5]), [0.0])


def test_add_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        elementwise_add([1, 2], [1, 2, 3])
    with pytest.raises(ShapeError):
        elementwise_mul(np.ones((2, 2)), np.ones(4))


def test_matmul_examples(rng):
    m = np.array([[1.0, 2], [3, 4]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(matmul([[1, 0]], [[2], [5]]), [[2]])
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 2))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-12)


def test_matmul_rejects_inner_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 16), st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**31 - 1))
def test_matmul_matches_loop_oracle(m, k, n, seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(m, k)), r.normal(size=(k, n))
    ref = naive_matmul(a, b)
    np.testing.assert_allclose(matmul(a, b), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_conv_identity_and_sum_kernels(rng):
    x = rng.normal(size=(1, 3, 3))
    np.testing.assert_array_equal(conv2d(x, np.ones((1, 1, 1, 1))), x)
    np.testing.assert_array_equal(conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3))), [[[9.0]]])


def test_conv_matches_direct_summation(rng):
    x, k = rng.normal(size=(2, 5, 5)), rng.normal(size=(3, 2, 3, 3))
    np.testing.assert_allclose(conv2d(x, k), naive_conv(x, k, 1, 0), rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(
    st.integers(1, 3), st.integers(1, 3), st.integers(3, 9), st.integers(1, 3),
    st.integers(1, 2), st.integers(0, 1), st.integers(0, 2**31 - 1),
)
def test_conv_matches_loop_oracle(c, f, size, k, stride, pad, seed):
    if (size + 2 * pad - k) % stride:
        stride = 1
    r = np.random.default_rng(seed)
    x, kern = r.normal(size=(c, size, size)), r.normal(size=(f, c, k, k))
    ref = naive_conv(x, kern, stride, pad)
    np.testing.assert_allclose(conv2d(x, kern, stride, pad), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_conv_rejects_non_integral_output():
    with pytest.raises(ShapeError):
        conv2d(np.ones((1, 6, 6)), np.ones((1, 1, 3, 3)), stride=2)
    with pytest.raises(ShapeError):
        conv2d(np.ones((1, 2, 2)), np.ones((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        conv2d(np.ones((2, 4, 4)), np.ones((1, 1, 3, 3)))


def test_col2im_is_adjoint_of_im2col(rng):
    x = rng.normal(size=(2, 3, 7, 7))
    cols = rng.normal(size=im2col(x, 3, 3, 2, 1).shape)
    lhs = np.sum(im2col(x, 3, 3, 2, 1) * cols)
    rhs = np.sum(x * col2im(cols, x.shape, 3, 3, 2, 1))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_ops_do_not_mutate_inputs(rng):
    x, k = rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3))
    x0, k0 = x.copy(), k.copy()
    conv2d_batch(x, k, 1, 1)
    m = x[0, 0].copy()
    matmul(x[0, 0], m)
    elementwise_add(x, x)
    np.testing.assert_array_equal(x, x0)
    np.testing.assert_array_equal(k, k0)
