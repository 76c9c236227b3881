import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from veinseg.errors import ConfigError, NumericError, ShapeError
from veinseg.nn import (
    BatchNormState,
    Tensor,
    batch_norm,
    check_gradients,
    concat_channels,
    conv2d,
    dropout,
    gradient_check,
    max_pool_2x2,
    relu,
    sigmoid,
    transposed_conv2d,
)
from veinseg.nn.functional import conv2d_stride2
from veinseg.nn.tensor import Parameter, make_result


# ---------------------------------------------------------------------------
# independent oracles


def direct_conv_oracle(x, k, b=None):
    """Nested-loop 3x3 'same' correlation in float64."""
    n, c, h, w = x.shape
    c_out = k.shape[0]
    xp = np.zeros((n, c, h + 2, w + 2))
    xp[:, :, 1:-1, 1:-1] = x
    out = np.zeros((n, c_out, h, w))
    for ni in range(n):
        for o in range(c_out):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for ci in range(c):
                        for di in range(3):
                            for dj in range(3):
                                acc += xp[ni, ci, i + di, j + dj] * k[o, ci, di, dj]
                    out[ni, o, i, j] = acc + (0.0 if b is None else b[o])
    return out


def stride2_conv_matrix(c_in, c_out, h, w, k):
    """Dense matrix of the stride-2 2x2 conv mapping (c_out, 2h, 2w) -> (c_in, h, w)."""
    rows = c_in * h * w
    cols = c_out * 4 * h * w
    m = np.zeros((rows, cols))
    for c in range(c_in):
        for i in range(h):
            for j in range(w):
                r = (c * h + i) * w + j
                for o in range(c_out):
                    for a in range(2):
                        for bb in range(2):
                            col = (o * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb
                            m[r, col] = k[c, o, a, bb]
    return m


def bn_state(c, dtype=np.float64, eps=1e-5, gamma=None, beta=None):
    g = Tensor(np.ones(c) if gamma is None else gamma, requires_grad=True, dtype=dtype)
    b = Tensor(np.zeros(c) if beta is None else beta, requires_grad=True, dtype=dtype)
    return BatchNormState(g, b, np.zeros(c, dtype=dtype), np.ones(c, dtype=dtype), eps=eps)


# ---------------------------------------------------------------------------
# conv2d


def test_conv2d_zero_kernel_gives_zeros():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 5, 6)))
    out = conv2d(x, Tensor(np.zeros((4, 3, 3, 3))), Tensor(np.zeros(4)))
    assert out.shape == (2, 4, 5, 6)
    assert not out.data.any()


def test_conv2d_identity_kernel():
    x = np.random.default_rng(1).standard_normal((2, 1, 7, 5)).astype(np.float32)
    k = np.zeros((1, 1, 3, 3), np.float32)
    k[0, 0, 1, 1] = 1
    out = conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(1, np.float32)))
    np.testing.assert_array_equal(out.data, x)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 3), c=st.integers(1, 4), h=st.integers(1, 9), w=st.integers(1, 9), seed=st.integers(0, 999))
def test_conv2d_identity_kernel_property(n, c, h, w, seed):
    x = np.random.default_rng(seed).standard_normal((n, c, h, w)).astype(np.float32)
    k = np.zeros((c, c, 3, 3), np.float32)
    for i in range(c):
        k[i, i, 1, 1] = 1
    np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(k)).data, x)


def test_conv2d_ones_center_and_corners():
    x = np.ones((1, 1, 3, 3))
    k = np.ones((1, 1, 3, 3))
    expected = direct_conv_oracle(x, k)
    assert expected[0, 0, 1, 1] == 9 and expected[0, 0, 0, 0] == 4
    out = conv2d(Tensor(x), Tensor(k)).data
    np.testing.assert_array_equal(out, expected)


def test_conv2d_matches_nested_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        n, c, co, h, w = rng.integers(1, 4, size=5)
        x = rng.standard_normal((n, c, h + 2, w + 1)).astype(np.float32)
        k = rng.standard_normal((co, c, 3, 3)).astype(np.float32)
        b = rng.standard_normal(co).astype(np.float32)
        out = conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        np.testing.assert_allclose(out, direct_conv_oracle(x, k, b), atol=1e-5, rtol=1e-5)


def test_conv2d_errors():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 2, 0, 4))), Tensor(np.zeros((1, 2, 3, 3))))


# ---------------------------------------------------------------------------
# transposed conv


def test_transposed_conv_single_tap():
    v = 2.5
    k = np.array([[[[1.0, -2.0], [3.0, 0.5]]]])
    out = transposed_conv2d(Tensor(np.full((1, 1, 1, 1), v)), Tensor(k))
    np.testing.assert_array_equal(out.data[0, 0], v * k[0, 0])


def test_transposed_conv_zero_kernel():
    out = transposed_conv2d(Tensor(np.ones((2, 3, 4, 5))), Tensor(np.zeros((3, 2, 2, 2))), Tensor(np.zeros(2)))
    assert out.shape == (2, 2, 8, 10)
    assert not out.data.any()


def test_transposed_conv_equals_adjoint_matrix():
    rng = np.random.default_rng(3)
    c_in, c_out, h, w = 2, 3, 2, 2
    x = rng.standard_normal((1, c_in, h, w))
    k = rng.standard_normal((c_in, c_out, 2, 2))
    m = stride2_conv_matrix(c_in, c_out, h, w, k)
    expected = (m.T @ x.reshape(-1)).reshape(1, c_out, 2 * h, 2 * w)
    np.testing.assert_allclose(transposed_conv2d(Tensor(x), Tensor(k)).data, expected, atol=1e-12)
    # the stride-2 forward helper is the matrix itself
    y = rng.standard_normal((1, c_out, 2 * h, 2 * w))
    np.testing.assert_allclose(conv2d_stride2(y, k).reshape(-1), m @ y.reshape(-1), atol=1e-12)


def test_transposed_conv_adjoint_property_float32():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n, c_in, c_out, h, w = rng.integers(1, 5, size=5)
        x = rng.standard_normal((n, c_in, h, w)).astype(np.float32)
        y = rng.standard_normal((n, c_out, 2 * h, 2 * w)).astype(np.float32)
        k = rng.standard_normal((c_in, c_out, 2, 2)).astype(np.float32)
        lhs = float((transposed_conv2d(Tensor(x), Tensor(k)).data * y).sum())
        rhs = float((x * conv2d_stride2(y, k)).sum())
        assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs))


def test_transposed_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        transposed_conv2d(Tensor(np.zeros((1, 2, 2, 2))), Tensor(np.zeros((3, 1, 2, 2))))


# ---------------------------------------------------------------------------
# batch norm


def test_batch_norm_two_point_standardization():
    x = np.array([1.0, 3.0]).reshape(2, 1, 1, 1)
    out = batch_norm(Tensor(x), bn_state(1, eps=0.0), training=True)
    np.testing.assert_array_equal(out.data.reshape(-1), [-1.0, 1.0])


def test_batch_norm_affine():
    x = np.array([1.0, 3.0]).reshape(2, 1, 1, 1)
    out = batch_norm(Tensor(x), bn_state(1, eps=0.0, gamma=[2.0], beta=[5.0]), training=True)
    np.testing.assert_array_equal(out.data.reshape(-1), [3.0, 7.0])


def test_batch_norm_pre_affine_statistics():
    rng = np.random.default_rng(5)
    x = (rng.standard_normal((4, 3, 8, 8)) * [[[[3.0]], [[1.0]], [[7.0]]]] + 4.0).astype(np.float32)
    out = batch_norm(Tensor(x), bn_state(3, dtype=np.float32), training=True).data.astype(np.float64)
    # two-pass oracle in float64
    for c in range(3):
        v = out[:, c].reshape(-1)
        mean = v.sum() / v.size
        var = ((v - mean) ** 2).sum() / v.size
        assert abs(mean) < 1e-5
        assert abs(var - 1) < 1e-4


def test_batch_norm_running_stats_and_inference():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 2, 4, 4)) + 3.0
    state = bn_state(2)
    batch_norm(Tensor(x), state, training=True)
    mean = x.mean(axis=(0, 2, 3))
    np.testing.assert_allclose(state.running_mean, 0.1 * mean)
    assert (state.running_var >= 0).all()
    out = batch_norm(Tensor(x), state, training=False).data
    expected = (x - state.running_mean[None, :, None, None]) / np.sqrt(state.running_var + 1e-5)[None, :, None, None]
    np.testing.assert_allclose(out, expected)


def test_batch_norm_degenerate_batch():
    with pytest.raises(ShapeError):
        batch_norm(Tensor(np.ones((1, 2, 1, 1))), bn_state(2), training=True)


def test_batch_norm_state_validation():
    with pytest.raises(ConfigError):
        BatchNormState.create(2, momentum=1.0)
    with pytest.raises(ConfigError):
        BatchNormState.create(2, eps=-1.0)


# ---------------------------------------------------------------------------
# pointwise / structural


def test_relu_and_sigmoid_values():
    np.testing.assert_array_equal(relu(Tensor(np.array([-2.0, 3.0]).reshape(1, 1, 1, 2))).data.reshape(-1), [0, 3])
    assert sigmoid(Tensor(np.zeros((1, 1, 1, 1)))).data.item() == 0.5
    big = sigmoid(Tensor(np.array([-800.0, 800.0]).reshape(1, 1, 1, 2))).data
    assert np.isfinite(big).all()


def test_dropout_rate_zero_is_identity():
    x = Tensor(np.random.default_rng(7).standard_normal((2, 3, 4, 4)))
    rng = np.random.default_rng(0)
    assert dropout(x, 0.0, rng, training=True) is x
    assert dropout(x, 0.0, rng, training=False) is x
    assert dropout(x, 0.3, rng, training=False) is x


def test_dropout_statistics():
    rate = 0.05
    n = 10 ** 6
    x = Tensor(np.ones((1, 1, 1000, 1000), np.float32))
    out = dropout(x, rate, np.random.default_rng(8), training=True).data
    frac = np.mean(out == 0)
    sigma = np.sqrt(rate * (1 - rate) / n)
    assert abs(frac - rate) < 3 * sigma
    # survivors scaled by 1/(1-rate): mean stays ~1
    assert abs(out.mean() - 1.0) < 3 * np.sqrt(rate / (1 - rate) / n)
    np.testing.assert_allclose(out[out != 0], 1 / (1 - rate), rtol=1e-6)


def test_dropout_needs_rng_and_valid_rate():
    x = Tensor(np.ones((1, 1, 2, 2)))
    with pytest.raises(ConfigError):
        dropout(x, 0.5, None, training=True)
    with pytest.raises(ConfigError):
        dropout(x, 1.0, np.random.default_rng(0), training=True)


def test_max_pool_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(10):
        n, c, h2, w2 = rng.integers(1, 4, size=4)
        x = rng.standard_normal((n, c, 2 * h2, 2 * w2))
        out = max_pool_2x2(Tensor(x)).data
        assert out.shape == (n, c, h2, w2)
        for idx in np.ndindex(out.shape):
            a, b, i, j = idx
            assert out[idx] == max(x[a, b, 2 * i + di, 2 * j + dj] for di in range(2) for dj in range(2))


def test_max_pool_odd_dims():
    with pytest.raises(ShapeError):
        max_pool_2x2(Tensor(np.zeros((1, 1, 3, 4))))


def test_concat_channels():
    a = Tensor(np.zeros((2, 1, 3, 3)))
    b = Tensor(np.ones((2, 2, 3, 3)))
    out = concat_channels(a, b)
    assert out.shape == (2, 3, 3, 3)
    with pytest.raises(ShapeError):
        concat_channels(a, Tensor(np.ones((2, 2, 4, 3))))


def test_non_finite_is_an_error():
    with pytest.raises(NumericError):
        conv2d(Tensor(np.full((1, 1, 2, 2), np.nan)), Tensor(np.ones((1, 1, 3, 3))))


# ---------------------------------------------------------------------------
# gradient checks


def test_gradcheck_linear_identity():
    err = gradient_check(lambda x: make_result(x.data.copy(), (x,), lambda g: (g,), "identity"), [(2, 3, 4, 4)])
    assert err < 1e-10


GRAD_CASES = {
    "conv2d": (lambda x, k, b: conv2d(x, k, b), [(1, 2, 5, 5), (3, 2, 3, 3), (3,)]),
    "conv2d_full": (lambda x, k, b: conv2d(x, k, b), [(2, 4, 8, 8), (3, 4, 3, 3), (3,)]),
    "transposed_conv2d": (lambda x, k, b: transposed_conv2d(x, k, b), [(2, 4, 4, 4), (4, 3, 2, 2), (3,)]),
    "batch_norm": (
        lambda x, g, b: batch_norm(x, BatchNormState(g, b, np.zeros(3, x.dtype), np.ones(3, x.dtype)), True),
        [(4, 3, 4, 4), (3,), (3,)],
    ),
    "batch_norm_inference": (
        lambda x, g, b: batch_norm(
            x, BatchNormState(g, b, np.full(3, 0.3, x.dtype), np.full(3, 2.0, x.dtype)), False),
        [(2, 3, 4, 4), (3,), (3,)],
    ),
    "sigmoid": (sigmoid, [(2, 4, 8, 8)]),
    "relu": (relu, [(2, 4, 8, 8)]),
    "max_pool_2x2": (max_pool_2x2, [(2, 4, 8, 8)]),
    "concat_channels": (concat_channels, [(2, 2, 8, 8), (2, 2, 8, 8)]),
    "dropout": (lambda x: dropout(x, 0.3, np.random.default_rng(1), True), [(2, 2, 4, 4)]),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradcheck_float64(name):
    op, shapes = GRAD_CASES[name]
    assert gradient_check(op, shapes, seed=11) < 1e-6


@pytest.mark.parametrize("name", ["conv2d", "transposed_conv2d", "batch_norm", "sigmoid", "relu", "max_pool_2x2",
                                  "concat_channels"])
def test_gradcheck_float32(name):
    op, shapes = GRAD_CASES[name]
    rng = np.random.default_rng(12)
    inputs = [Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
    probe = op(*inputs)
    w = rng.standard_normal(probe.shape)

    def build():
        out = op(*inputs)
        ww = w.astype(out.dtype)
        return make_result(np.asarray((out.data * ww).sum(), out.dtype), (out,), lambda g: (g * ww,), "project")

    errs = check_gradients(build, inputs, analytic_dtype=np.float32)
    assert max(e.max() for e in errs) < 1e-3


def test_parameter_flags():
    p = Parameter("w", np.zeros(3), weight_decayed=True)
    assert p.requires_grad and p.trainable and p.weight_decayed
    p.set_trainable(False)
    assert not p.requires_grad
