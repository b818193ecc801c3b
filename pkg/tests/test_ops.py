import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgan import ops
from mgan.autograd import Tensor, set_debug

from oracles import conv2d_loops, gradcheck, param, region_pool_loops

F64 = np.float64


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=F64), requires_grad=grad)


# --- conv2d -----------------------------------------------------------------

def test_conv_scalar_product():
    out = ops.conv2d(T([[[[2.0]]]]), T([[[[3.0]]]]), T([0.0]))
    assert out.data.reshape(-1).tolist() == [6.0]


def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 3, 5, 4))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out = ops.conv2d(T(x), T(w), T(np.zeros(3)), padding=1)
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("stride,padding", [(1, 1), (1, 0), (2, 1), (1, 2)])
def test_conv_matches_loop_oracle(stride, padding):
    rng = np.random.default_rng(stride * 10 + padding)
    x = rng.standard_normal((1, 2, 4, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = ops.conv2d(T(x), T(w), T(b), stride=stride, padding=padding)
    np.testing.assert_allclose(out.data, conv2d_loops(x, w, b, stride, padding), atol=1e-6)


def test_conv_float32_matches_oracle():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal(3).astype(np.float32)
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out.data, conv2d_loops(x, w, b, 1, 1), atol=1e-5)


def test_conv_rejects_bad_shapes():
    x = T(np.zeros((1, 2, 4, 4)))
    with pytest.raises(ValueError, match="channel mismatch"):
        ops.conv2d(x, T(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ValueError, match="odd"):
        ops.conv2d(x, T(np.zeros((1, 2, 2, 2))))
    with pytest.raises(ValueError, match="non-positive"):
        ops.conv2d(x, T(np.zeros((1, 2, 5, 5))))


def test_conv_deterministic():
    rng = np.random.default_rng(9)
    x = param(rng, 2, 4, 6, 6)
    w = param(rng, 3, 4, 5, 5)
    outs = []
    for _ in range(2):
        x.grad = w.grad = None
        y = ops.conv2d(x, w, padding=2)
        y.backward(np.ones(y.shape))
        outs.append((y.data.tobytes(), x.grad.tobytes(), w.grad.tobytes()))
    assert outs[0] == outs[1]


@pytest.mark.parametrize("k,stride,padding", [(3, 1, 1), (5, 1, 2), (1, 1, 0), (3, 2, 1)])
def test_conv_gradients(k, stride, padding):
    rng = np.random.default_rng(k + stride)
    x, w, b = param(rng, 2, 4, 6, 6), param(rng, 3, 4, k, k), param(rng, 3)
    err = gradcheck(lambda t: ops.conv2d(t[0], t[1], t[2], stride=stride, padding=padding), [x, w, b])
    assert err <= 1e-4


# --- activations ------------------------------------------------------------

def test_relu_values():
    assert ops.relu(T([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]


def test_sigmoid_value_and_grad():
    x = T([0.0], grad=True)
    y = ops.sigmoid(x)
    assert y.data.tolist() == [0.5]
    y.backward()
    assert x.grad.tolist() == [0.25]


@pytest.mark.parametrize("kind", ["relu", "sigmoid"])
def test_activation_gradients(kind):
    rng = np.random.default_rng(4)
    x = param(rng, 2, 3, 4, 5)
    assert gradcheck(lambda t: ops.activation(t[0], kind), [x]) <= 1e-4


def test_activation_unknown():
    with pytest.raises(ValueError):
        ops.activation(T([1.0]), "tanh")


# --- pooling ----------------------------------------------------------------

def test_global_pool_values():
    assert ops.global_avg_pool(T(np.full((1, 1, 3, 5), 1.75))).data.item() == 1.75
    assert ops.global_avg_pool(T(np.arange(1.0, 5.0).reshape(1, 1, 2, 2))).data.item() == 2.5


def test_global_pool_loop_oracle():
    x = np.random.default_rng(5).standard_normal((2, 3, 5, 7))
    expect = np.zeros((2, 3, 1, 1))
    for n in range(2):
        for c in range(3):
            expect[n, c] = sum(x[n, c, i, j] for i in range(5) for j in range(7)) / 35
    np.testing.assert_allclose(ops.global_avg_pool(T(x)).data, expect, atol=1e-7)


def test_region_pool_quadrants():
    x = np.zeros((1, 1, 4, 4))
    x[0, 0, :2, :2], x[0, 0, :2, 2:], x[0, 0, 2:, :2], x[0, 0, 2:, 2:] = 1, 2, 3, 4
    assert ops.region_avg_pool(T(x), 2).data.reshape(-1).tolist() == [1, 2, 3, 4]


def test_region_pool_uneven_partition():
    x = np.random.default_rng(6).standard_normal((1, 1, 5, 5))
    assert ops.region_bounds(5, 2).tolist() == [0, 2]
    out = ops.region_avg_pool(T(x), 2).data
    assert out[0, 0, 0, 0] == pytest.approx(x[0, 0, 0:2, 0:2].mean())
    assert out[0, 0, 1, 1] == pytest.approx(x[0, 0, 2:5, 2:5].mean())
    np.testing.assert_allclose(out, region_pool_loops(x, 2), atol=1e-12)


@pytest.mark.parametrize("S", [1, 2, 3, 4])
def test_region_pool_loop_oracle(S):
    x = np.random.default_rng(S).standard_normal((2, 3, 7, 9))
    np.testing.assert_allclose(ops.region_avg_pool(T(x), S).data, region_pool_loops(x, S), atol=1e-12)


def test_region_pool_rejects_large_grid():
    with pytest.raises(ValueError, match="exceeds"):
        ops.region_avg_pool(T(np.zeros((1, 1, 3, 5))), 4)


@pytest.mark.parametrize("S", [1, 2, 3, (6, 6)])
def test_region_pool_gradients(S):
    rng = np.random.default_rng(7)
    x = param(rng, 2, 4, 6, 6)
    assert gradcheck(lambda t: ops.region_avg_pool(t[0], S), [x]) <= 1e-4


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), s=st.integers(1, 9), seed=st.integers(0, 2 ** 16))
def test_region_pool_properties(h, w, s, seed):
    x = np.random.default_rng(seed).standard_normal((1, 2, h, w))
    xt = T(x)
    np.testing.assert_array_equal(ops.region_avg_pool(xt, 1).data, ops.global_avg_pool(xt).data)
    if h == w:
        np.testing.assert_array_equal(ops.region_avg_pool(xt, h).data, x)
    if s <= min(h, w):
        # area-weighted mean of the cells is the global mean
        pooled = ops.region_avg_pool(xt, s).data
        ch = np.diff(np.append(ops.region_bounds(h, s), h))
        cw = np.diff(np.append(ops.region_bounds(w, s), w))
        weighted = (pooled * np.outer(ch, cw)).sum(axis=(2, 3)) / (h * w)
        np.testing.assert_allclose(weighted, x.mean(axis=(2, 3)), atol=1e-12)


# --- scale_regions ------------------------------------------------------------

def test_scale_regions_identity_and_zero():
    x = np.random.default_rng(8).standard_normal((2, 3, 6, 5))
    np.testing.assert_array_equal(ops.scale_regions(T(x), T(np.ones((2, 3, 2, 2)))).data, x)
    assert not ops.scale_regions(T(x), T(np.zeros((2, 3, 3, 3)))).data.any()


def test_scale_regions_channel_oracle():
    rng = np.random.default_rng(9)
    x, a = rng.standard_normal((2, 4, 5, 5)), rng.random((2, 4, 1, 1))
    expect = np.empty_like(x)
    for n in range(2):
        for k in range(4):
            expect[n, k] = a[n, k, 0, 0] * x[n, k]
    np.testing.assert_array_equal(ops.scale_regions(T(x), T(a)).data, expect)


def test_scale_regions_partition_matches_pool():
    rng = np.random.default_rng(10)
    x, a = rng.standard_normal((1, 1, 5, 7)), rng.random((1, 1, 2, 3))
    out = ops.scale_regions(T(x), T(a)).data
    for i in range(5):
        for j in range(7):
            ai = 0 if i < 2 else 1
            aj = 0 if j < 2 else (1 if j < 4 else 2)
            assert out[0, 0, i, j] == x[0, 0, i, j] * a[0, 0, ai, aj]


def test_scale_regions_rejects_mismatch():
    with pytest.raises(ValueError):
        ops.scale_regions(T(np.zeros((1, 2, 3, 3))), T(np.zeros((1, 2, 4, 4))))
    with pytest.raises(ValueError):
        ops.scale_regions(T(np.zeros((1, 2, 3, 3))), T(np.zeros((1, 3, 1, 1))))


@pytest.mark.parametrize("S", [1, 2, 4, 6])
def test_scale_regions_gradients(S):
    rng = np.random.default_rng(11)
    x, a = param(rng, 2, 4, 6, 6), param(rng, 2, 4, S, S)
    assert gradcheck(lambda t: ops.scale_regions(t[0], t[1]), [x, a]) <= 1e-4


# --- concat / pixel shuffle -------------------------------------------------

def test_concat_layout_and_backward():
    rng = np.random.default_rng(12)
    a, b = param(rng, 2, 2, 3, 3), param(rng, 2, 3, 3, 3)
    assert ops.concat_channels([a]) is a
    out = ops.concat_channels([a, b])
    assert out.shape == (2, 5, 3, 3)
    np.testing.assert_array_equal(out.data[:, :2], a.data)
    g = rng.standard_normal(out.shape)
    out.backward(g)
    np.testing.assert_array_equal(a.grad, g[:, :2])
    np.testing.assert_array_equal(b.grad, g[:, 2:])
    assert gradcheck(lambda t: ops.concat_channels(t), [a, b]) <= 1e-4


def test_concat_rejects_spatial_mismatch():
    with pytest.raises(ValueError):
        ops.concat_channels([T(np.zeros((1, 1, 3, 3))), T(np.zeros((1, 1, 3, 4)))])


def test_pixel_shuffle_layout():
    x = T(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1))
    assert ops.pixel_shuffle(x, 2).data.reshape(2, 2).tolist() == [[1, 2], [3, 4]]
    y = np.random.default_rng(0).standard_normal((1, 3, 2, 2))
    np.testing.assert_array_equal(ops.pixel_shuffle(T(y), 1).data, y)


def test_pixel_shuffle_index_map():
    r, C, H, W = 3, 2, 2, 3
    x = np.random.default_rng(1).standard_normal((1, C * r * r, H, W))
    out = ops.pixel_shuffle(T(x), r).data
    for c in range(C):
        for h in range(H):
            for w in range(W):
                for i in range(r):
                    for j in range(r):
                        assert out[0, c, r * h + i, r * w + j] == x[0, c * r * r + i * r + j, h, w]


@pytest.mark.parametrize("r", [1, 2, 3])
def test_pixel_shuffle_round_trip_and_grad(r):
    rng = np.random.default_rng(r)
    x = param(rng, 2, 4 * r * r, 3, 2)
    np.testing.assert_array_equal(ops.space_to_depth(ops.pixel_shuffle(x, r), r).data, x.data)
    assert gradcheck(lambda t: ops.pixel_shuffle(t[0], r), [x]) <= 1e-4


def test_pixel_shuffle_rejects_indivisible():
    with pytest.raises(ValueError):
        ops.pixel_shuffle(T(np.zeros((1, 6, 2, 2))), 2)


# --- backward / graph ----------------------------------------------------------

def test_backward_linear():
    rng = np.random.default_rng(13)
    x = T(rng.standard_normal(5))
    w = T(rng.standard_normal(5), grad=True)
    (w * x).sum().backward()
    np.testing.assert_array_equal(w.grad, x.data)


def test_backward_rejects_nonscalar():
    w = T(np.ones((2, 2)), grad=True)
    with pytest.raises(ValueError, match="scalar"):
        (w * 2.0).backward()


def test_parameter_used_twice():
    rng = np.random.default_rng(14)
    x = param(rng, 1, 2, 5, 5)
    w = param(rng, 2, 2, 3, 3)

    def f(t):
        h = ops.relu(ops.conv2d(t[0], t[1], padding=1))
        return ops.conv2d(h, t[1], padding=1) + t[0]

    assert gradcheck(f, [x, w]) <= 1e-4


def test_l1_loss_values_and_grad():
    a = np.random.default_rng(15).random((2, 3, 4, 4))
    assert ops.l1_loss(T(a), T(a)).item() == 0.0
    assert ops.l1_loss(T(a + 0.5), T(a)).item() == pytest.approx(0.5)
    rng = np.random.default_rng(16)
    p, t = param(rng, 2, 3, 4, 4), T(rng.standard_normal((2, 3, 4, 4)))
    loss = ops.l1_loss(p, t)
    loss.backward()
    np.testing.assert_allclose(p.grad, np.sign(p.data - t.data) / p.size)
    assert gradcheck(lambda z: ops.l1_loss(z[0], t), [p]) <= 1e-4


def test_l1_loss_zero_subgradient():
    p = T(np.ones((1, 1, 2, 2)), grad=True)
    ops.l1_loss(p, T(np.ones((1, 1, 2, 2)))).backward()
    assert not p.grad.any()


def test_l1_loss_shape_mismatch():
    with pytest.raises(ValueError):
        ops.l1_loss(T(np.zeros(3)), T(np.zeros(4)))


def test_debug_mode_catches_nonfinite():
    set_debug(True)
    try:
        with pytest.raises(FloatingPointError):
            T([1.0], grad=True) * np.inf
    finally:
        set_debug(False)
