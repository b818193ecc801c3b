import numpy as np
import pytest

from mgan import _kernels_py, kernels, ops
from mgan.autograd import Tensor

from oracles import conv2d_loops

compiled = pytest.importorskip("mgan._kernels", reason="compiled extension not built")

CASES = [
    ((2, 3, 7, 9), 3, 1, 1),
    ((2, 3, 7, 9), 5, 1, 2),
    ((1, 2, 6, 6), 3, 2, 1),
    ((1, 4, 5, 5), 1, 1, 0),
    ((1, 1, 3, 2), 3, 2, 3),
    ((1, 2, 1, 1), 5, 1, 2),
]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("shape,k,stride,padding", CASES)
def test_backends_agree(shape, k, stride, padding, dtype):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape).astype(dtype)
    a = compiled.im2col(x, k, k, stride, padding)
    b = _kernels_py.im2col(x, k, k, stride, padding)
    np.testing.assert_array_equal(a, b)
    g = rng.standard_normal(a.shape).astype(dtype)
    np.testing.assert_allclose(compiled.col2im(g, shape, k, k, stride, padding),
                               _kernels_py.col2im(g, shape, k, k, stride, padding), rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("shape,k,stride,padding", CASES)
def test_col2im_is_adjoint(shape, k, stride, padding):
    # <im2col(x), c> == <x, col2im(c)>
    rng = np.random.default_rng(1)
    x = rng.standard_normal(shape)
    cols = compiled.im2col(x, k, k, stride, padding)
    c = rng.standard_normal(cols.shape)
    back = compiled.col2im(c, shape, k, k, stride, padding)
    assert np.sum(cols * c) == pytest.approx(np.sum(x * back), rel=1e-12, abs=1e-12)


def test_fallback_conv_matches_oracle(monkeypatch):
    monkeypatch.setattr(kernels, "im2col", _kernels_py.im2col)
    monkeypatch.setattr(kernels, "col2im", _kernels_py.col2im)
    rng = np.random.default_rng(2)
    x, w, b = rng.standard_normal((1, 2, 4, 4)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1)
    np.testing.assert_allclose(out.data, conv2d_loops(x, w, b, 1, 1), atol=1e-6)


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
