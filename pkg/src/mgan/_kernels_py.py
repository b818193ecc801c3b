"""Pure-NumPy im2col / col2im, used when the compiled extension is missing."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride, padding):
    N, C, H, W = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    # (N, C, Ho, Wo, kh, kw) -> (N, C, kh, kw, Ho, Wo)
    win = win.transpose(0, 1, 4, 5, 2, 3)
    return np.ascontiguousarray(win).reshape(N, C * kh * kw, Ho * Wo)


def col2im(cols, shape, kh, kw, stride, padding):
    N, C, H, W = shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    cols = cols.reshape(N, C, kh, kw, Ho, Wo)
    out = np.zeros((N, C, H + 2 * padding, W + 2 * padding), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding:padding + H, padding:padding + W]
    return np.ascontiguousarray(out)
