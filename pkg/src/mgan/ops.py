"""Differentiable primitives used by the network graph."""
from __future__ import annotations

import numpy as np

from . import kernels
from .autograd import Tensor


def _check4(x, name):
    if x.data.ndim != 4:
        raise ValueError(f"{name} expects an NCHW tensor, got shape {x.shape}")


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation lowered to a batched GEMM over im2col columns."""
    _check4(x, "conv2d input")
    if weight.data.ndim != 4:
        raise ValueError(f"conv2d weight must be [Cout, Cin, kh, kw], got {weight.shape}")
    N, C, H, W = x.shape
    Cout, Cin, kh, kw = weight.shape
    if Cin != C:
        raise ValueError(f"conv2d channel mismatch: input has {C} channels, weight expects {Cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if padding < 0 or stride < 1:
        raise ValueError(f"conv2d needs padding >= 0 and stride >= 1 (got {padding}, {stride})")
    if bias is not None and bias.shape != (Cout,):
        raise ValueError(f"conv2d bias must have shape ({Cout},), got {bias.shape}")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise ValueError(f"conv2d output extent non-positive ({Ho}x{Wo}) for input {H}x{W}")

    cols = kernels.im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(Cout, -1)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(N, Cout, Ho, Wo)

    def backward(g):
        g2 = g.reshape(N, Cout, Ho * Wo)
        gx = None
        if x.requires_grad:
            gx = kernels.col2im(np.matmul(wmat.T, g2), (N, C, H, W), kh, kw, stride, padding)
        gw = None
        if weight.requires_grad:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=(0, 2))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward, "conv2d")


def relu(x):
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x):
    y = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor._from_op(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def activation(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def region_bounds(extent, s):
    """Start offsets of ``s`` near-equal regions covering ``range(extent)``."""
    return np.array([(a * extent) // s for a in range(s)], dtype=np.intp)


def _grid(S):
    if isinstance(S, (tuple, list)):
        sh, sw = int(S[0]), int(S[1])
    else:
        sh = sw = int(S)
    return sh, sw


def _region_layout(H, W, S):
    sh, sw = _grid(S)
    if sh < 1 or sw < 1:
        raise ValueError(f"region grid must be >= 1, got {S}")
    if sh > H or sw > W:
        raise ValueError(f"region grid {sh}x{sw} exceeds feature map {H}x{W}")
    rh, rw = region_bounds(H, sh), region_bounds(W, sw)
    ch = np.diff(np.append(rh, H))
    cw = np.diff(np.append(rw, W))
    return rh, rw, ch, cw


def _region_sum(a, rh, rw):
    return np.add.reduceat(np.add.reduceat(a, rh, axis=2), rw, axis=3)


def _expand(a, ch, cw):
    return np.repeat(np.repeat(a, ch, axis=2), cw, axis=3)


def region_avg_pool(x, S):
    """Mean over each cell of an S x S near-equal partition of the spatial grid.

    Region ``(a, b)`` spans rows ``[a*H//S, (a+1)*H//S)`` and the analogous
    columns.  ``S`` may also be an ``(Sh, Sw)`` pair.
    """
    _check4(x, "region_avg_pool input")
    H, W = x.shape[2:]
    rh, rw, ch, cw = _region_layout(H, W, S)
    area = np.outer(ch, cw).astype(x.dtype)
    out = _region_sum(x.data, rh, rw) / area

    def backward(g):
        return (_expand(g / area, ch, cw),)

    return Tensor._from_op(out, (x,), backward, "region_avg_pool")


def global_avg_pool(x):
    """Per-channel spatial mean, shape [N, C, 1, 1]."""
    return region_avg_pool(x, 1)


def scale_regions(x, alpha):
    """Multiply every pixel of region (a, b) in channel k by ``alpha[n, k, a, b]``."""
    _check4(x, "scale_regions input")
    _check4(alpha, "scale_regions alpha")
    N, C, H, W = x.shape
    if alpha.shape[:2] != (N, C):
        raise ValueError(f"scale_regions alpha {alpha.shape} does not match input {x.shape}")
    sh, sw = alpha.shape[2:]
    try:
        rh, rw, ch, cw = _region_layout(H, W, (sh, sw))
    except ValueError as exc:
        raise ValueError(f"scale_regions: {exc}") from None
    xd = x.data
    full = _expand(alpha.data, ch, cw)

    def backward(g):
        gx = g * full if x.requires_grad else None
        ga = _region_sum(g * xd, rh, rw) if alpha.requires_grad else None
        return gx, ga

    return Tensor._from_op(xd * full, (x, alpha), backward, "scale_regions")


def concat_channels(xs):
    xs = list(xs)
    if not xs:
        raise ValueError("concat_channels needs at least one tensor")
    for t in xs:
        _check4(t, "concat_channels input")
    N, _, H, W = xs[0].shape
    for t in xs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (N, H, W):
            raise ValueError(f"concat_channels shape mismatch: {xs[0].shape} vs {t.shape}")
    if len(xs) == 1:
        return xs[0]
    sizes = [t.shape[1] for t in xs]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=1))

    return Tensor._from_op(np.concatenate([t.data for t in xs], axis=1), tuple(xs), backward, "concat")


def _shuffle(a, r):
    N, Cr, H, W = a.shape
    C = Cr // (r * r)
    return a.reshape(N, C, r, r, H, W).transpose(0, 1, 4, 2, 5, 3).reshape(N, C, H * r, W * r)


def _unshuffle(a, r):
    N, C, Hr, Wr = a.shape
    H, W = Hr // r, Wr // r
    return a.reshape(N, C, H, r, W, r).transpose(0, 1, 3, 5, 2, 4).reshape(N, C * r * r, H, W)


def pixel_shuffle(x, r):
    """Rearrange [N, C*r*r, H, W] into [N, C, rH, rW] (sub-pixel upsampling)."""
    _check4(x, "pixel_shuffle input")
    if r < 1 or x.shape[1] % (r * r):
        raise ValueError(f"pixel_shuffle: {x.shape[1]} channels not divisible by r^2={r * r}")
    return Tensor._from_op(_shuffle(x.data, r), (x,), lambda g: (_unshuffle(g, r),), "pixel_shuffle")


def space_to_depth(x, r):
    """Inverse of :func:`pixel_shuffle`."""
    _check4(x, "space_to_depth input")
    if r < 1 or x.shape[2] % r or x.shape[3] % r:
        raise ValueError(f"space_to_depth: spatial extent {x.shape[2:]} not divisible by {r}")
    return Tensor._from_op(_unshuffle(x.data, r), (x,), lambda g: (_shuffle(g, r),), "space_to_depth")


def l1_loss(pred, target):
    """Mean absolute error over every element; the subgradient at 0 is 0."""
    if pred.shape != target.shape:
        raise ValueError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    sign = np.sign(diff)
    value = np.asarray(np.abs(diff).sum() / n, dtype=pred.dtype).reshape(1)

    def backward(g):
        gp = sign * (g.reshape(()) / n)
        return gp.astype(pred.dtype, copy=False), -gp.astype(target.dtype, copy=False)

    return Tensor._from_op(value, (pred, target), backward, "l1_loss")
