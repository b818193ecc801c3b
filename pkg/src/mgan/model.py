"""Multi-grained attention network (MGAN) built on :mod:`mgan.autograd`.

Topology::

    head 3x3 conv -> MGAB x num_blocks -> hierarchical fusion (concat, 1x1)
    -> + head output (global residual) -> sub-pixel upsampler -> tail 3x3 conv

Each MGAB runs ``units_per_path`` densely connected units of parallel
convolutions (one per entry of ``path_kernels``), fuses them with a 1x1
conv, refines the result with multi-grained attention and adds its input.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autograd import Tensor

PIXEL = "pixel"
SCALES = (2, 3, 4, 8)


@dataclass
class ModelConfig:
    num_blocks: int = 8
    channels: int = 64
    units_per_path: int = 3
    path_kernels: list = field(default_factory=lambda: [3, 5])
    grains: list = field(default_factory=lambda: [1, 2, 4])
    reduction_ratio: int = 16
    scale: int = 4
    input_channels: int = 3
    multi_scale_dense: bool = True
    hierarchical_fusion: bool = True
    attention: bool = True
    spatial_attention: bool = False

    def validate(self):
        def bad(name, why):
            raise ValueError(f"invalid ModelConfig.{name}: {why}")

        for name in ("num_blocks", "channels", "units_per_path", "reduction_ratio", "input_channels"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                bad(name, f"must be a positive integer, got {v!r}")
        if self.channels % self.reduction_ratio:
            bad("reduction_ratio", f"channels={self.channels} not divisible by {self.reduction_ratio}")
        if self.scale not in SCALES:
            bad("scale", f"must be one of {SCALES}, got {self.scale!r}")
        if not self.path_kernels or any(k < 1 or k % 2 == 0 for k in self.path_kernels):
            bad("path_kernels", f"need a non-empty list of odd sizes, got {self.path_kernels!r}")
        if self.attention:
            if not self.grains and not self.spatial_attention:
                bad("grains", "attention enabled but no grains given")
            if any(g < 1 for g in self.grains):
                bad("grains", f"each grain must be >= 1, got {self.grains!r}")
            if list(self.grains) != sorted(self.grains) or len(set(self.grains)) != len(self.grains):
                bad("grains", f"must be strictly ascending, got {self.grains!r}")
        return self

    @property
    def attention_grains(self):
        """Grains used by each attention unit; ``PIXEL`` means one region per pixel."""
        if not self.attention:
            return []
        return list(self.grains) + ([PIXEL] if self.spatial_attention else [])

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# Ablation variants; every one keeps 8 blocks of 64 channels.
ABLATIONS = {
    "P1": dict(hierarchical_fusion=False, attention=False),
    "P2": dict(attention=False),
    "P3": dict(grains=[1]),
    "P4": dict(grains=[1], spatial_attention=True),
    "P5": dict(grains=[1, 2]),
    "P6": dict(grains=[1, 2, 4]),
}


def ablation_config(name, **overrides):
    cfg = ModelConfig(**ABLATIONS[name])
    return cfg.replace(**overrides).validate() if overrides else cfg.validate()


def upsample_factors(scale):
    """Pixel-shuffle factors of the upsampler stages (x4 = 2*2, x8 = 2*2*2)."""
    if scale in (2, 3):
        return [scale]
    return [2] * int(round(math.log2(scale)))


def _grain_key(g):
    return PIXEL if g == PIXEL else str(g)


def parameter_shapes(cfg):
    """Ordered ``name -> shape`` table for every parameter of ``cfg``."""
    C, P = cfg.channels, len(cfg.path_kernels)
    shapes = {}

    def conv(name, cout, cin, k):
        shapes[f"{name}.weight"] = (cout, cin, k, k)
        shapes[f"{name}.bias"] = (cout,)

    conv("head", C, cfg.input_channels, 3)
    for d in range(cfg.num_blocks):
        for i in range(cfg.units_per_path):
            if cfg.multi_scale_dense:
                cin = C + i * P * C
            else:
                cin = C if i == 0 else P * C
            for k in cfg.path_kernels:
                conv(f"block{d}.unit{i}.k{k}", C, cin, k)
        lff_in = C + cfg.units_per_path * P * C if cfg.multi_scale_dense else C + P * C
        conv(f"block{d}.lff", C, lff_in, 1)
        grains = cfg.attention_grains
        for g in grains:
            key = _grain_key(g)
            conv(f"block{d}.att.g{key}.se1", C // cfg.reduction_ratio, C, 1)
            conv(f"block{d}.att.g{key}.se2", C, C // cfg.reduction_ratio, 1)
        if grains:
            conv(f"block{d}.att.fuse", C, len(grains) * C, 1)
    if cfg.hierarchical_fusion:
        conv("hff", C, cfg.num_blocks * C, 1)
    for s, r in enumerate(upsample_factors(cfg.scale)):
        conv(f"up{s}", C * r * r, C, 3)
    conv("tail", cfg.input_channels, C, 3)
    return shapes


class MganModel:
    """Parameter registry plus the forward graph of the network."""

    def __init__(self, config, params):
        self.config = config
        self.params = params

    def __call__(self, x):
        return forward(self, x)

    def named_parameters(self):
        return list(self.params.items())

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)[:5]}")
        for k, p in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def astype(self, dtype):
        params = {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k) for k, v in self.params.items()}
        return MganModel(self.config, params)


def build_model(config, seed=0, dtype=np.float32):
    """Instantiate ``config`` with He fan-in normal weights and zero biases."""
    config.validate()
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".weight"):
            fan_in = shape[1] * shape[2] * shape[3]
            data = rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    return MganModel(config, params)


def param_count(model):
    return int(sum(p.size for p in model.params.values()))


def param_breakdown(model):
    """Parameter totals grouped by the first component of each name."""
    out = {}
    for name, p in model.params.items():
        top = name.split(".")[0]
        out[top] = out.get(top, 0) + p.size
    return out


def _conv(x, params, name, padding=0):
    return ops.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], padding=padding)


def se_unit(pooled, w1, b1, w2, b2):
    """Excitation gate ``sigmoid(W2 relu(W1 z))`` applied at every grid cell."""
    h = ops.relu(ops.conv2d(pooled, w1, b1))
    return ops.sigmoid(ops.conv2d(h, w2, b2))


def _resolve_grain(g, H, W):
    if g == PIXEL:
        return (H, W)
    if g > min(H, W):
        warnings.warn(f"grain {g} exceeds feature map {H}x{W}; clamped to {min(H, W)}", RuntimeWarning,
                      stacklevel=3)
        return min(H, W)
    return g


def mga_unit(x, grains, params, prefix=""):
    """Multi-grained attention: per-grain pooled SE gates, then 1x1 fusion.

    ``params`` holds ``{prefix}g{S}.se1/se2`` and ``{prefix}fuse`` convs.
    """
    H, W = x.shape[2:]
    branches = []
    for g in grains:
        key = f"{prefix}g{_grain_key(g)}"
        pooled = ops.region_avg_pool(x, _resolve_grain(g, H, W))
        alpha = se_unit(pooled, params[f"{key}.se1.weight"], params[f"{key}.se1.bias"],
                        params[f"{key}.se2.weight"], params[f"{key}.se2.bias"])
        branches.append(ops.scale_regions(x, alpha))
    return _conv(ops.concat_channels(branches), params, f"{prefix}fuse")


def mgab_forward(x, params, config, prefix=""):
    """One multi-grained attention block: ``x + F_att(x)``."""
    if x.shape[1] != config.channels:
        raise ValueError(f"MGAB expects {config.channels} channels, got {x.shape[1]}")
    feats = [x]
    unit_in = x
    for i in range(config.units_per_path):
        paths = [ops.relu(_conv(unit_in, params, f"{prefix}unit{i}.k{k}", padding=k // 2))
                 for k in config.path_kernels]
        out = ops.concat_channels(paths)
        feats.append(out)
        unit_in = ops.concat_channels(feats) if config.multi_scale_dense else out
    lff_in = ops.concat_channels(feats if config.multi_scale_dense else [x, feats[-1]])
    y = _conv(lff_in, params, f"{prefix}lff")
    grains = config.attention_grains
    if grains:
        y = mga_unit(y, grains, params, prefix=f"{prefix}att.")
    if y.shape != x.shape:
        raise ValueError(f"MGAB shape drift: {x.shape} -> {y.shape}")
    return x + y


def forward(model, lr_image):
    """Super-resolve an [N, C, H, W] tensor to [N, C, sH, sW] (unclamped)."""
    cfg, p = model.config, model.params
    if not isinstance(lr_image, Tensor):
        lr_image = Tensor(lr_image)
    if lr_image.data.ndim != 4 or lr_image.shape[1] != cfg.input_channels:
        raise ValueError(f"expected [N, {cfg.input_channels}, H, W] input, got {lr_image.shape}")
    dtype = p["head.weight"].dtype
    if lr_image.dtype != dtype:
        lr_image = Tensor(lr_image.data.astype(dtype))
    head = _conv(lr_image, p, "head", padding=1)
    f = head
    outs = []
    for d in range(cfg.num_blocks):
        f = mgab_forward(f, p, cfg, prefix=f"block{d}.")
        outs.append(f)
    if cfg.hierarchical_fusion:
        f = _conv(ops.concat_channels(outs), p, "hff")
    f = f + head
    for s, r in enumerate(upsample_factors(cfg.scale)):
        f = ops.pixel_shuffle(_conv(f, p, f"up{s}", padding=1), r)
    return _conv(f, p, "tail", padding=1)


def infer(model, lr, clamp=True):
    """Forward pass on a NumPy batch without recording gradients."""
    x = Tensor(np.asarray(lr, dtype=model.params["head.weight"].dtype))
    out = forward(_frozen(model), x).data
    return np.clip(out, 0.0, 1.0) if clamp else out


def _frozen(model):
    params = {k: Tensor(v.data) for k, v in model.params.items()}
    return MganModel(model.config, params)
