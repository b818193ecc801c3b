"""Y-channel PSNR/SSIM, self-ensemble inference and benchmark evaluation."""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import data as D

PSNR_CAP = 100.0
Y_FORMULA = "BT.601 studio swing: Y = 16 + 65.481 R + 128.553 G + 24.966 B"


def _shave(a, shave):
    if shave == 0:
        return a
    if 2 * shave >= min(a.shape[:2]):
        raise ValueError(f"shave {shave} leaves nothing of a {a.shape[0]}x{a.shape[1]} plane")
    return a[shave:-shave, shave:-shave]


def psnr(a, b, shave=0, cap=PSNR_CAP):
    """PSNR in dB of two 8-bit-scale planes; identical planes give ``cap`` (inf if None)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    d = _shave(a, shave) - _shave(b, shave)
    mse = float(np.mean(d * d))
    value = math.inf if mse == 0 else 10.0 * math.log10(255.0 ** 2 / mse)
    return value if cap is None else min(value, cap)


def _filter_valid(a, g1):
    # separable 'valid' correlation with a symmetric 1-D kernel
    n = g1.size
    a = sliding_window_view(a, n, axis=0) @ g1
    return sliding_window_view(a, n, axis=1) @ g1


def ssim(a, b, shave=0, window=11, sigma=1.5):
    """Mean SSIM over all valid window positions (Wang et al. constants)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    a, b = _shave(a, shave), _shave(b, shave)
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than the {window}x{window} SSIM window")
    r = np.arange(window) - (window - 1) / 2
    g1 = np.exp(-r * r / (2 * sigma * sigma))
    g1 /= g1.sum()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    mu_a, mu_b = _filter_valid(a, g1), _filter_valid(b, g1)
    var_a = _filter_valid(a * a, g1) - mu_a * mu_a
    var_b = _filter_valid(b * b, g1) - mu_b * mu_b
    cov = _filter_valid(a * b, g1) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _tree_mean(arrays):
    xs = list(arrays)
    n = len(xs)
    while len(xs) > 1:
        nxt = [xs[i] + xs[i + 1] for i in range(0, len(xs) - 1, 2)]
        if len(xs) % 2:
            nxt.append(xs[-1])
        xs = nxt
    return xs[0] / n


def self_ensemble_infer(model, lr):
    """Average the model output over the 8 dihedral transforms of an NCHW batch.

    ``model`` is an :class:`~mgan.model.MganModel` or any callable mapping an
    NCHW array to an NCHW array.  Outputs are left unclamped.
    """
    fn = _as_callable(model)
    outs = []
    for code in range(8):
        y = fn(np.ascontiguousarray(D.dihedral(lr, code, axes=(2, 3))))
        outs.append(np.ascontiguousarray(D.inverse_dihedral(y, code, axes=(2, 3))))
    return _tree_mean(outs)


def _as_callable(model):
    from .model import MganModel, infer

    if isinstance(model, MganModel):
        return lambda x: infer(model, x, clamp=False)
    return model


def bicubic_upscale(lr, scale):
    h, w = lr.shape[:2]
    return D.bicubic_resize(lr, h * scale, w * scale, scale=float(scale))


def super_resolve(model, lr, scale, self_ensemble=False):
    """SR of one (H, W, 3) image; ``model == "bicubic"`` selects the baseline."""
    if isinstance(model, str):
        if model != "bicubic":
            raise ValueError(f"unknown baseline {model!r}")
        return np.clip(bicubic_upscale(lr, scale), 0.0, 1.0)
    x = np.ascontiguousarray(lr.transpose(2, 0, 1)[None])
    if self_ensemble:
        y = self_ensemble_infer(model, x)
    else:
        y = _as_callable(model)(x)
    return np.clip(y[0].transpose(1, 2, 0), 0.0, 1.0)


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)  # (name, psnr, ssim)
    conventions: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)  # (name, reason)

    @property
    def mean_psnr(self):
        return float(np.mean([r[1] for r in self.rows])) if self.rows else math.nan

    @property
    def mean_ssim(self):
        return float(np.mean([r[2] for r in self.rows])) if self.rows else math.nan

    def to_csv(self):
        buf = io.StringIO()
        for k, v in self.conventions.items():
            buf.write(f"# {k}: {v}\n")
        for name, reason in self.skipped:
            buf.write(f"# skipped: {name} ({reason})\n")
        buf.write("name,psnr,ssim\n")
        for name, p, s in self.rows:
            buf.write(f"{name},{p:.6f},{s:.6f}\n")
        buf.write(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.6f}\n")
        return buf.getvalue()

    def summary(self):
        lines = [f"{len(self.rows)} images, mean PSNR {self.mean_psnr:.2f} dB, mean SSIM {self.mean_ssim:.4f}"]
        lines += [f"  {k}: {v}" for k, v in self.conventions.items()]
        lines += [f"  skipped {n}: {r}" for n, r in self.skipped]
        return "\n".join(lines)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


def evaluate(model, manifest, spec, shave=None, self_ensemble=False):
    """Score ``model`` (or the ``"bicubic"`` baseline) on every manifest image."""
    spec.validate()
    shave = spec.scale if shave is None else shave
    report = EvalReport(conventions={
        "method": model if isinstance(model, str) else "mgan",
        "degradation": spec.describe(),
        "lr_source": "synthesized, quantized to 8 bit" if any(lr is None for _, lr in manifest.entries)
        else "precomputed files",
        "hr_crop": f"centre crop to multiple of {spec.scale}",
        "shave": shave,
        "y_channel": Y_FORMULA,
        "ssim": "gaussian 11x11 sigma 1.5, C1=(0.01*255)^2, C2=(0.03*255)^2, valid positions",
        "psnr_cap_db": PSNR_CAP,
        "self_ensemble": bool(self_ensemble),
    })
    for entry in manifest.entries:
        name = entry[0].stem
        try:
            hr, lr = D.load_pair(entry, spec)
        except (OSError, ValueError) as exc:
            warnings.warn(f"skipping {entry[0]}: {exc}", RuntimeWarning, stacklevel=2)
            report.skipped.append((name, str(exc).replace("\n", " ")))
            continue
        sr = D.to_float(D.quantize(super_resolve(model, lr, spec.scale, self_ensemble)))
        y_sr, y_hr = D.rgb_to_ycbcr_y(sr), D.rgb_to_ycbcr_y(hr)
        report.rows.append((name, psnr(y_sr, y_hr, shave), ssim(y_sr, y_hr, shave)))
    return report
