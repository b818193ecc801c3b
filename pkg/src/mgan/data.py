"""Image I/O, colour conversion, BI/BD degradation, patch sampling, augmentation.

Images are float arrays of shape (H, W, 3) with values in [0, 1].
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEGRADATIONS = ("BI", "BD")


@dataclass
class DegradationSpec:
    kind: str = "BI"
    scale: int = 4
    blur_kernel_size: int = 7
    blur_sigma: float = 1.6

    def validate(self):
        if self.kind not in DEGRADATIONS:
            raise ValueError(f"degradation kind must be BI or BD, got {self.kind!r}")
        if self.scale not in (2, 3, 4, 8):
            raise ValueError(f"unsupported scale {self.scale}")
        if self.blur_kernel_size < 1 or self.blur_kernel_size % 2 == 0:
            raise ValueError(f"blur_kernel_size must be odd, got {self.blur_kernel_size}")
        if self.blur_sigma <= 0:
            raise ValueError(f"blur_sigma must be positive, got {self.blur_sigma}")
        return self

    def describe(self):
        if self.kind == "BI":
            return f"BI x{self.scale} (bicubic a=-0.5, antialiased)"
        k = self.blur_kernel_size
        return f"BD x{self.scale} (gaussian {k}x{k} sigma {self.blur_sigma:g} + bicubic)"


# --- 8-bit conversion and I/O -------------------------------------------------

def to_float(img_u8):
    return np.asarray(img_u8, dtype=np.float64) / 255.0


def quantize(img):
    """Round-half-away-from-zero to 8 bit; input is clipped to [0, 1] first."""
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def load_image(path):
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return to_float(arr)


def save_image(path, img):
    from PIL import Image

    Image.fromarray(quantize(img), mode="RGB").save(path)


def rgb_to_ycbcr_y(img):
    """BT.601 studio-swing luminance on the 8-bit scale (16..235)."""
    img = np.asarray(img, dtype=np.float64)
    return 16.0 + img[..., 0] * 65.481 + img[..., 1] * 128.553 + img[..., 2] * 24.966


# --- bicubic resampling --------------------------------------------------------

def cubic(x, a=-0.5):
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    return ((a + 2) * ax3 - (a + 3) * ax2 + 1) * (ax <= 1) + \
        (a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a) * ((ax > 1) & (ax <= 2))


def resize_weights(in_len, out_len, scale=None):
    """Per-output-sample source indices and weights (reference imresize rules).

    When shrinking, the kernel is stretched by ``1/scale``.  Out-of-range taps
    are mirrored back into the signal (symmetric padding).
    """
    if scale is None:
        scale = out_len / in_len
    width = 4.0
    if scale < 1:
        width /= scale
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    if scale < 1:
        w = scale * cubic(scale * (u[:, None] - idx))
    else:
        w = cubic(u[:, None] - idx)
    w = w / w.sum(axis=1, keepdims=True)
    mirror = np.concatenate([np.arange(in_len), np.arange(in_len)[::-1]])
    idx = mirror[np.mod(idx.astype(np.intp) - 1, 2 * in_len)]
    keep = np.any(w != 0, axis=0)
    return idx[:, keep], w[:, keep]


def _resize_axis(img, out_len, axis, scale):
    idx, w = resize_weights(img.shape[axis], out_len, scale)
    moved = np.moveaxis(img, axis, 0)
    out = np.zeros((out_len,) + moved.shape[1:], dtype=np.float64)
    for t in range(idx.shape[1]):
        out += w[:, t].reshape((-1,) + (1,) * (moved.ndim - 1)) * moved[idx[:, t]]
    return np.moveaxis(out, 0, axis)


def bicubic_resize(img, out_h, out_w, scale=None):
    """Separable bicubic resize (a = -0.5) of an (H, W[, C]) array.

    ``scale`` overrides the per-axis factor ``out/in`` as the reference tool
    does when it is called with a scalar factor.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output extents must be >= 1, got {out_h}x{out_w}")
    img = np.asarray(img, dtype=np.float64)
    out = _resize_axis(img, out_h, 0, scale)
    return _resize_axis(out, out_w, 1, scale)


def rescale(img, factor):
    h, w = img.shape[:2]
    return bicubic_resize(img, int(math.ceil(h * factor)), int(math.ceil(w * factor)), scale=factor)


# --- BD blur -------------------------------------------------------------------

def gaussian_kernel(size=7, sigma=1.6):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, size=7, sigma=1.6):
    """Correlate each channel with a normalized Gaussian, replicating edges."""
    img = np.asarray(img, dtype=np.float64)
    k = gaussian_kernel(size, sigma)
    p = size // 2
    pad = ((p, p), (p, p)) + ((0, 0),) * (img.ndim - 2)
    win = sliding_window_view(np.pad(img, pad, mode="edge"), (size, size), axis=(0, 1))
    return np.einsum("...ij,ij->...", win, k)


# --- degradation ---------------------------------------------------------------

def mod_crop(img, scale):
    """Centre-crop so both extents are multiples of ``scale``."""
    h, w = img.shape[:2]
    if h < scale or w < scale:
        raise ValueError(f"image {h}x{w} is smaller than scale {scale}")
    nh, nw = h - h % scale, w - w % scale
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[top:top + nh, left:left + nw]


def degrade(img, spec):
    """Synthesize the LR counterpart of ``img`` (already mod-cropped or not)."""
    spec.validate()
    hr = mod_crop(np.asarray(img, dtype=np.float64), spec.scale)
    if spec.kind == "BD":
        hr = gaussian_blur(hr, spec.blur_kernel_size, spec.blur_sigma)
    h, w = hr.shape[:2]
    return bicubic_resize(hr, h // spec.scale, w // spec.scale, scale=1.0 / spec.scale)


# --- patches and augmentation -------------------------------------------------

def sample_patch_pair(hr, lr, scale, patch, rng, offset=None):
    """Random aligned (lr_patch, hr_patch) crops; ``offset`` pins the LR corner."""
    lh, lw = lr.shape[:2]
    if lh < patch or lw < patch:
        raise ValueError(f"LR image {lh}x{lw} smaller than patch {patch}")
    if hr.shape[0] < lh * scale or hr.shape[1] < lw * scale:
        raise ValueError(f"HR image {hr.shape[:2]} does not cover LR {lh}x{lw} at x{scale}")
    if offset is None:
        y = int(rng.integers(0, lh - patch + 1))
        x = int(rng.integers(0, lw - patch + 1))
    else:
        y, x = offset
    hp = patch * scale
    return (lr[y:y + patch, x:x + patch],
            hr[y * scale:y * scale + hp, x * scale:x * scale + hp])


def dihedral(a, code, axes=(0, 1)):
    """Apply one of the 8 dihedral transforms: optional horizontal flip, then ``code % 4`` quarter turns."""
    if not 0 <= code < 8:
        raise ValueError(f"augmentation code must be in 0..7, got {code}")
    if code >= 4:
        a = np.flip(a, axis=axes[1])
    return np.rot90(a, code % 4, axes=axes)


def inverse_dihedral(a, code, axes=(0, 1)):
    if not 0 <= code < 8:
        raise ValueError(f"augmentation code must be in 0..7, got {code}")
    a = np.rot90(a, -(code % 4), axes=axes)
    if code >= 4:
        a = np.flip(a, axis=axes[1])
    return a


def augment(pair, code):
    return tuple(np.ascontiguousarray(dihedral(p, code)) for p in pair)


# --- manifests -----------------------------------------------------------------

@dataclass
class DatasetManifest:
    root: Path
    entries: list = field(default_factory=list)  # (hr_path, lr_path or None)
    degradation: DegradationSpec | None = None

    def __len__(self):
        return len(self.entries)


def read_manifest(path, degradation=None):
    """Parse ``hr_path[TAB]lr_path`` lines; relative paths resolve against the file's directory."""
    path = Path(path)
    root = path.parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            hr = root / cols[0].strip()
            lr = root / cols[1].strip() if len(cols) > 1 and cols[1].strip() else None
            entries.append((hr, lr))
    return DatasetManifest(root=root, entries=entries, degradation=degradation)


def write_manifest(path, entries):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for hr, lr in entries:
            hr = os.path.relpath(hr, path.parent)
            fh.write(hr if lr is None else f"{hr}\t{os.path.relpath(lr, path.parent)}")
            fh.write("\n")


def manifest_from_dir(directory, exts=(".png", ".bmp")):
    d = Path(directory)
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in exts)
    return DatasetManifest(root=d, entries=[(p, None) for p in files])


def load_pair(entry, spec):
    """Return (hr, lr) float images for one manifest entry.

    HR is mod-cropped; synthesized LR is quantized to 8 bit as if stored on disk.
    """
    hr_path, lr_path = entry
    hr = mod_crop(load_image(hr_path), spec.scale)
    if lr_path is not None:
        lr = load_image(lr_path)
        if lr.shape[0] * spec.scale != hr.shape[0] or lr.shape[1] * spec.scale != hr.shape[1]:
            raise ValueError(f"{lr_path}: LR {lr.shape[:2]} does not match HR {hr.shape[:2]} / {spec.scale}")
    else:
        lr = to_float(quantize(degrade(hr, spec)))
    return hr, lr
