"""Image degradation: blur, subsample by s, add noise. Plus bicubic resizing.

Images here are plain ``(H, W, C)`` float64 arrays; nothing in this module
is part of the autodiff graph.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import ndimage

from mzsr.kernels import Kernel

MODES = ("direct", "bicubic")


@dataclass(frozen=True)
class DegradeSpec:
    kernel: Kernel
    scale: int
    mode: str = "direct"
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def _as_hwc(img: np.ndarray) -> tuple[np.ndarray, bool]:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[:, :, None], True
    if img.ndim != 3:
        raise ValueError(f"expected an (H, W) or (H, W, C) image, got shape {img.shape}")
    return img, False


def blur(img: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Convolve each channel with the kernel, mirror-reflecting at the border."""
    x, squeeze = _as_hwc(img)
    out = np.empty_like(x)
    for c in range(x.shape[2]):
        out[:, :, c] = ndimage.convolve(x[:, :, c], kernel.weights, mode="mirror")
    return out[:, :, 0] if squeeze else out


def _cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric: -1 -> 0, n -> n-1
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


@lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) Keys-cubic resampling matrix along one axis.

    The kernel is stretched by ``n_in / n_out`` when shrinking (antialias).
    Rows sum to one.
    """
    scale = n_out / n_in
    stretch = 1.0 / scale if scale < 1 else 1.0
    support = 2.0 * stretch
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    left = np.floor(centers - support).astype(int) + 1
    taps = int(np.ceil(2 * support)) + 1
    idx = left[:, None] + np.arange(taps)[None, :]
    w = _cubic((centers[:, None] - idx) / stretch) / stretch
    w /= w.sum(axis=1, keepdims=True)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(np.arange(n_out), taps), _reflect_index(idx, n_in).ravel()), w.ravel())
    mat.flags.writeable = False
    return mat


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    x, squeeze = _as_hwc(img)
    h, w = x.shape[:2]
    rows = resize_matrix(h, out_h)
    cols = resize_matrix(w, out_w)
    out = np.einsum("ih,hwc,jw->ijc", rows, x, cols, optimize=True)
    return out[:, :, 0] if squeeze else out


def subsample(img: np.ndarray, scale: int, mode: str) -> np.ndarray:
    x, _ = _as_hwc(img)
    if mode == "direct":
        return np.ascontiguousarray(np.asarray(img)[::scale, ::scale])
    if mode == "bicubic":
        return bicubic_resize(img, x.shape[0] // scale, x.shape[1] // scale)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def degrade(img: np.ndarray, spec: DegradeSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Blur, subsample by ``spec.scale`` and add white Gaussian noise."""
    x, _ = _as_hwc(img)
    h, w = x.shape[:2]
    if h % spec.scale or w % spec.scale:
        raise ValueError(f"image size {h}x{w} is not divisible by scale {spec.scale}")
    out = subsample(blur(img, spec.kernel), spec.scale, spec.mode)
    if spec.noise_sigma > 0:
        if rng is None:
            raise ValueError("noise_sigma > 0 needs an rng")
        out = out + rng.normal(0.0, spec.noise_sigma, size=out.shape)
    return out


def make_lr_son(lr: np.ndarray, kernel: Kernel, scale: int, mode: str) -> np.ndarray:
    """Downsample the test image once more with its own kernel."""
    return degrade(lr, DegradeSpec(kernel, scale, mode, 0.0))


def upscale(img: np.ndarray, scale: int) -> np.ndarray:
    x, _ = _as_hwc(img)
    return bicubic_resize(img, x.shape[0] * scale, x.shape[1] * scale)
