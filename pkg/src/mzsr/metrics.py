"""PSNR and SSIM on the luma channel (studio-swing BT.601)."""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import correlate2d


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] to Y in [16, 235]. Inputs are clipped first."""
    x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if x.ndim == 2:
        x = np.repeat(x[:, :, None], 3, axis=2)
    if x.shape[-1] != 3:
        raise ValueError(f"expected an RGB image, got shape {x.shape}")
    return 16.0 + 65.481 * x[..., 0] + 128.553 * x[..., 1] + 24.966 * x[..., 2]


def _crop(y: np.ndarray, border: int) -> np.ndarray:
    if border < 0:
        raise ValueError(f"border must be >= 0, got {border}")
    h, w = y.shape
    if 2 * border >= h or 2 * border >= w:
        raise ValueError(f"border {border} leaves nothing of a {h}x{w} image")
    return y[border : h - border, border : w - border] if border else y


def psnr_y(a: np.ndarray, b: np.ndarray, border: int = 0) -> float:
    """PSNR in dB between the Y channels; ``math.inf`` for identical images."""
    if np.shape(a) != np.shape(b):
        raise ValueError(f"psnr_y: shape mismatch {np.shape(a)} vs {np.shape(b)}")
    ya = _crop(rgb_to_y(a), border)
    yb = _crop(rgb_to_y(b), border)
    mse = np.mean((ya - yb) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_y(a: np.ndarray, b: np.ndarray, border: int = 0) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1=0.01, K2=0.03, L=255)."""
    if np.shape(a) != np.shape(b):
        raise ValueError(f"ssim_y: shape mismatch {np.shape(a)} vs {np.shape(b)}")
    x = _crop(rgb_to_y(a), border)
    y = _crop(rgb_to_y(b), border)
    if x.shape[0] < 11 or x.shape[1] < 11:
        raise ValueError(f"ssim_y needs at least 11x11 pixels, got {x.shape}")
    win = _gaussian_window()
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2

    def filt(z):
        return correlate2d(z, win, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x**2
    syy = filt(y * y) - mu_y**2
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))
