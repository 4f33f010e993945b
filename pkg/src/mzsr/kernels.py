"""Anisotropic Gaussian blur kernels parameterized by rotation and eigenvalues."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

DEFAULT_SIZE = 15
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class KernelSpec:
    theta: float
    lambda1: float
    lambda2: float
    size: int = DEFAULT_SIZE
    scale: int = 2

    def __post_init__(self):
        if not (self.lambda1 >= self.lambda2 > 0):
            raise ValueError(f"need lambda1 >= lambda2 > 0, got {self.lambda1}, {self.lambda2}")
        if self.size < 3 or self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 3, got {self.size}")


@dataclass(frozen=True)
class Kernel:
    """Normalized blur grid. ``mode`` is set for the named evaluation kernels."""

    weights: np.ndarray
    spec: Optional[KernelSpec] = None
    mode: Optional[str] = None

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def covariance(theta: float, lambda1: float, lambda2: float) -> np.ndarray:
    """R(theta) diag(lambda1, lambda2) R(theta)^T."""
    if lambda1 <= 0 or lambda2 <= 0:
        raise ValueError(f"eigenvalues must be positive, got {lambda1}, {lambda2}")
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    sigma = rot @ np.diag([lambda1, lambda2]) @ rot.T
    return 0.5 * (sigma + sigma.T)


def sample_kernel_params(scale: float, rng: np.random.Generator, size: int = DEFAULT_SIZE) -> KernelSpec:
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    theta = rng.uniform(0.0, np.pi)
    lambda1 = rng.uniform(1.0, 2.5 * scale)
    lambda2 = rng.uniform(1.0, lambda1)
    return KernelSpec(theta, lambda1, lambda2, size=size, scale=int(scale))


def rasterize(spec: KernelSpec) -> Kernel:
    """Gaussian density on an odd grid centred on the middle cell, normalized to sum 1.

    Offsets are ``d = (dx, dy)`` with ``dx`` along columns and ``dy`` along rows.
    """
    sigma = covariance(spec.theta, spec.lambda1, spec.lambda2)
    if np.linalg.cond(sigma) > MAX_CONDITION:
        raise ValueError(f"covariance is numerically singular for {spec}")
    inv = np.linalg.inv(sigma)
    r = spec.size // 2
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    quad = inv[0, 0] * dx * dx + (inv[0, 1] + inv[1, 0]) * dx * dy + inv[1, 1] * dy * dy
    k = np.exp(-0.5 * quad)
    # symmetrize against rounding so point symmetry holds exactly
    k = 0.5 * (k + k[::-1, ::-1])
    return Kernel(k / k.sum(), spec=spec)


def isotropic(width: float, size: int = DEFAULT_SIZE, scale: int = 2) -> Kernel:
    return rasterize(KernelSpec(0.0, width, width, size=size, scale=scale))


def delta(size: int = 3) -> Kernel:
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return Kernel(k)


_NAMED = {
    "g_d_0.2": (KernelSpec(0.0, 0.2, 0.2), "direct"),
    "g_d_2.0": (KernelSpec(0.0, 2.0, 2.0), "direct"),
    "g_d_ani": (KernelSpec(-0.5, 4.0, 1.0), "direct"),
    "g_b_1.3": (KernelSpec(0.0, 1.3, 1.3), "bicubic"),
}

NAMED_KERNELS = tuple(_NAMED)


def named_kernel(name: str) -> Kernel:
    try:
        spec, mode = _NAMED[name]
    except KeyError:
        raise ValueError(f"unknown kernel name {name!r}; known: {', '.join(_NAMED)}") from None
    k = rasterize(spec)
    return Kernel(k.weights, spec=spec, mode=mode)


def save_kernel_text(kernel: Kernel, path) -> None:
    np.savetxt(path, kernel.weights, fmt="%.12e", delimiter=" ")


def load_kernel_text(path) -> Kernel:
    k = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ValueError(f"kernel file {path} must hold an odd square grid, got {k.shape}")
    if np.any(k < 0) or not np.isclose(k.sum(), 1.0, atol=1e-6):
        raise ValueError(f"kernel file {path} must be non-negative and sum to 1")
    return Kernel(k / k.sum())
