"""Image corpora: PNG folders and a procedural stand-in for natural images."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage


def _smooth_noise(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    z = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    return (z - z.min()) / (np.ptp(z) + 1e-12)


def synthetic_image(rng: np.random.Generator, size: int = 96, supersample: int = 4) -> np.ndarray:
    """Piecewise-smooth RGB image with edges, stripes and texture in [0, 1].

    Not a photograph, but it has the ingredients SR models care about: sharp
    edges at many orientations, smooth shading and periodic detail. Shapes are
    drawn on a finer grid and box-averaged, so edges are antialiased the way a
    camera sensor would integrate them.
    """
    n = size * supersample
    yy, xx = (np.mgrid[0:n, 0:n].astype(np.float64) + 0.5) / supersample
    img = np.empty((n, n, 3))
    base = rng.uniform(0.2, 0.8, size=3)
    shade = np.kron(_smooth_noise(rng, size, size / 6), np.ones((supersample, supersample)))
    img[:] = base * (0.6 + 0.4 * shade[:, :, None])

    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, size, 2)
        ry, rx = rng.uniform(size / 12, size / 3, 2)
        ang = rng.uniform(0, np.pi)
        c, s = np.cos(ang), np.sin(ang)
        u = ((xx - cx) * c + (yy - cy) * s) / rx
        v = (-(xx - cx) * s + (yy - cy) * c) / ry
        mask = (u * u + v * v) <= 1.0
        img[mask] = rng.uniform(0, 1, size=3)

    for _ in range(rng.integers(1, 3)):
        ang = rng.uniform(0, np.pi)
        period = rng.uniform(6.0, 14.0)
        phase = (xx * np.cos(ang) + yy * np.sin(ang)) * 2 * np.pi / period
        stripes = 0.5 + 0.5 * np.sign(np.sin(phase))
        cy, cx = rng.uniform(0, size, 2)
        half = rng.uniform(size / 8, size / 3)
        region = (np.abs(yy - cy) < half) & (np.abs(xx - cx) < half)
        color = rng.uniform(0, 1, size=3)
        img[region] = img[region] * (1 - 0.7 * stripes[region, None]) + 0.7 * stripes[region, None] * color

    img = img.reshape(size, supersample, size, supersample, 3).mean(axis=(1, 3))
    texture = _smooth_noise(rng, size, 0.8) - 0.5
    img += 0.03 * texture[:, :, None]
    return np.clip(img, 0.0, 1.0)


def synthetic_corpus(n: int, size: int = 96, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, size) for _ in range(n)]


def tiled_texture(size: int = 96, tile: int = 12, seed: int = 0) -> np.ndarray:
    """Image made of one random tile repeated: strong cross-scale recurrence."""
    rng = np.random.default_rng(seed)
    t = np.zeros((tile, tile, 3))
    yy, xx = np.mgrid[0:tile, 0:tile]
    t[:] = rng.uniform(0.1, 0.3, size=3)
    t[(yy < tile // 2) & (xx < tile // 2)] = rng.uniform(0.6, 0.9, size=3)
    t[np.abs(yy - xx) <= 1] = rng.uniform(0.5, 1.0, size=3)
    t[(yy - tile * 3 // 4) ** 2 + (xx - tile * 3 // 4) ** 2 <= (tile // 6) ** 2] = rng.uniform(0, 1, size=3)
    reps = -(-size // tile)
    return np.tile(t, (reps, reps, 1))[:size, :size]


def load_corpus(paths: Sequence[Path]) -> list[np.ndarray]:
    """Read every PNG from the given files or directories, sorted by path."""
    from mzsr.io import read_png

    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.png")) if p.is_dir() else [p])
    if not files:
        raise ValueError(f"no PNG images found in {list(map(str, paths))}")
    return [read_png(f) for f in files]
