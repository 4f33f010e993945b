"""Zero-shot adaptation to a single LR image through its LR son."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from mzsr.autograd import Tensor, backward, l1_loss, no_grad
from mzsr.degrade import bicubic_resize, make_lr_son
from mzsr.kernels import Kernel
from mzsr.meta import to_nchw
from mzsr.metrics import psnr_y
from mzsr.network import ArchDescriptor, ModelParams, build, forward
from mzsr.optim import AdamState, adam_step, sgd_update


@dataclass(frozen=True)
class AdaptResult:
    sr: np.ndarray
    losses: list[float]
    params: ModelParams


def _to_image(t: Tensor) -> np.ndarray:
    return t.data[0].transpose(1, 2, 0).copy()


def super_resolve(params: ModelParams, lr: np.ndarray, scale: int) -> np.ndarray:
    h, w = lr.shape[:2]
    x = Tensor(to_nchw([bicubic_resize(lr, scale * h, scale * w)]))
    with no_grad():
        return _to_image(forward(params, x))


def adapt(
    lr: np.ndarray,
    kernel: Kernel,
    mode: str,
    scale: int,
    params: ModelParams,
    steps: int,
    lr_rate: float,
    optimizer: str = "sgd",
) -> AdaptResult:
    """Fit ``params`` to the (son -> LR) pair, then super-resolve the LR image.

    ``optimizer`` is ``"sgd"`` (plain gradient descent) or ``"adam"``.
    """
    if steps < 0:
        raise ValueError(f"number of updates must be >= 0, got {steps}")
    if optimizer not in ("sgd", "adam"):
        raise ValueError(f"optimizer must be 'sgd' or 'adam', got {optimizer!r}")
    h, w = lr.shape[:2]
    if h % scale or w % scale:
        raise ValueError(f"LR image {h}x{w} is not divisible by scale {scale}")
    son = make_lr_son(lr, kernel, scale, mode)
    x = Tensor(to_nchw([bicubic_resize(son, h, w)]))
    target = Tensor(to_nchw([lr]))
    theta = params.detached()
    state = AdamState.zeros_like(theta)
    losses = []
    for _ in range(steps):
        loss = l1_loss(forward(theta, x), target)
        grads = backward(loss, list(theta))
        if optimizer == "sgd":
            with no_grad():
                theta = sgd_update(theta, grads, lr_rate).detached()
        else:
            state, theta = adam_step(state, theta, grads, lr_rate)
        losses.append(loss.item())
    return AdaptResult(super_resolve(theta, lr, scale), losses, theta)


def meta_test(
    lr: np.ndarray,
    kernel: Kernel,
    mode: str,
    scale: int,
    params: ModelParams,
    steps: int = 1,
    alpha: float = 0.01,
) -> AdaptResult:
    """Few-step plain gradient descent from the meta-learned initialization."""
    return adapt(lr, kernel, mode, scale, params, steps, alpha, optimizer="sgd")


def zssr_baseline(
    lr: np.ndarray,
    kernel: Kernel,
    mode: str,
    scale: int,
    steps: int,
    lr_rate: float = 1e-3,
    seed: int = 0,
    arch: ArchDescriptor = ArchDescriptor(),
    output_gain: float = 1.0,
) -> np.ndarray:
    """Same self-supervision, but from a random initialization with Adam."""
    return adapt(lr, kernel, mode, scale, build(arch, seed, output_gain), steps, lr_rate, optimizer="adam").sr


@dataclass(frozen=True)
class ProbeRow:
    name: str
    psnr: float
    kernel_distance: float


def mismatch_probe(
    lr: np.ndarray,
    hr: np.ndarray,
    true_kernel: Kernel,
    probes: Mapping[str, Kernel],
    params: ModelParams,
    mode: str,
    scale: int,
    steps: int = 1,
    alpha: float = 0.01,
    border: Optional[int] = None,
) -> list[ProbeRow]:
    """Run meta-test once per probe kernel and score each result against ``hr``.

    ``kernel_distance`` is the L2 distance between the probe and true kernel
    grids (center-aligned, zero-padded to a common size).
    """
    border = scale if border is None else border
    rows = []
    for name, k in probes.items():
        sr = meta_test(lr, k, mode, scale, params, steps, alpha).sr
        rows.append(ProbeRow(name, psnr_y(sr, hr, border), _kernel_distance(k, true_kernel)))
    return rows


def _kernel_distance(a: Kernel, b: Kernel) -> float:
    n = max(a.size, b.size)

    def pad(k):
        p = (n - k.size) // 2
        return np.pad(k.weights, p)

    return float(np.linalg.norm(pad(a) - pad(b)))
