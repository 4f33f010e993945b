"""Bicubic pretraining and meta-transfer learning across blur-kernel tasks."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from mzsr.autograd import Tensor, backward, l1_loss, mul_scalar, add
from mzsr.config import RunConfig
from mzsr.degrade import DegradeSpec, bicubic_resize, degrade
from mzsr.kernels import KernelSpec, rasterize, sample_kernel_params
from mzsr.network import ModelParams, build, forward
from mzsr.optim import AdamState, adam_step, sgd_update

log = logging.getLogger(__name__)

Corpus = Sequence[np.ndarray]
ProgressFn = Callable[[int, float], None]
CheckpointFn = Callable[[int, ModelParams], None]


class MetaTask(Protocol):
    def train_loss(self, params) -> Tensor: ...

    def test_loss(self, params) -> Tensor: ...


def to_nchw(batch: Sequence[np.ndarray]) -> np.ndarray:
    return np.ascontiguousarray(np.stack(batch).transpose(0, 3, 1, 2))


@dataclass(frozen=True)
class SRTask:
    """One blur kernel; LR inputs already bicubic-upscaled to patch size (NCHW)."""

    kernel: KernelSpec
    mode: str
    scale: int
    train_lr: np.ndarray
    train_hr: np.ndarray
    test_lr: np.ndarray
    test_hr: np.ndarray

    def train_loss(self, params: ModelParams) -> Tensor:
        return l1_loss(forward(params, Tensor(self.train_lr)), Tensor(self.train_hr))

    def test_loss(self, params: ModelParams) -> Tensor:
        return l1_loss(forward(params, Tensor(self.test_lr)), Tensor(self.test_hr))


def _check_corpus(corpus: Corpus, patch: int) -> None:
    if len(corpus) == 0:
        raise ValueError("image corpus is empty")
    smallest = min(min(img.shape[:2]) for img in corpus)
    if patch > smallest:
        raise ValueError(f"patch {patch} is larger than the smallest image side {smallest}")


def random_crop(img: np.ndarray, patch: int, rng: np.random.Generator) -> np.ndarray:
    y = rng.integers(0, img.shape[0] - patch + 1)
    x = rng.integers(0, img.shape[1] - patch + 1)
    return img[y : y + patch, x : x + patch]


def bicubic_pair(hr: np.ndarray, scale: int) -> np.ndarray:
    """Known bicubic degradation, then bicubic back to the HR grid."""
    h, w = hr.shape[:2]
    return bicubic_resize(bicubic_resize(hr, h // scale, w // scale), h, w)


def pretrain(
    corpus: Corpus,
    cfg: RunConfig,
    init: Optional[ModelParams] = None,
    progress: Optional[ProgressFn] = None,
) -> ModelParams:
    """Fit the network to bicubic-degraded patches with Adam on the L1 loss."""
    _check_corpus(corpus, cfg.patch)
    params = init if init is not None else build(cfg.arch, cfg.seed, cfg.init_output_gain)
    if cfg.pretrain_iters == 0:
        return params
    rng = np.random.default_rng([cfg.seed, 1])
    state = AdamState.zeros_like(params)
    for it in range(cfg.pretrain_iters):
        hr = [random_crop(corpus[rng.integers(len(corpus))], cfg.patch, rng) for _ in range(cfg.pretrain_batch)]
        lr = [bicubic_pair(p, cfg.scale) for p in hr]
        loss = l1_loss(forward(params, Tensor(to_nchw(lr))), Tensor(to_nchw(hr)))
        grads = backward(loss, list(params))
        state, params = adam_step(state, params, grads, cfg.pretrain_lr)
        if progress is not None:
            progress(it, loss.item())
    return params


def _disjoint_crops(corpus: Corpus, n: int, patch: int, rng: np.random.Generator) -> list[np.ndarray]:
    taken: dict[int, list[tuple[int, int]]] = {}
    crops = []
    for _ in range(n):
        for _attempt in range(1000):
            i = int(rng.integers(len(corpus)))
            img = corpus[i]
            y = int(rng.integers(0, img.shape[0] - patch + 1))
            x = int(rng.integers(0, img.shape[1] - patch + 1))
            if all(abs(y - oy) >= patch or abs(x - ox) >= patch for oy, ox in taken.get(i, [])):
                taken.setdefault(i, []).append((y, x))
                crops.append(img[y : y + patch, x : x + patch])
                break
        else:
            raise ValueError(f"could not place {n} non-overlapping {patch}px crops in the corpus")
    return crops


def sample_task(corpus: Corpus, cfg: RunConfig, rng: np.random.Generator) -> SRTask:
    """Draw a kernel, then disjoint HR crops for the task-train and task-test splits."""
    _check_corpus(corpus, cfg.patch)
    scales = cfg.scales()
    scale = int(rng.choice(scales)) if len(scales) > 1 else scales[0]
    spec = sample_kernel_params(scale, rng, size=cfg.blur_size)
    dspec = DegradeSpec(rasterize(spec), scale, cfg.mode)
    hr = _disjoint_crops(corpus, 2 * cfg.pairs_per_split, cfg.patch, rng)
    lr = [bicubic_resize(degrade(p, dspec), cfg.patch, cfg.patch) for p in hr]
    n = cfg.pairs_per_split
    return SRTask(
        kernel=spec,
        mode=cfg.mode,
        scale=scale,
        train_lr=to_nchw(lr[:n]),
        train_hr=to_nchw(hr[:n]),
        test_lr=to_nchw(lr[n:]),
        test_hr=to_nchw(hr[n:]),
    )


def inner_adapt(params, task: MetaTask, alpha: float, steps: int, first_order: bool = False):
    """Chain ``steps`` gradient steps on the task-train loss.

    Returns the adapted parameters after each step and the task-train loss
    evaluated before each step. The chain stays differentiable with respect
    to ``params`` unless ``first_order`` is set.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    adapted, losses = [], []
    theta = params
    for _ in range(steps):
        loss = task.train_loss(theta)
        grads = backward(loss, list(theta), create_graph=not first_order)
        theta = sgd_update(theta, grads, alpha, first_order=first_order)
        adapted.append(theta)
        losses.append(loss.item())
    return adapted, losses


def step_loss_weights(meta_iter: int, steps: int, horizon: float) -> np.ndarray:
    """Per-step loss weights: uniform at the start, all mass on the last step after ``horizon``."""
    if meta_iter < 0:
        raise ValueError(f"meta_iter must be >= 0, got {meta_iter}")
    progress = 1.0 if horizon <= 0 else min(meta_iter / horizon, 1.0)
    w = np.full(steps, (1.0 - progress) / steps)
    w[-1] = 1.0 - w[:-1].sum()
    return w


def cfg_loss_weights(meta_iter: int, cfg: RunConfig) -> np.ndarray:
    return step_loss_weights(meta_iter, cfg.unroll_steps, cfg.weight_decay_frac * cfg.meta_iters)


def meta_objective(
    params,
    tasks: Sequence[MetaTask],
    alpha: float,
    steps: int,
    weights: Sequence[float],
    first_order: bool = False,
) -> Tensor:
    """Weighted task-test losses of every adapted step, summed over tasks in order."""
    if len(tasks) == 0:
        raise ValueError("meta_objective needs at least one task")
    if len(weights) != steps:
        raise ValueError(f"{len(weights)} weights for {steps} steps")
    total = None
    for task in tasks:
        adapted, _ = inner_adapt(params, task, alpha, steps, first_order)
        for theta, w in zip(adapted, weights):
            if w == 0:
                continue
            term = mul_scalar(task.test_loss(theta), float(w))
            total = term if total is None else add(total, term)
    return total


def meta_optimize(
    params,
    sample_tasks: Callable[[int], Sequence[MetaTask]],
    iters: int,
    alpha: float,
    beta: float,
    steps: int,
    weights: Callable[[int], Sequence[float]],
    first_order: bool = False,
    progress: Optional[ProgressFn] = None,
    checkpoint: Optional[CheckpointFn] = None,
):
    """Outer loop: meta-gradient of the objective, one Adam step per iteration."""
    state = AdamState.zeros_like(params)
    every = max(1, iters // 10)
    for it in range(iters):
        loss = meta_objective(params, sample_tasks(it), alpha, steps, weights(it), first_order)
        grads = backward(loss, list(params))
        state, params = adam_step(state, params, grads, beta)
        if progress is not None:
            progress(it, loss.item())
        if checkpoint is not None and ((it + 1) % every == 0 or it + 1 == iters):
            checkpoint(it + 1, params)
    return params


def meta_train(
    params: ModelParams,
    corpus: Corpus,
    cfg: RunConfig,
    progress: Optional[ProgressFn] = None,
    checkpoint: Optional[CheckpointFn] = None,
) -> ModelParams:
    """Meta-transfer learning from a pretrained initialization."""
    _check_corpus(corpus, cfg.patch)
    rng = np.random.default_rng([cfg.seed, 2])

    def tasks(_it):
        return [sample_task(corpus, cfg, rng) for _ in range(cfg.task_batch)]

    return meta_optimize(
        params.detached(),
        tasks,
        cfg.meta_iters,
        cfg.alpha,
        cfg.beta,
        cfg.unroll_steps,
        lambda it: cfg_loss_weights(it, cfg),
        first_order=cfg.first_order,
        progress=progress,
        checkpoint=checkpoint,
    )
