"""Plain residual CNN used for pretraining, meta-training and adaptation.

The network sees the bicubic-upscaled LR image and predicts a residual that
is added back to it: ``f(x) = x + body(x)``, with ReLU after every conv but
the last and no activation after the skip addition.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from mzsr.autograd import Tensor, add, conv2d, relu


@dataclass(frozen=True)
class ArchDescriptor:
    depth: int = 8
    features: int = 64
    kernel_size: int = 3
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.features < 1:
            raise ValueError(f"features must be >= 1, got {self.features}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.in_channels < 1 or self.out_channels != self.in_channels:
            raise ValueError("residual network needs in_channels == out_channels >= 1")

    def layer_shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        k = self.kernel_size
        chans = [self.in_channels] + [self.features] * (self.depth - 1) + [self.out_channels]
        return [((o, i, k, k), (o,)) for i, o in zip(chans[:-1], chans[1:])]


FULL_ARCH = ArchDescriptor()


@dataclass(frozen=True)
class ModelParams:
    """Flat tuple of tensors ``(w0, b0, w1, b1, ...)`` plus the architecture."""

    arch: ArchDescriptor
    tensors: tuple[Tensor, ...]

    def __post_init__(self):
        shapes = [s for pair in self.arch.layer_shapes() for s in pair]
        got = [t.shape for t in self.tensors]
        if got != shapes:
            raise ValueError(f"tensor shapes {got} do not match architecture {shapes}")

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def __getitem__(self, i: int) -> Tensor:
        return self.tensors[i]

    def replace(self, tensors: Sequence[Tensor]) -> "ModelParams":
        return ModelParams(self.arch, tuple(tensors))

    def layers(self) -> list[tuple[Tensor, Tensor]]:
        return list(zip(self.tensors[0::2], self.tensors[1::2]))

    def detached(self) -> "ModelParams":
        """Fresh leaves with the same values, ready to be differentiated."""
        return self.replace([Tensor(t.data, requires_grad=True) for t in self.tensors])


def build(arch: ArchDescriptor, seed: int, output_gain: float = 1.0) -> ModelParams:
    """He-normal weights, zero biases, deterministic per seed.

    ``output_gain`` scales the last conv only. Small values start the residual
    body near zero, which keeps narrow networks from killing every relu while
    they unlearn a large random residual.
    """
    rng = np.random.default_rng(seed)
    tensors = []
    shapes = arch.layer_shapes()
    for i, (wshape, bshape) in enumerate(shapes):
        fan_in = wshape[1] * wshape[2] * wshape[3]
        w = rng.standard_normal(wshape) * np.sqrt(2.0 / fan_in)
        if i == len(shapes) - 1:
            w = w * output_gain
        tensors.append(Tensor(w, requires_grad=True))
        tensors.append(Tensor(np.zeros(bshape), requires_grad=True))
    return ModelParams(arch, tuple(tensors))


def forward(params: ModelParams, x: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[1] != params.arch.in_channels:
        raise ValueError(
            f"forward: expected N x {params.arch.in_channels} x H x W input, got {x.shape}"
        )
    pad = params.arch.kernel_size // 2
    layers = params.layers()
    h = x
    for i, (w, b) in enumerate(layers):
        h = conv2d(h, w, b, padding=pad)
        if i < len(layers) - 1:
            h = relu(h)
    return add(x, h)


def param_count(params: ModelParams) -> int:
    return sum(t.size for t in params)
