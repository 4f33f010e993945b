"""Functional parameter updates: plain gradient descent and Adam."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, TypeVar

import numpy as np

from mzsr.autograd import Tensor, mul_scalar, sub

P = TypeVar("P")


def _rebuild(params, tensors: list[Tensor]):
    replace = getattr(params, "replace", None)
    return replace(tensors) if replace is not None else tensors


def sgd_update(params: P, grads: Sequence[Tensor], lr: float, first_order: bool = False) -> P:
    """Return ``params - lr * grads`` as new graph nodes.

    The inputs are untouched. When ``first_order`` is set the gradients are
    detached, so later losses see the step as a constant shift.
    """
    tensors = list(params)
    if len(tensors) != len(grads):
        raise ValueError(f"sgd_update: {len(tensors)} params but {len(grads)} gradients")
    new = []
    for i, (p, g) in enumerate(zip(tensors, grads)):
        if p.shape != g.shape:
            raise ValueError(f"sgd_update: param {i} has shape {p.shape}, gradient {g.shape}")
        if first_order:
            g = g.detach()
        new.append(sub(p, mul_scalar(g, lr)) if lr != 0 else p)
    return _rebuild(params, new)


@dataclass(frozen=True)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper) -> "AdamState":
        m = tuple(np.zeros(p.shape) for p in params)
        v = tuple(np.zeros(p.shape) for p in params)
        return cls(m=m, v=v, **hyper)


def adam_step(state: AdamState, params: P, grads: Sequence[Tensor], lr: float) -> tuple[AdamState, P]:
    """One bias-corrected Adam update. Never differentiated through."""
    tensors = list(params)
    if not (len(tensors) == len(grads) == len(state.m)):
        raise ValueError(
            f"adam_step: {len(tensors)} params, {len(grads)} gradients, {len(state.m)} moment slots"
        )
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for i, (p, g, m, v) in enumerate(zip(tensors, grads, state.m, state.v)):
        if not (p.shape == g.shape == m.shape):
            raise ValueError(f"adam_step: shape mismatch at slot {i}: {p.shape}, {g.shape}, {m.shape}")
        gd = g.data
        m = b1 * m + (1 - b1) * gd
        v = b2 * v + (1 - b2) * gd * gd
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_m.append(m)
        new_v.append(v)
        new_p.append(Tensor(p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps), requires_grad=True))
    new_state = AdamState(tuple(new_m), tuple(new_v), t, b1, b2, state.eps)
    return new_state, _rebuild(params, new_p)
