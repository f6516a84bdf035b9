"""Adam optimizer over named parameter lists.

Bias-corrected first/second moments, elementwise:

    m <- b1*m + (1-b1)*g        mhat = m / (1 - b1^t)
    v <- b2*v + (1-b2)*g^2      vhat = v / (1 - b2^t)
    p <- p - lr * mhat / (sqrt(vhat) + eps)

The epsilon sits outside the square root.  ``adam_step`` is functional over
the parameters (returns fresh Tensors) and updates the moment buffers in
place; the step counter increases strictly by one per call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .tensor import Tensor

Array = np.ndarray


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[Array] = field(default_factory=list)
    second_moment: list[Array] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float = 5e-4,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        return cls(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps, step_count=0,
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[Array],
              state: AdamState) -> list[Tensor]:
    """One Adam update; returns new parameter tensors aligned with params."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} params but {len(grads)} grads")
    if len(state.first_moment) != len(params):
        raise DimensionError(
            f"optimizer state tracks {len(state.first_moment)} params, got {len(params)}")
    for p, g, m in zip(params, grads, state.first_moment):
        if p.data.shape != g.shape or p.data.shape != m.shape:
            raise DimensionError(
                f"param/grad/state shapes differ: {p.data.shape}, {g.shape}, {m.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t

    updated: list[Tensor] = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        updated.append(Tensor(p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps)))
    return updated
