"""Parameter containers shared by the embedding and the transformer.

Containers hold live Tensors and know how to enumerate them under stable
dotted names ("mlp.2.weight") and how to rebind themselves from a name ->
Tensor mapping after an optimizer step.  The enumeration order is fixed by
construction, which makes checkpoint layouts and optimizer state positional.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError
from .tensor import Tensor, conv2d, linear, matmul, uniform_init, zeros


@dataclass
class LinearLayer:
    weight: Tensor                 # (n_in, n_out)
    bias: Optional[Tensor] = None

    def __call__(self, x: Tensor) -> Tensor:
        if self.bias is None:
            return matmul(x, self.weight)
        return linear(x, self.weight, self.bias)

    def items(self, prefix: str):
        yield prefix + ".weight", self.weight
        if self.bias is not None:
            yield prefix + ".bias", self.bias

    def rebind(self, prefix: str, store: dict):
        self.weight = store[prefix + ".weight"]
        if self.bias is not None:
            self.bias = store[prefix + ".bias"]


@dataclass
class ConvLayer:
    kernel: Tensor   # (c_out, c_in, k, k)
    bias: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.kernel, self.bias)

    def items(self, prefix: str):
        yield prefix + ".kernel", self.kernel
        yield prefix + ".bias", self.bias

    def rebind(self, prefix: str, store: dict):
        self.kernel = store[prefix + ".kernel"]
        self.bias = store[prefix + ".bias"]


def init_linear(rng: np.random.Generator, n_in: int, n_out: int,
                bias: bool = True) -> LinearLayer:
    weight = uniform_init(rng, (n_in, n_out), n_in, n_out)
    return LinearLayer(weight, zeros((n_out,)) if bias else None)


def init_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int) -> ConvLayer:
    kernel = uniform_init(rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k)
    return ConvLayer(kernel, zeros((c_out,)))


def items_of(layers, prefix: str):
    """Enumerate (name, tensor) pairs of a layer sequence."""
    for i, layer in enumerate(layers):
        yield from layer.items(f"{prefix}.{i}")


def rebind_all(layers, prefix: str, store: dict):
    for i, layer in enumerate(layers):
        layer.rebind(f"{prefix}.{i}", store)


def check_unique_names(pairs) -> list:
    out = list(pairs)
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ContractError(f"duplicate parameter names: {dupes}")
    return out
