"""Feed-forward networks over a flat parameter store.

All trainable arrays of a model live in one contiguous float64 vector
(with a parallel gradient vector); each layer holds views into it. This
keeps the optimizer a handful of whole-vector operations and makes
checkpointing a name -> array dump.

Initialization is the symmetric uniform scheme
U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))] with zero biases,
drawn from a seeded generator so models are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ShapeMismatch
from . import tensor as T


class ParamStore:
    """Flat parameter/gradient storage with named views."""

    def __init__(self):
        self._specs: List[Tuple[str, Tuple[int, ...]]] = []
        self._offsets: Dict[str, Tuple[int, Tuple[int, ...]]] = {}
        self.values: Optional[np.ndarray] = None
        self.grads: Optional[np.ndarray] = None

    def register(self, name: str, shape: Tuple[int, ...]) -> str:
        if self.values is not None:
            raise RuntimeError("store already finalized")
        if name in self._offsets:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._offsets[name] = (sum(int(np.prod(s)) for _, s in self._specs),
                               shape)
        self._specs.append((name, shape))
        return name

    def finalize(self) -> None:
        size = sum(int(np.prod(s)) for _, s in self._specs)
        self.values = np.zeros(size)
        self.grads = np.zeros(size)

    @property
    def size(self) -> int:
        return 0 if self.values is None else self.values.size

    def view(self, name: str) -> np.ndarray:
        offset, shape = self._offsets[name]
        count = int(np.prod(shape))
        return self.values[offset:offset + count].reshape(shape)

    def grad_view(self, name: str) -> np.ndarray:
        offset, shape = self._offsets[name]
        count = int(np.prod(shape))
        return self.grads[offset:offset + count].reshape(shape)

    def leaf(self, name: str) -> T.Tensor:
        """Trainable tensor whose gradient accumulates into the flat buffer."""
        return T.Tensor(self.view(name), requires_grad=True,
                        grad_buffer=self.grad_view(name))

    def zero_grad(self) -> None:
        self.grads[:] = 0.0

    def names(self) -> List[str]:
        return [name for name, _ in self._specs]

    def named_arrays(self) -> Dict[str, np.ndarray]:
        return {name: self.view(name).copy() for name in self.names()}

    def load_named_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, _ in self._specs:
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            target = self.view(name)
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != target.shape:
                raise ShapeMismatch(
                    f"parameter {name!r}: stored {value.shape}, "
                    f"expected {target.shape}")
            target[:] = value


@dataclass(frozen=True)
class Mlp:
    """Dense feed-forward block: GELU on hidden layers, linear output."""

    weight_names: Tuple[str, ...]
    bias_names: Tuple[str, ...]
    in_dim: int
    out_dim: int

    @staticmethod
    def build(store: ParamStore, prefix: str, dims: Sequence[int]) -> "Mlp":
        """Register layers for the given dimension chain, e.g. [48, 16, 16]."""
        weights, biases = [], []
        for k in range(len(dims) - 1):
            weights.append(store.register(f"{prefix}.{k}.W",
                                          (dims[k], dims[k + 1])))
            biases.append(store.register(f"{prefix}.{k}.b", (dims[k + 1],)))
        return Mlp(tuple(weights), tuple(biases), dims[0], dims[-1])

    def forward(self, store: ParamStore, x: T.Tensor) -> T.Tensor:
        if x.data.shape[-1] != self.in_dim:
            raise ShapeMismatch(
                f"input width {x.data.shape[-1]}, expected {self.in_dim}")
        last = len(self.weight_names) - 1
        for k, (wn, bn) in enumerate(zip(self.weight_names, self.bias_names)):
            x = T.linear(x, store.leaf(wn), store.leaf(bn))
            if k < last:
                x = T.gelu(x)
        return x

    def parameter_count(self, store: ParamStore) -> int:
        return sum(store.view(n).size
                   for n in self.weight_names + self.bias_names)


def glorot_init(store: ParamStore, rng: np.random.Generator) -> None:
    """Fill every weight with the symmetric uniform scheme, biases zero."""
    for name in store.names():
        view = store.view(name)
        if view.ndim == 2:
            fan_in, fan_out = view.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            view[:] = rng.uniform(-bound, bound, size=view.shape)
        else:
            view[:] = 0.0
