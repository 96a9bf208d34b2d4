"""Named-parameter bookkeeping shared by the backbone and the adaptation module."""
from __future__ import annotations

import copy
import hashlib

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


class ParameterSet:
    """Mixin: subclasses implement ``named_parameters()`` in a fixed order."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing, extra = sorted(set(own) - set(state)), sorted(set(state) - set(own))
            raise ShapeError("parameter names", "missing none, extra none", f"missing {missing}, extra {extra}")
        for name, t in own.items():
            arr = np.asarray(state[name])
            if arr.shape != t.shape:
                raise ShapeError(f"parameter {name}", t.shape, arr.shape)
            t.data = arr.astype(t.dtype, copy=True)

    def checksum(self) -> str:
        """SHA-256 over every parameter's name, shape and raw bytes."""
        h = hashlib.sha256()
        for name, t in self.named_parameters():
            h.update(name.encode())
            h.update(str(t.shape).encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.parameters()))

    def astype(self, dtype):
        """Deep copy with every parameter cast to ``dtype`` (e.g. float64 for gradient checks)."""
        other = copy.deepcopy(self)
        for _, t in other.named_parameters():
            t.data = t.data.astype(dtype)
        return other
