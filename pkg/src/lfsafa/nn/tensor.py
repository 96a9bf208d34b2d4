"""Dense tensor value type and the gradient tape that records operations on it."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NonFiniteError, ShapeError, TapeError

_ACTIVE_TAPES: list["GradTape"] = []


class Tensor:
    """A numpy array plus the bookkeeping autodiff needs.

    Float data defaults to float32. Pass float64 arrays explicitly to run in
    f64 accumulation mode (used for gradient checking).
    """

    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float32)
        else:
            arr = np.asarray(data, dtype=dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item()", "a single element", self.shape)
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def check_finite(self) -> "Tensor":
        """Validation hook: raise if any element is NaN or Inf."""
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(self.name or "tensor")
        return self

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}{flag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    op: str
    out: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class GradTape:
    """Ordered record of the differentiable operations executed inside ``with``.

    Only operations with at least one input requiring a gradient are
    recorded, so frozen weights applied to plain data leave no trace.
    """

    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> "GradTape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor, loss_grad=None) -> dict[Tensor, np.ndarray]:
        return backward(self, loss, loss_grad)


def record(op: str, out: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    """Wrap ``out`` in a Tensor and log the op on the innermost active tape."""
    if _ACTIVE_TAPES and any(t.requires_grad for t in inputs):
        result = Tensor(out, requires_grad=True)
        _ACTIVE_TAPES[-1].nodes.append(Node(op, result, tuple(inputs), vjp))
        return result
    return Tensor(out)


def backward(tape: GradTape, loss: Tensor, loss_grad=None) -> dict[Tensor, np.ndarray]:
    """Reverse-mode sweep over ``tape``.

    Returns a mapping from every leaf tensor that requires a gradient
    (parameters and inputs) to its accumulated gradient. Tensors with
    ``requires_grad=False`` never get an entry.
    """
    if not tape.nodes:
        raise TapeError("backward called on an empty tape; run a forward pass under the tape first")
    if loss.size != 1 and loss_grad is None:
        raise ShapeError("backward loss", "a scalar", loss.shape)
    if loss_grad is None:
        seed = np.ones_like(loss.data)
    else:
        seed = np.asarray(loss_grad.data if isinstance(loss_grad, Tensor) else loss_grad, dtype=loss.dtype)
        if seed.shape != loss.shape:
            raise ShapeError("backward loss_grad", loss.shape, seed.shape)

    grads: dict[int, np.ndarray] = {id(loss): seed}
    produced = {id(node.out) for node in tape.nodes}
    leaves: dict[int, Tensor] = {}

    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key not in produced:
                leaves[key] = inp
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi

    if id(loss) not in produced and loss.requires_grad:
        leaves[id(loss)] = loss
    return {t: grads[k] for k, t in leaves.items() if k in grads}
