from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from metanerv.types.errors import DetachedTensorError, NonFiniteError, NotScalarError

BackwardRule = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Dense float64 array that may participate in a gradient tape.

    Tensors created with :meth:`Tape.watch` are leaves that receive gradients.
    Tensors built with :meth:`Tensor.constant` never do; operations on constants
    run eagerly without recording anything.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape", "node_id")

    def __init__(
        self,
        data: np.ndarray,
        *,
        requires_grad: bool = False,
        tape: Tape | None = None,
        node_id: int | None = None,
    ) -> None:
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.node_id = node_id

    @classmethod
    def constant(cls, value: object) -> Tensor:
        return cls(np.array(value, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"<Tensor shape={self.shape} requires_grad={self.requires_grad} id={self.node_id}>"

    # Arithmetic sugar; the rules live in metanerv.engine.ops.
    def __add__(self, other: Tensor | float) -> Tensor:
        from metanerv.engine import ops

        return ops.add(self, other) if isinstance(other, Tensor) else ops.shift(self, other)

    __radd__ = __add__

    def __sub__(self, other: Tensor | float) -> Tensor:
        from metanerv.engine import ops

        return ops.sub(self, other) if isinstance(other, Tensor) else ops.shift(self, -other)

    def __rsub__(self, other: float) -> Tensor:
        from metanerv.engine import ops

        return ops.shift(ops.scale(self, -1.0), other)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from metanerv.engine import ops

        return ops.mul(self, other) if isinstance(other, Tensor) else ops.scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Tensor | float) -> Tensor:
        from metanerv.engine import ops

        return ops.div(self, other) if isinstance(other, Tensor) else ops.scale(self, 1.0 / other)

    def __neg__(self) -> Tensor:
        from metanerv.engine import ops

        return ops.scale(self, -1.0)

    def sum(self) -> Tensor:
        from metanerv.engine import ops

        return ops.sum_all(self)

    def mean(self) -> Tensor:
        from metanerv.engine import ops

        return ops.mean(self)

    def reshape(self, shape: tuple[int, ...]) -> Tensor:
        from metanerv.engine import ops

        return ops.reshape(self, shape)


@dataclass(slots=True)
class TapeNode:
    inputs: tuple[int | None, ...]
    output: int
    backward: BackwardRule


@dataclass(slots=True)
class Tape:
    """Define-by-run record of operations; rebuilt for every forward pass."""

    nodes: list[TapeNode] = field(default_factory=list)
    next_id: int = 0
    _tensors: dict[int, Tensor] = field(default_factory=dict, repr=False)

    def watch(self, value: np.ndarray | Tensor) -> Tensor:
        """Register a leaf tensor whose gradient backward() should populate."""
        data = value.data if isinstance(value, Tensor) else value
        leaf = Tensor(np.array(data, dtype=np.float64), requires_grad=True, tape=self)
        self._register(leaf)
        return leaf

    def record(
        self,
        data: np.ndarray,
        inputs: Sequence[Tensor],
        backward: BackwardRule,
        operation: str,
    ) -> Tensor:
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"{operation} produced non-finite values")
        out = Tensor(data, requires_grad=True, tape=self)
        self._register(out)
        ids = tuple(t.node_id if t.requires_grad else None for t in inputs)
        self.nodes.append(TapeNode(inputs=ids, output=out.node_id, backward=backward))
        return out

    def _register(self, tensor: Tensor) -> None:
        tensor.node_id = self.next_id
        self._tensors[self.next_id] = tensor
        self.next_id += 1

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires_grad tensor recorded on ``tape``."""
    if loss.size != 1 or loss.ndim != 0:
        raise NotScalarError(f"loss must be a scalar, got shape {loss.shape}")
    if loss.tape is not tape or loss.node_id is None:
        raise DetachedTensorError("loss was not produced through this tape")

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones((), dtype=np.float64)}
    for node in reversed(tape.nodes):
        upstream = grads.get(node.output)
        if upstream is None:
            continue
        for input_id, local in zip(node.inputs, node.backward(upstream), strict=True):
            if input_id is None or local is None:
                continue
            if input_id in grads:
                grads[input_id] = grads[input_id] + local
            else:
                grads[input_id] = local

    for tensor in tape.tensors():
        if tensor.requires_grad:
            found = grads.get(tensor.node_id)
            tensor.grad = np.zeros_like(tensor.data) if found is None else np.asarray(found)


def active_tape(*inputs: Tensor) -> Tape | None:
    """Return the tape shared by the gradient-carrying inputs, if any."""
    tape: Tape | None = None
    for tensor in inputs:
        if not tensor.requires_grad:
            continue
        if tape is None:
            tape = tensor.tape
        elif tensor.tape is not tape:
            raise DetachedTensorError("operands were recorded on different tapes")
    return tape
