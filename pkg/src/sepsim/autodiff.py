"""Dense-tensor numerics with reverse-mode automatic differentiation.

A Tensor wraps a float64 numpy array. Operations link outputs to their
parents with a backward rule; ``Tape.from_output`` recovers the graph in
topological order and ``backward`` runs the reverse sweep exactly once per
node. There is no global state: graphs are rebuilt per step and discarded.

Float64 everywhere; desk-scale problem sizes make precision cheaper than
chasing drift.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "zero_grad",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "take_slice",
    "gather_rows",
    "where",
    "clip",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "softmax",
    "layer_norm",
    "mean",
    "tsum",
    "bce_with_logits",
    "SGD",
    "finite_diff_check",
    "FiniteDiffReport",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "sepsim-checkpoint"
CHECKPOINT_VERSION = 1


class Tensor:
    """N-d float64 array with optional gradient tracking.

    ``trainable`` marks parameters an optimizer may update; it implies
    ``requires_grad``. Constants built from raw data track nothing and
    add no graph edges.
    """

    __slots__ = ("data", "grad", "trainable", "requires_grad", "name",
                 "_parents", "_backward_rule")

    def __init__(self, data, trainable: bool = False,
                 requires_grad: Optional[bool] = None,
                 name: Optional[str] = None,
                 parents: tuple = (),
                 backward_rule: Optional[Callable] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.trainable = bool(trainable)
        if requires_grad is None:
            requires_grad = self.trainable
        self.requires_grad = bool(requires_grad) or self.trainable
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents = parents
        self._backward_rule = backward_rule

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = self.name or ("param" if self.trainable else "tensor")
        return f"Tensor({tag}, shape={self.shape})"

    # Operator sugar; scalars and arrays are lifted to constants.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _track(data: np.ndarray, parents: Sequence[Tensor],
           rule: Callable) -> Tensor:
    """Create an op output, recording edges only when a parent needs grads."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents),
                      backward_rule=rule)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Tape and backward pass
# ---------------------------------------------------------------------------

@dataclass
class Tape:
    """Recorded operations of one graph, parents before children."""

    nodes: list = field(default_factory=list)

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        return cls(nodes=order)

    def backward(self, output: Tensor) -> None:
        if output.data.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
        output.grad = np.ones_like(output.data)
        for node in reversed(self.nodes):
            if node._backward_rule is None or node.grad is None:
                continue
            for parent, grad in zip(node._parents, node._backward_rule(node.grad)):
                if grad is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = grad.copy() if grad.base is not None else grad
                else:
                    parent.grad = parent.grad + grad


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; gradients accumulate in ``.grad``."""
    Tape.from_output(loss).backward(loss)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Elementwise and structural operations
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _track(out, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _track(out, (a, b), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def rule(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return _track(out, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    return _track(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch semantics; operands must be >= 2-d."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs 2-d or higher operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def rule(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _track(out, (a, b), rule)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; default swaps the last two."""
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)
    return _track(out, (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out = a.data.reshape(shape)
    return _track(out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def rule(g):
        grads = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            grads.append(g[tuple(index)])
        return tuple(grads)

    return _track(out, tuple(tensors), rule)


def take_slice(a: Tensor, key) -> Tensor:
    """Basic (non-fancy) slicing; backward scatters into zeros."""
    out = a.data[key]

    def rule(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _track(out, (a,), rule)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Look up rows of a (V, D) table by an integer id array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def rule(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (gt,)

    return _track(out, (table,), rule)


def where(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise select with a constant boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data)

    def rule(g):
        return (_unbroadcast(g * mask, a.shape),
                _unbroadcast(g * ~mask, b.shape))

    return _track(out, (a, b), rule)


def clip(a: Tensor, lo, hi) -> Tensor:
    """Projection onto [lo, hi]; gradient passes only where unclipped."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)
    return _track(out, (a,), lambda g: (g * inside,))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    active = a.data > 0
    return _track(out, (a,), lambda g: (g * active,))


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    return _track(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _track(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    return _track(out, (a,), lambda g: (g / a.data,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Shift-invariant softmax (row max subtracted before exponentiation)."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _track(out, (a,), rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gain.data * xhat + bias.data

    def rule(g):
        ggain = _unbroadcast(g * xhat, gain.shape)
        gbias = _unbroadcast(g, bias.shape)
        gx_hat = g * gain.data
        n = x.shape[-1]
        gx = inv * (gx_hat
                    - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True) / n)
        return gx, ggain, gbias

    return _track(out, (x, gain, bias), rule)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in _axes_tuple(axis, a.ndim)])

    def rule(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, _axes_tuple(axis, a.ndim))
        return (np.broadcast_to(g, a.shape) / count,)

    return _track(out, (a,), rule)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def rule(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, _axes_tuple(axis, a.ndim))
        return (np.broadcast_to(g, a.shape).copy(),)

    return _track(out, (a,), rule)


def _axes_tuple(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy, fused for stability.

    loss = mean( max(z, 0) - z*y + log(1 + exp(-|z|)) )
    """
    y = np.asarray(targets, dtype=np.float64)
    z = logits.data
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = np.array(loss.mean())

    def rule(g):
        return (g * (_stable_sigmoid(z) - y) / z.size,)

    return _track(out, (logits,), rule)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class SGD:
    """Stochastic gradient descent with classical momentum."""

    def __init__(self, params: Mapping[str, Tensor] | Sequence[Tensor],
                 lr: float = 1e-2, momentum: float = 0.9):
        if isinstance(params, Mapping):
            params = list(params.values())
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v


# ---------------------------------------------------------------------------
# Finite-difference verification harness
# ---------------------------------------------------------------------------

@dataclass
class FiniteDiffReport:
    per_param: dict
    max_relative_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tol


def finite_diff_check(loss_fn: Callable[[], Tensor],
                      params: Mapping[str, Tensor],
                      h: float = 1e-5,
                      tol: float = 1e-4,
                      samples_per_param: int = 5,
                      seed: int = 0) -> FiniteDiffReport:
    """Compare reverse-mode gradients to central finite differences.

    ``loss_fn`` must rebuild the graph from the live parameter data on every
    call. Large parameters are probed at ``samples_per_param`` seeded
    coordinates; tiny ones exhaustively.
    """
    rng = np.random.default_rng(seed)
    zero_grad(params.values())
    loss = loss_fn()
    backward(loss)
    analytic = {name: (None if p.grad is None else p.grad.copy())
                for name, p in params.items()}

    per_param: dict[str, float] = {}
    worst = 0.0
    for name, p in params.items():
        grad = analytic[name]
        if grad is None:
            grad = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= samples_per_param else rng.choice(
            n, size=samples_per_param, replace=False)
        err = 0.0
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            hi = loss_fn().item()
            flat[i] = keep - h
            lo = loss_fn().item()
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * h)
            a = grad.reshape(-1)[i]
            err = max(err, abs(a - numeric) / max(abs(a), abs(numeric), 1e-6))
        per_param[name] = err
        worst = max(worst, err)
    return FiniteDiffReport(per_param=per_param, max_relative_error=worst, tol=tol)


# ---------------------------------------------------------------------------
# Checkpoints: JSON of named tensors with shapes, versioned header
# ---------------------------------------------------------------------------

def save_checkpoint(path, tensors: Mapping[str, Tensor], extra: Optional[dict] = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "extra": extra or {},
        "tensors": {
            name: {
                "shape": list(t.shape),
                "trainable": t.trainable,
                "data": t.data.reshape(-1).tolist(),
            }
            for name, t in tensors.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a checkpoint file: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    tensors = {}
    for name, spec in doc["tensors"].items():
        data = np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
        tensors[name] = Tensor(data, trainable=bool(spec.get("trainable")))
    return tensors, doc.get("extra", {})
