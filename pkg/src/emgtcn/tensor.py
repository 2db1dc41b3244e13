"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is sized for the gesture classifier: elementwise arithmetic,
matrix multiplication, reshape/transpose, ReLU, last-dimension softmax
and dilated causal 1-D convolution. Every op records its inputs and a
backward closure on the output node; ``Tensor.backward()`` replays the
resulting tape in reverse topological order and accumulates gradients
into every ``requires_grad`` ancestor.

Everything runs in 64-bit floats so finite-difference gradient checks
are meaningful. Data buffers are row-major numpy arrays; tensors are
treated as immutable once created (gradient buffers are the only thing
mutated after construction).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError, StateError, UsageError

__all__ = [
    "Tensor",
    "ComputationTape",
    "add",
    "mul",
    "matmul",
    "reshape",
    "transpose",
    "relu",
    "softmax_lastdim",
    "dilated_causal_conv1d",
    "linear",
    "sum_all",
    "make_op",
]


class Tensor:
    """n-dimensional float64 value, optionally tracked for gradients.

    ``data`` is always a C-contiguous (row-major) float64 array. ``grad``
    is ``None`` until a backward pass reaches this tensor.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._tape = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def backward(self) -> "ComputationTape":
        """Run reverse-mode accumulation from this scalar loss.

        The tape built on the first call is cached; calling again without
        ``tape.reset()`` is rejected so gradients cannot silently double.
        """
        if self.data.size != 1:
            raise UsageError(
                f"backward() needs a scalar loss; got shape {self.data.shape}"
            )
        if self._tape is None:
            self._tape = ComputationTape(self)
        self._tape.run()
        return self._tape


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class ComputationTape:
    """Topologically ordered record of the ops reachable from one root.

    ``nodes`` lists parents before children, so iterating it in reverse
    visits the graph in reverse topological order. ``run()`` may only be
    invoked once per ``reset()``.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = _topo_order(root)
        self.consumed = False

    def run(self):
        if self.consumed:
            raise StateError(
                "backward() already ran for this tape; call reset() before replaying"
            )
        self.consumed = True
        self.root.grad = np.ones_like(self.root.data)
        for node in reversed(self.nodes):
            if node._backward is None or node.grad is None:
                continue
            for parent, pgrad in zip(node._parents, node._backward(node.grad)):
                if pgrad is None:
                    continue
                if parent.grad is None:
                    parent.grad = pgrad.copy() if pgrad.base is not None else pgrad
                else:
                    parent.grad = parent.grad + pgrad

    def reset(self):
        """Clear all gradients so the tape can be replayed."""
        for node in self.nodes:
            node.grad = None
        self.consumed = False


def _topo_order(root: Tensor) -> list:
    """Iterative post-order DFS: parents appear before their consumers."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def make_op(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    """Create the output node of a primitive op.

    ``backward_fn(grad_out)`` must return one gradient array (or ``None``)
    per parent, in order. Recording is skipped entirely when no parent
    requires gradients.
    """
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _needs(parent: Tensor) -> bool:
    return parent.requires_grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- primitives --------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        ga = _unbroadcast(g, a.data.shape) if _needs(a) else None
        gb = _unbroadcast(g, b.data.shape) if _needs(b) else None
        return ga, gb

    return make_op(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if _needs(a) else None
        gb = _unbroadcast(g * a.data, b.data.shape) if _needs(b) else None
        return ga, gb

    return make_op(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. 2-D operands contract as m*k @ k*n -> m*n; extra
    leading axes are treated as batch dimensions (numpy stacking rules).
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul: cannot contract shapes {a.shape} and {b.shape}"
        )
    data = a.data @ b.data

    def backward(g):
        ga = gb = None
        if _needs(a):
            ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
        if _needs(b):
            gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return ga, gb

    return make_op(data, (a, b), backward)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(x.data.shape),)

    return make_op(x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return make_op(np.transpose(x.data, axes), (x,), backward)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return make_op(np.maximum(x.data, 0.0), (x,), backward)


def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last dimension, stabilised by max subtraction."""
    if x.data.size == 0 or x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(
            f"softmax_lastdim needs a nonempty last dimension; got shape {x.shape}"
        )
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return make_op(y, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        return (np.broadcast_to(g, x.data.shape),)

    return make_op(np.asarray(x.data.sum()), (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map along the last dimension: x @ weight + bias.

    ``x`` may have any number of leading dimensions (including none);
    ``weight`` is in*out, ``bias`` is (out,).
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear: input shape {x.shape} does not match weight shape {weight.shape}"
        )
    if bias.shape != (weight.shape[1],):
        raise DimensionError(
            f"linear: bias shape {bias.shape} does not match weight shape {weight.shape}"
        )
    data = x.data @ weight.data + bias.data
    n_in, n_out = weight.shape

    def backward(g):
        gx = gw = gb = None
        if _needs(x):
            gx = g @ weight.data.T
        if _needs(weight):
            gw = x.data.reshape(-1, n_in).T @ g.reshape(-1, n_out)
        if _needs(bias):
            gb = g.reshape(-1, n_out).sum(axis=0)
        return gx, gw, gb

    return make_op(data, (x, weight, bias), backward)


def dilated_causal_conv1d(
    x: Tensor, kernel: Tensor, bias: Tensor, dilation: int
) -> Tensor:
    """Causal 1-D convolution with dilated taps and per-channel bias.

    ``x`` is (channels_in, T) or (batch, channels_in, T); ``kernel`` is
    (channels_out, channels_in, k). The input is left-padded with
    (k-1)*dilation zeros so the output keeps length T and output t only
    reads inputs at positions <= t.
    """
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ConfigError(f"dilation must be a positive integer, got {dilation!r}")
    if kernel.ndim != 3 or kernel.size == 0:
        raise ConfigError(
            f"kernel must be channels_out*channels_in*k and nonempty, got shape {kernel.shape}"
        )
    if x.ndim not in (2, 3) or x.shape[-2] != kernel.shape[1]:
        raise DimensionError(
            f"conv1d: input shape {x.shape} does not match kernel shape {kernel.shape}"
        )
    c_out, _, k = kernel.shape
    if bias.shape != (c_out,):
        raise DimensionError(
            f"conv1d: bias shape {bias.shape} does not match {c_out} output channels"
        )
    t_len = x.shape[-1]
    pad = (k - 1) * int(dilation)
    pad_spec = [(0, 0)] * (x.ndim - 1) + [(pad, 0)]
    xp = np.pad(x.data, pad_spec)

    out = np.empty(x.shape[:-2] + (c_out, t_len))
    out[...] = bias.data[..., :, None]
    for i in range(k):
        out += np.einsum(
            "oi,...it->...ot", kernel.data[:, :, i], xp[..., :, i * dilation : i * dilation + t_len]
        )

    def backward(g):
        gx = gk = gb = None
        if _needs(x):
            gxp = np.zeros_like(xp)
            for i in range(k):
                gxp[..., :, i * dilation : i * dilation + t_len] += np.einsum(
                    "oi,...ot->...it", kernel.data[:, :, i], g
                )
            gx = gxp[..., :, pad:]
        if _needs(kernel):
            g3 = g.reshape(-1, c_out, t_len)
            xp3 = xp.reshape(-1, xp.shape[-2], xp.shape[-1])
            gk = np.empty_like(kernel.data)
            for i in range(k):
                gk[:, :, i] = np.einsum(
                    "bot,bit->oi", g3, xp3[:, :, i * dilation : i * dilation + t_len]
                )
        if _needs(bias):
            gb = g.reshape(-1, c_out, t_len).sum(axis=(0, 2))
        return gx, gk, gb

    return make_op(out, (x, kernel, bias), backward)
