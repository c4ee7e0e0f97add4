"""Minimal reverse-mode autodiff over dense float64 arrays.

Each operation records its parents and a vector-Jacobian closure on the
output node; `backward` walks the graph once in reverse topological order.
Gradients only flow into nodes marked as tracked (parameters and anything
computed from them), so constant inputs such as labels or distance-map
targets cost nothing.

Convolution layout: feature tensors are (channels, depth, height, width).
conv3 is a same-padding stride-1 cross-correlation with an odd cubic kernel;
down2 / up2 are the non-overlapping kernel-2 stride-2 convolution and
transposed convolution used for resolution changes.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, GraphError, LifecycleError


class DiffTensor:
    __slots__ = ("data", "grad", "_parents", "_vjp", "tracked", "_consumed")

    def __init__(self, data, parents=(), vjp=None, tracked=True):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._vjp = vjp
        self.tracked = tracked
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"DiffTensor(shape={self.data.shape}, tracked={self.tracked})"


def constant(data) -> DiffTensor:
    """Leaf that never receives gradient."""
    return DiffTensor(data, tracked=False)


def parameter(data) -> DiffTensor:
    return DiffTensor(data, tracked=True)


def _accumulate(node: DiffTensor, grad: np.ndarray) -> None:
    if not node.tracked:
        return
    if node.grad is None:
        node.grad = np.zeros_like(node.data)
    node.grad += grad


def _make(data, parents, vjp) -> DiffTensor:
    tracked = any(p.tracked for p in parents)
    return DiffTensor(data, parents, vjp if tracked else None, tracked)


def topo_order(root: DiffTensor) -> list[DiffTensor]:
    """Iterative postorder; returns nodes so that every parent precedes its
    children."""
    order: list[DiffTensor] = []
    seen: set[int] = set()
    stack: list[tuple[DiffTensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: DiffTensor) -> None:
    """Reverse sweep from a scalar node, accumulating grads into tracked
    leaves. A node can only be swept once; free_graph afterwards to release
    closures."""
    if loss.data.shape != ():
        raise ContractError(f"backward needs a scalar, got shape {loss.data.shape}")
    if loss._consumed:
        raise LifecycleError("backward already ran on this graph")
    loss._consumed = True
    order = topo_order(loss)
    loss.grad = np.ones(())
    for node in reversed(order):
        if node._vjp is not None and node.grad is not None:
            node._vjp(node.grad)


def free_graph(root: DiffTensor) -> None:
    for node in topo_order(root):
        node._vjp = None
        node._parents = ()
        node._consumed = True


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def _require_same_shape(a: DiffTensor, b: DiffTensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise GraphError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _require_same_shape(a, b, "add")

    def vjp(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.data + b.data, (a, b), vjp)


def sub(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _require_same_shape(a, b, "sub")

    def vjp(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), vjp)


def mul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _require_same_shape(a, b, "mul")

    def vjp(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), vjp)


def scale(a: DiffTensor, s: float) -> DiffTensor:
    s = float(s)

    def vjp(g):
        _accumulate(a, g * s)

    return _make(a.data * s, (a,), vjp)


def add_scalar(a: DiffTensor, s: float) -> DiffTensor:
    s = float(s)

    def vjp(g):
        _accumulate(a, g)

    return _make(a.data + s, (a,), vjp)


def square(a: DiffTensor) -> DiffTensor:
    def vjp(g):
        _accumulate(a, 2.0 * a.data * g)

    return _make(a.data * a.data, (a,), vjp)


def divide(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _require_same_shape(a, b, "divide")

    def vjp(g):
        _accumulate(a, g / b.data)
        _accumulate(b, -g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), vjp)


def log(a: DiffTensor) -> DiffTensor:
    def vjp(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), vjp)


def clamp(a: DiffTensor, lo: float, hi: float) -> DiffTensor:
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        _accumulate(a, g * inside)

    return _make(out, (a,), vjp)


def tensor_sum(a: DiffTensor) -> DiffTensor:
    def vjp(g):
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(a.data.sum(), (a,), vjp)


def mean(a: DiffTensor) -> DiffTensor:
    return scale(tensor_sum(a), 1.0 / a.data.size)


def leaky_relu(a: DiffTensor, slope: float = 0.01) -> DiffTensor:
    mask = a.data > 0

    def vjp(g):
        _accumulate(a, g * np.where(mask, 1.0, slope))

    return _make(np.where(mask, a.data, slope * a.data), (a,), vjp)


def tanh(a: DiffTensor) -> DiffTensor:
    out = np.tanh(a.data)

    def vjp(g):
        _accumulate(a, g * (1.0 - out * out))

    return _make(out, (a,), vjp)


def softmax_channels(a: DiffTensor) -> DiffTensor:
    """Softmax over axis 0 (the channel axis)."""
    shifted = a.data - a.data.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=0, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=0, keepdims=True)
        _accumulate(a, out * (g - dot))

    return _make(out, (a,), vjp)


def select_channel(a: DiffTensor, index: int) -> DiffTensor:
    if not 0 <= index < a.data.shape[0]:
        raise GraphError(f"select_channel: index {index} out of range for shape {a.data.shape}")

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accumulate(a, full)

    return _make(a.data[index], (a,), vjp)


# ---------------------------------------------------------------------------
# convolution ops


def _conv3_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Cross-correlation with same padding; x (ci, d, h, ww), w (co, ci, k^3)."""
    co, ci, k = w.shape[0], w.shape[1], w.shape[2]
    p = k // 2
    d, h, ww = x.shape[1:]
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (p, p)))
    out = np.zeros((co, d, h, ww))
    for dz in range(k):
        for dy in range(k):
            for dx in range(k):
                out += np.tensordot(
                    w[:, :, dz, dy, dx],
                    xp[:, dz : dz + d, dy : dy + h, dx : dx + ww],
                    axes=([1], [0]),
                )
    return out


def conv3(x: DiffTensor, w: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Same-padding stride-1 convolution, odd cubic kernel, + channel bias."""
    if x.data.ndim != 4 or w.data.ndim != 5:
        raise GraphError(f"conv3: need x (c,d,h,w) and w (co,ci,k,k,k), got {x.shape}, {w.shape}")
    co, ci, k = w.data.shape[0], w.data.shape[1], w.data.shape[2]
    if w.data.shape[2:] != (k, k, k) or k % 2 != 1:
        raise GraphError(f"conv3: kernel must be odd cubic, got {w.data.shape}")
    if x.data.shape[0] != ci:
        raise GraphError(f"conv3: {ci} input channels expected, got x shape {x.shape}")
    if b.data.shape != (co,):
        raise GraphError(f"conv3: bias shape {b.data.shape} != ({co},)")
    out = _conv3_same(x.data, w.data) + b.data[:, None, None, None]

    def vjp(g):
        p = k // 2
        d, h, ww = x.data.shape[1:]
        if b.tracked:
            _accumulate(b, g.sum(axis=(1, 2, 3)))
        if w.tracked:
            xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (p, p)))
            dw = np.empty_like(w.data)
            for dz in range(k):
                for dy in range(k):
                    for dx in range(k):
                        dw[:, :, dz, dy, dx] = np.tensordot(
                            g,
                            xp[:, dz : dz + d, dy : dy + h, dx : dx + ww],
                            axes=([1, 2, 3], [1, 2, 3]),
                        )
            _accumulate(w, dw)
        if x.tracked:
            # grad wrt input = same-padding correlation of g with the
            # spatially flipped, channel-swapped kernel
            w_flip = w.data[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4)
            _accumulate(x, _conv3_same(g, np.ascontiguousarray(w_flip)))

    return _make(out, (x, w, b), vjp)


def down2(x: DiffTensor, w: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Stride-2 kernel-2 convolution halving each spatial dim."""
    if x.data.ndim != 4 or w.data.ndim != 5 or w.data.shape[2:] != (2, 2, 2):
        raise GraphError(f"down2: need x (c,d,h,w) and w (co,ci,2,2,2), got {x.shape}, {w.shape}")
    co, ci = w.data.shape[:2]
    d, h, ww = x.data.shape[1:]
    if x.data.shape[0] != ci or d % 2 or h % 2 or ww % 2:
        raise GraphError(f"down2: x shape {x.shape} not halvable with {ci} channels")
    xr = x.data.reshape(ci, d // 2, 2, h // 2, 2, ww // 2, 2)
    out = np.einsum("oiabc,izaybxc->ozyx", w.data, xr, optimize=True)
    out += b.data[:, None, None, None]

    def vjp(g):
        if b.tracked:
            _accumulate(b, g.sum(axis=(1, 2, 3)))
        if w.tracked:
            _accumulate(w, np.einsum("ozyx,izaybxc->oiabc", g, xr, optimize=True))
        if x.tracked:
            dxr = np.einsum("oiabc,ozyx->izaybxc", w.data, g, optimize=True)
            _accumulate(x, dxr.reshape(ci, d, h, ww))

    return _make(out, (x, w, b), vjp)


def up2(x: DiffTensor, w: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Stride-2 kernel-2 transposed convolution doubling each spatial dim;
    weight layout (ci, co, 2, 2, 2)."""
    if x.data.ndim != 4 or w.data.ndim != 5 or w.data.shape[2:] != (2, 2, 2):
        raise GraphError(f"up2: need x (c,d,h,w) and w (ci,co,2,2,2), got {x.shape}, {w.shape}")
    ci, co = w.data.shape[:2]
    if x.data.shape[0] != ci:
        raise GraphError(f"up2: {ci} input channels expected, got x shape {x.shape}")
    d, h, ww = x.data.shape[1:]
    outr = np.einsum("ioabc,izyx->ozaybxc", w.data, x.data, optimize=True)
    out = outr.reshape(co, 2 * d, 2 * h, 2 * ww) + b.data[:, None, None, None]

    def vjp(g):
        gr = g.reshape(co, d, 2, h, 2, ww, 2)
        if b.tracked:
            _accumulate(b, g.sum(axis=(1, 2, 3)))
        if w.tracked:
            _accumulate(w, np.einsum("izyx,ozaybxc->ioabc", x.data, gr, optimize=True))
        if x.tracked:
            _accumulate(x, np.einsum("ioabc,ozaybxc->izyx", w.data, gr, optimize=True))

    return _make(out, (x, w, b), vjp)
