"""Reverse-mode autodiff over numpy arrays.

A Tensor wraps one float32/float64 ndarray and records the op that
produced it; backward() walks the recorded graph in reverse topological
order and accumulates gradients into the leaves. Every op output is
checked for NaN/Inf (hard error) unless finite checks are disabled.

Gradients on Parameter leaves persist and accumulate across backward
calls until explicitly zeroed; intermediate nodes get fresh gradients
per call and die with the graph.
"""

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True
_finite_checks = True


class GraphError(RuntimeError):
    """Backward called on a tensor with no recorded forward graph."""


class no_grad:
    """Context manager: ops inside record no graph (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def set_finite_checks(enabled: bool) -> bool:
    global _finite_checks
    previous = _finite_checks
    _finite_checks = bool(enabled)
    return previous


def _check_finite(data, op):
    # summing in float64 propagates any NaN/Inf and cannot overflow on
    # finite float32 inputs, so one reduction replaces a full isfinite scan
    if _finite_checks and not np.isfinite(data.sum(dtype=np.float64)):
        if np.all(np.isfinite(data)):
            return
        raise FloatingPointError(f"non-finite values produced by {op}")


def as_array(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, dtype=None, requires_grad=False):
        self.data = as_array(data, dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._op = None

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _result(data, parents, backward, op):
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
            out._op = op
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
            out._op = None
        return out

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Leaf view of the same values; gradient stops here."""
        return Tensor(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0

    def backward(self):
        if self._op is None:
            raise GraphError("backward() without a recorded forward pass")
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")

        topo: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operators ----------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            if other.dtype != self.dtype:
                raise TypeError(
                    f"dtype mismatch: {self.dtype} vs {other.dtype}"
                )
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._result(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            if a.requires_grad:
                a._accumulate(-g)

        return Tensor._result(-a.data, (a,), backward, "neg")

    def __sub__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(-_unbroadcast(g, b.data.shape))

        return Tensor._result(a.data - b.data, (a, b), backward, "sub")

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._result(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, self._coerce(other))

    def __repr__(self):
        tag = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def reshape(self, *shape):
        a = self
        old = a.data.shape

        def backward(g):
            if a.requires_grad:
                a._accumulate(g.reshape(old))

        return Tensor._result(a.data.reshape(*shape), (a,), backward, "reshape")

    def transpose(self):
        if self.data.ndim != 2:
            raise ValueError("transpose expects a 2-D tensor")
        a = self

        def backward(g):
            if a.requires_grad:
                a._accumulate(np.ascontiguousarray(g.T))

        return Tensor._result(
            np.ascontiguousarray(a.data.T), (a,), backward, "transpose"
        )


class Parameter(Tensor):
    """Named trainable leaf; grad is allocated up front and persists."""

    __slots__ = ("name", "trainable")

    def __init__(self, name: str, value, trainable: bool = True):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return (
            f"Parameter({self.name!r}, shape={self.data.shape}, "
            f"trainable={self.trainable})"
        )


def _unbroadcast(g, shape):
    """Sum g over the axes that broadcasting expanded to reach its shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2Dx2D, 1Dx2D and 2Dx1D operands."""
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ValueError("matmul supports 1-D and 2-D operands only")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.data.ndim == 2 and b.data.ndim == 2:
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)
        elif a.data.ndim == 1 and b.data.ndim == 2:
            if a.requires_grad:
                a._accumulate(b.data @ g)
            if b.requires_grad:
                b._accumulate(np.outer(a.data, g))
        else:  # 2-D @ 1-D
            if a.requires_grad:
                a._accumulate(np.outer(g, b.data))
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

    return Tensor._result(a.data @ b.data, (a, b), backward, "matmul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor._result(np.where(mask, x.data, 0), (x,), backward, "relu")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, g / n))

    return Tensor._result(
        np.asarray(x.data.mean(), dtype=x.dtype), (x,), backward, "mean_all"
    )


def mean_axis0(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError("mean_axis0 expects a 2-D tensor")
    n = x.data.shape[0]

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / n, x.data.shape))

    return Tensor._result(x.data.mean(axis=0), (x,), backward, "mean_axis0")


def slice_cols(x: Tensor, lo: int, hi: int) -> Tensor:
    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, lo:hi] += g

    return Tensor._result(
        np.ascontiguousarray(x.data[:, lo:hi]), (x,), backward, "slice_cols"
    )


def concat_cols(parts: list[Tensor]) -> Tensor:
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[:, lo:hi])

    return Tensor._result(
        np.concatenate([p.data for p in parts], axis=1),
        tuple(parts),
        backward,
        "concat_cols",
    )


def gather_rows(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError("gather_rows: id out of range")

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)

    return Tensor._result(table.data[ids], (table,), backward, "gather_rows")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul over matching leading axes ([B, m, k] @ [B, k, n])."""
    if a.data.ndim != 3 or b.data.ndim != 3 or a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"bmm shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.transpose(0, 2, 1))
        if b.requires_grad:
            b._accumulate(a.data.transpose(0, 2, 1) @ g)

    return Tensor._result(a.data @ b.data, (a, b), backward, "bmm")


def transpose_last2(x: Tensor) -> Tensor:
    if x.data.ndim != 3:
        raise ValueError("transpose_last2 expects a 3-D tensor")

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.ascontiguousarray(g.transpose(0, 2, 1)))

    return Tensor._result(
        np.ascontiguousarray(x.data.transpose(0, 2, 1)), (x,), backward,
        "transpose_last2",
    )


def heads_split(x: Tensor, n_heads: int) -> Tensor:
    """[L, h] -> [n_heads, L, h / n_heads]."""
    length, h = x.data.shape
    d_head = h // n_heads
    y = np.ascontiguousarray(
        x.data.reshape(length, n_heads, d_head).transpose(1, 0, 2)
    )

    def backward(g):
        if x.requires_grad:
            x._accumulate(
                np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(length, h)
            )

    return Tensor._result(y, (x,), backward, "heads_split")


def heads_merge(x: Tensor) -> Tensor:
    """[n_heads, L, d_head] -> [L, n_heads * d_head]."""
    n_heads, length, d_head = x.data.shape
    y = np.ascontiguousarray(x.data.transpose(1, 0, 2)).reshape(
        length, n_heads * d_head
    )

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.ascontiguousarray(
                g.reshape(length, n_heads, d_head).transpose(1, 0, 2)
            ))

    return Tensor._result(y, (x,), backward, "heads_merge")


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            x._accumulate(y * (g - dot))

    return Tensor._result(y, (x,), backward, "softmax_rows")
