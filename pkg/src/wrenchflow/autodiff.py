"""Minimal reverse-mode automatic differentiation over numpy arrays.

A `Tensor` wraps an ndarray and records the operations applied to it; calling
`backward()` on a scalar result walks the trace in reverse topological order
and accumulates gradients into every tensor created with `requires_grad`.

The op set is what the network stack needs: matmul (with broadcasting over
leading batch axes), broadcast add/mul, elementwise nonlinearities, layer
normalization, sigmoid, softmax, concatenation, reshape, reductions, and the
losses (binary cross-entropy with logits, mean squared error). Every op's
gradient is validated against central finite differences in the test suite.

Dtype follows the inputs: float32 for training, float64 for gradient checks.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "concat", "sigmoid", "bce_with_logits", "mse", "softmax"]


def _sum_to_shape(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand shape."""
    if grad.shape == shape:
        return grad
    # sum over prepended axes
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # sum over axes that were broadcast from size 1
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers ------------------------------------------------
    @staticmethod
    def param(data) -> "Tensor":
        return Tensor(np.asarray(data), requires_grad=True)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- graph plumbing ------------------------------------------------------
    def _make(self, data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient requires a scalar output")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:  # iterative DFS; training graphs are deep-ish
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if not parent.requires_grad:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg
            else:  # leaf
                node.grad = g if node.grad is None else node.grad + g

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other

        def backward(g):
            return ((a, _sum_to_shape(g, a.data.shape)),
                    (b, _sum_to_shape(g, b.data.shape)))
        return self._make(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            return ((a, -g),)
        return self._make(-a.data, (a,), backward)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other

        def backward(g):
            return ((a, _sum_to_shape(g * b.data, a.data.shape)),
                    (b, _sum_to_shape(g * a.data, b.data.shape)))
        return self._make(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise TypeError("tensor/tensor division not needed; multiply by a reciprocal")
        return self * (1.0 / scalar)

    def matmul(self, other: "Tensor") -> "Tensor":
        """a @ b with numpy batching: (..., i, k) @ (k, j) or (..., k, j).

        The common case (batched activations against a 2-D weight) collapses
        to one large GEMM instead of numpy's per-slice gufunc loop.
        """
        a, b = self, other
        flat = a.data.ndim > 2 and b.data.ndim == 2
        if flat:
            lead = a.data.shape[:-1]
            a2 = a.data.reshape(-1, a.data.shape[-1])
            out = (a2 @ b.data).reshape(*lead, b.data.shape[-1])
        else:
            out = a.data @ b.data

        def backward(g):
            if flat:
                g2 = g.reshape(-1, g.shape[-1])
                ga = (g2 @ b.data.T).reshape(a.data.shape)
                gb = a.data.reshape(-1, a.data.shape[-1]).T @ g2
                return ((a, ga), (b, gb))
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return ((a, _sum_to_shape(ga, a.data.shape)),
                    (b, _sum_to_shape(gb, b.data.shape)))
        return self._make(out, (a, b), backward)

    __matmul__ = matmul

    # -- shape ops -----------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        a = self
        old = a.data.shape

        def backward(g):
            return ((a, g.reshape(old)),)
        return self._make(a.data.reshape(*shape), (a,), backward)

    def broadcast_to(self, shape) -> "Tensor":
        a = self

        def backward(g):
            return ((a, _sum_to_shape(g, a.data.shape)),)
        return self._make(np.broadcast_to(a.data, shape).copy(), (a,), backward)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        a = self

        def backward(g):
            if axis is None:
                return ((a, np.broadcast_to(g, a.data.shape).copy()),)
            g_exp = g if keepdims else np.expand_dims(g, axis)
            return ((a, np.broadcast_to(g_exp, a.data.shape).copy()),)
        return self._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        a = self
        count = a.data.size if axis is None else a.data.shape[axis]
        return a.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- nonlinearities --------------------------------------------------------
    def relu(self) -> "Tensor":
        a = self
        pos = a.data > 0

        def backward(g):
            return ((a, g * pos),)
        return self._make(a.data * pos, (a,), backward)

    def tanh(self) -> "Tensor":
        a = self
        y = np.tanh(a.data)

        def backward(g):
            return ((a, g * (1.0 - y * y)),)
        return self._make(y, (a,), backward)

    def silu(self) -> "Tensor":
        """x * sigmoid(x); smooth default nonlinearity of the backbone."""
        a = self
        s = _sigmoid(a.data)
        y = a.data * s

        def backward(g):
            return ((a, g * (s + y * (1.0 - s))),)
        return self._make(y, (a,), backward)

    def exp(self) -> "Tensor":
        a = self
        y = np.exp(a.data)

        def backward(g):
            return ((a, g * y),)
        return self._make(y, (a,), backward)

    def layer_norm(self, gain: "Tensor", bias: "Tensor", eps: float = 1e-5) -> "Tensor":
        """Normalize the last axis to zero mean / unit variance, then scale
        and shift with learned per-channel gain and bias."""
        a = self
        mu = a.data.mean(axis=-1, keepdims=True)
        xc = a.data - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        out = xhat * gain.data + bias.data
        D = a.data.shape[-1]

        def backward(g):
            g_gain = _sum_to_shape(g * xhat, gain.data.shape)
            g_bias = _sum_to_shape(g, bias.data.shape)
            gx_hat = g * gain.data
            gx = inv * (gx_hat
                        - gx_hat.mean(axis=-1, keepdims=True)
                        - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
            _ = D  # dimension folded into the means above
            return ((a, gx), (gain, g_gain), (bias, g_bias))
        return self._make(out, (a, gain, bias), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # single-pass stable form via tanh
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(t: Tensor) -> Tensor:
    s = _sigmoid(t.data)

    def backward(g):
        return ((t, g * s * (1.0 - s)),)
    return t._make(s, (t,), backward)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    z = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return ((t, s * (g - dot)),)
    return t._make(s, (t,), backward)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        return tuple((t, p) for t, p in zip(tensors, parts))
    out = Tensor(out_data)
    if any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tuple(tensors)
        out._backward = backward
    return out


def bce_with_logits(logits: Tensor, targets: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Mean binary cross-entropy in nats, numerically stable in the logits.

    loss = mean( max(x, 0) - x*y + log(1 + exp(-|x|)) )
    """
    x = logits.data
    y = np.asarray(targets, dtype=x.dtype)
    per = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    w = None if weights is None else np.asarray(weights, dtype=x.dtype)
    if w is not None:
        per = per * w
    val = per.mean()
    n = per.size

    def backward(g):
        gx = (_sigmoid(x) - y) / n
        if w is not None:
            gx = gx * w
        return ((logits, g * gx),)
    return logits._make(np.asarray(val), (logits,), backward)


def mse(pred: Tensor, target: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Mean of weights * (pred - target)^2 over all cells."""
    y = np.asarray(target, dtype=pred.data.dtype)
    diff = pred.data - y
    w = None if weights is None else np.asarray(weights, dtype=pred.data.dtype)
    per = diff * diff if w is None else w * diff * diff
    val = per.mean()
    n = per.size

    def backward(g):
        gx = 2.0 * diff / n
        if w is not None:
            gx = gx * w
        return ((pred, g * gx),)
    return pred._make(np.asarray(val), (pred,), backward)
