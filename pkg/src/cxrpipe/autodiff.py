"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to one gradient per parent.  Calling
:func:`backward` on a scalar walks that graph in reverse topological order.

Only the handful of operations needed by the residual network and its loss are
provided.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

DTYPE = np.float64
PROB_EPS = 1e-12


class Tensor:
    """A node in the computation graph.

    Leaves created directly by the user do not track gradients unless
    ``requires_grad`` is set.  Interior nodes get a fresh zero gradient at the
    start of every backward pass; leaves accumulate across passes.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "__weakref__")

    def __init__(self, data, *, requires_grad: bool = False, op: str = "leaf",
                 parents: Sequence["Tensor"] = (), backward_fn: Callable | None = None):
        self.data = np.array(data, dtype=DTYPE, copy=True) if op == "leaf" else data
        self.requires_grad = requires_grad
        self.op = op
        self._parents = tuple(parents)
        self._backward = backward_fn
        self.grad = np.zeros_like(self.data) if requires_grad and op == "leaf" else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"


class Parameter(Tensor):
    """A named trainable leaf."""

    __slots__ = ("name",)

    def __init__(self, value, name: str):
        super().__init__(value, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, op: str, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, op=op, parents=parents if needs else (),
                  backward_fn=backward_fn if needs else None)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    seen.add(id(root))
    while stack:
        node, i = stack.pop()
        if i < len(node._parents):
            stack.append((node, i + 1))
            parent = node._parents[i]
            if parent.requires_grad and id(parent) not in seen:
                seen.add(id(parent))
                stack.append((parent, 0))
        else:
            order.append(node)
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tracked leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise ShapeError("backward", "loss must be a scalar", loss=loss.shape)
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if not node.is_leaf:
            node.grad = np.zeros_like(node.data)
    loss.grad += 1.0
    for node in reversed(order):
        if node.is_leaf:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is not None and parent.requires_grad:
                parent.grad += g


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, "operands must have identical shapes", a=a.shape, b=b.shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; the residual shortcut routes ``grad`` to both inputs unchanged."""
    _require_same_shape("add", a, b)
    return _node(a.data + b.data, "add", (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)
    return _node(a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data))


def tsum(x: Tensor) -> Tensor:
    """Sum of all entries as a 0-d tensor."""
    return _node(np.asarray(x.data.sum()), "sum", (x,), lambda g: (np.full_like(x.data, g),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so neither branch overflows
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _node(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError("global_avg_pool", "expected a 4-d input", x=x.shape)
    B, C, H, W = x.shape
    out = x.data.mean(axis=(2, 3))

    def bwd(g):
        return (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).copy(),)

    return _node(out, "global_avg_pool", (x,), bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("linear", "input features must match weight columns",
                         x=x.shape, weight=weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError("linear", "bias must have one entry per output", bias=bias.shape,
                         out_features=weight.shape[0])
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return _node(out, "linear", parents, bwd)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           pad: int = 0) -> Tensor:
    """2-d cross-correlation with zero padding, computed via im2col."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv2d", "input and weight must be 4-d", input=x.shape, weight=weight.shape)
    if stride < 1 or pad < 0:
        raise ShapeError("conv2d", "stride must be positive and pad non-negative",
                         stride=stride, pad=pad)
    B, C, H, W = x.shape
    O, Cw, kH, kW = weight.shape
    if Cw != C:
        raise ShapeError("conv2d", "input channels do not match weight", Cin=C, weight_Cin=Cw)
    if H + 2 * pad < kH or W + 2 * pad < kW:
        raise ShapeError("conv2d", "kernel larger than padded input",
                         H=H, W=W, kH=kH, kW=kW, pad=pad)
    if bias is not None and bias.shape != (O,):
        raise ShapeError("conv2d", "bias must have one entry per output channel",
                         bias=bias.shape, Cout=O)

    Ho = (H + 2 * pad - kH) // stride + 1
    Wo = (W + 2 * pad - kW) // stride + 1
    # channel-last padded input; columns are laid out as (kH, kW, C) per output pixel
    xp = np.zeros((B, H + 2 * pad, W + 2 * pad, C))
    xp[:, pad:pad + H, pad:pad + W, :] = x.data.transpose(0, 2, 3, 1)
    cols = np.empty((B, Ho, Wo, kH, kW, C))
    for i in range(kH):
        for j in range(kW):
            cols[:, :, :, i, j, :] = xp[:, i:i + stride * (Ho - 1) + 1:stride,
                                        j:j + stride * (Wo - 1) + 1:stride, :]
    cols = cols.reshape(B * Ho * Wo, kH * kW * C)
    wk = weight.data.transpose(0, 2, 3, 1).reshape(O, kH * kW * C)
    out = cols @ wk.T
    if bias is not None:
        out += bias.data
    out = out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gw = (g2.T @ cols).reshape(O, kH, kW, C).transpose(0, 3, 1, 2)
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wk).reshape(B, Ho, Wo, kH, kW, C)
            dxp = np.zeros(xp.shape)
            for i in range(kH):
                for j in range(kW):
                    dxp[:, i:i + stride * (Ho - 1) + 1:stride,
                        j:j + stride * (Wo - 1) + 1:stride, :] += dcols[:, :, :, i, j, :]
            gx = np.ascontiguousarray(dxp[:, pad:pad + H, pad:pad + W, :].transpose(0, 3, 1, 2))
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _node(np.ascontiguousarray(out), "conv2d", parents, bwd)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                running_var: np.ndarray, eps: float = 1e-5, train: bool = True,
                momentum: float = 0.1) -> Tensor:
    """Per-channel batch normalization.

    In training mode the running statistics are updated in place as an
    exponential moving average (unbiased variance), matching the usual
    deep-learning convention.
    """
    if x.data.ndim != 4:
        raise ShapeError("batchnorm2d", "expected a 4-d input", x=x.shape)
    C = x.shape[1]
    for name, arr in (("gamma", gamma.shape), ("beta", beta.shape),
                      ("running_mean", running_mean.shape), ("running_var", running_var.shape)):
        if arr != (C,):
            raise ShapeError("batchnorm2d", f"{name} must have one entry per channel",
                             **{name: arr}, C=C)
    if not eps > 0 and train:
        raise ShapeError("batchnorm2d", "eps must be positive in train mode", eps=eps)

    axes = (0, 2, 3)
    if train:
        m = x.data.size // C
        mean = x.data.mean(axis=axes)
        centered = x.data - mean[None, :, None, None]
        var = (centered * centered).mean(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        m = None
        mean = running_mean.copy()
        var = running_var.copy()
        centered = x.data - mean[None, :, None, None]
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def bwd(g):
        gbeta = g.sum(axis=axes)
        ggamma = (g * xhat).sum(axis=axes)
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data[None, :, None, None]
            if train:
                s1 = gxhat.sum(axis=axes)[None, :, None, None]
                s2 = (gxhat * xhat).sum(axis=axes)[None, :, None, None]
                gx = (inv_std[None, :, None, None] / m) * (m * gxhat - s1 - xhat * s2)
            else:
                gx = gxhat * inv_std[None, :, None, None]
        return gx, ggamma, gbeta

    return _node(out, "batchnorm2d", (x, gamma, beta), bwd)


def bce_loss(probs: Tensor, targets) -> Tensor:
    """Mean per-class Bernoulli negative log likelihood.

    ``probs`` is clamped to ``[1e-12, 1 - 1e-12]``; entries outside that band
    receive zero gradient.
    """
    y = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=DTYPE)
    if probs.shape != y.shape:
        raise ShapeError("bce_loss", "probs and targets must match", probs=probs.shape,
                         targets=y.shape)
    if not np.all((y == 0.0) | (y == 1.0)):
        bad = np.argwhere((y != 0.0) & (y != 1.0))[0]
        raise ShapeError("bce_loss", "targets must be 0 or 1", index=tuple(int(i) for i in bad))
    p = np.clip(probs.data, PROB_EPS, 1.0 - PROB_EPS)
    n = p.size
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / n
    inside = (probs.data >= PROB_EPS) & (probs.data <= 1.0 - PROB_EPS)

    def bwd(g):
        return (g * inside * (-y / p + (1.0 - y) / (1.0 - p)) / n,)

    return _node(np.asarray(loss), "bce_loss", (probs,), bwd)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of the gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=DTYPE, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute deviation scaled by the larger of the two gradients' magnitudes."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)
