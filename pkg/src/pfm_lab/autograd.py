"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op builds the output tensor, records its parents, and attaches a
closure that pushes the output gradient back into them. ``backward`` walks
the graph in reverse topological order.

Convolutions are cross-correlations (no kernel flip), matching the usual
deep-learning convention. All 3x3 kernels used by this package are either
180-degree symmetric or come in sign pairs, so this choice is harmless.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    """n-dimensional float64 array that may carry a gradient."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op!r})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Propagate d(self)/d(node) into every node that requires grad."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
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
        # interior grads are transient; leaves keep (and accumulate) theirs
        for node in order:
            if node._parents:
                node.grad = None
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __rsub__(self, other):
        return add(_as_tensor(other), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def sum(self):
        return tensor_sum(self)

    def reshape(self, *shape):
        return reshape(self, *shape)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, op, backward):
    parents = tuple(p for p in parents if p.requires_grad)
    out = Tensor(data, requires_grad=bool(parents), _op=op)
    if parents:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", backward)


def tensor_sum(x):
    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape))

    return _make(np.array(x.data.sum()), (x,), "sum", backward)


def reshape(x, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _make(x.data.reshape(shape), (x,), "reshape", backward)


def relu(x):
    """Elementwise max(0, x); the subgradient at exactly 0 is taken as 0."""
    x = _as_tensor(x)
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), "relu", backward)


def _out_size(n, k, stride, padding):
    if n + 2 * padding < k:
        raise ValueError(f"input extent {n} with padding {padding} is smaller than kernel {k}")
    return (n + 2 * padding - k) // stride + 1


def _pad(x, padding, value=0.0):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=value)


def _windows(xp, kh, kw, stride):
    # (N, C, H', W', kh, kw) view; no copy
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d(x, weight, stride=1, padding=0):
    """Cross-correlate ``x[N,C,H,W]`` with ``weight[K,C,kh,kw]``."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects 4-d input and 4-d weight")
    n, c, h, w = x.shape
    k, wc, kh, kw = weight.shape
    if wc != c:
        raise ValueError(f"input has {c} channels but weight expects {wc}")
    ho, wo = _out_size(h, kh, stride, padding), _out_size(w, kw, stride, padding)
    xp = _pad(x.data, padding)
    win = _windows(xp, kh, kw, stride)
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def backward(g):
        if weight.requires_grad:
            weight._accumulate(np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0]))
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib.transpose(0, 3, 1, 2)
            x._accumulate(gxp[:, :, padding:padding + h, padding:padding + w])

    return _make(np.ascontiguousarray(out), (x, weight), "conv2d", backward)


def depthwise_conv2d(x, filters, stride=1, padding=1):
    """Apply every 3x3 filter of ``filters[F,kh,kw]`` to every input channel.

    Output channel ``c * F + l`` holds filter ``l`` applied to channel ``c``.
    """
    x, filters = _as_tensor(x), _as_tensor(filters)
    if x.ndim != 4 or filters.ndim != 3:
        raise ValueError("depthwise_conv2d expects 4-d input and filters of shape (F, kh, kw)")
    n, c, h, w = x.shape
    f, kh, kw = filters.shape
    if f < 1:
        raise ValueError("need at least one filter")
    ho, wo = _out_size(h, kh, stride, padding), _out_size(w, kw, stride, padding)
    xp = _pad(x.data, padding)
    win = _windows(xp, kh, kw, stride)
    out = np.tensordot(win, filters.data, axes=([4, 5], [1, 2]))  # (N, C, H', W', F)
    out = out.transpose(0, 1, 4, 2, 3).reshape(n, c * f, ho, wo)

    def backward(g):
        g5 = g.reshape(n, c, f, ho, wo)
        if filters.requires_grad:
            filters._accumulate(np.tensordot(g5, win, axes=([0, 1, 3, 4], [0, 1, 2, 3])))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g5, filters.data[:, i, j], axes=([2], [0]))
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib
            x._accumulate(gxp[:, :, padding:padding + h, padding:padding + w])

    return _make(np.ascontiguousarray(out), (x, filters), "depthwise_conv2d", backward)


def batch_norm2d(x, gamma, beta, running_mean, running_var, training=True,
                 momentum=0.1, eps=1e-5):
    """Per-channel normalization over (N, H, W).

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, like most frameworks).
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    n, c, h, w = x.shape
    m = n * h * w
    shape = (1, c, 1, 1)
    if training:
        if m < 2:
            raise ValueError("batch norm in train mode needs at least 2 values per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        mean, var = running_mean.copy(), running_var.copy()
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gx = g * gamma.data.reshape(shape)
            if training:
                s1 = gx.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (gx * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (gx - s1 / m - xhat * s2 / m) * inv_std.reshape(shape)
            else:
                gx = gx * inv_std.reshape(shape)
            x._accumulate(gx)

    return _make(out, (x, gamma, beta), "batch_norm2d", backward)


def max_pool2d(x, kernel_size=3, stride=2, padding=1):
    x = _as_tensor(x)
    n, c, h, w = x.shape
    k = kernel_size
    ho, wo = _out_size(h, k, stride, padding), _out_size(w, k, stride, padding)
    xp = _pad(x.data, padding, value=-np.inf)
    win = _windows(xp, k, k, stride).reshape(n, c, ho, wo, k * k)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gxp = np.zeros_like(xp)
        for t in range(k * k):
            i, j = divmod(t, k)
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.where(idx == t, g, 0.0)
        x._accumulate(gxp[:, :, padding:padding + h, padding:padding + w])

    return _make(out, (x,), "max_pool2d", backward)


def global_avg_pool(x):
    """(N, C, H, W) -> (N, C) by spatial mean."""
    x = _as_tensor(x)
    n, c, h, w = x.shape

    def backward(g):
        x._accumulate(np.broadcast_to(g[:, :, None, None] / (h * w), x.shape))

    return _make(x.data.mean(axis=(2, 3)), (x,), "global_avg_pool", backward)


def global_sum_pool(x):
    """(N, C, H, W) -> (N, C) by spatial sum."""
    x = _as_tensor(x)

    def backward(g):
        x._accumulate(np.broadcast_to(g[:, :, None, None], x.shape))

    return _make(x.data.sum(axis=(2, 3)), (x,), "global_sum_pool", backward)


def linear(x, weight, bias=None):
    """``x[N, D] @ weight[K, D].T + bias[K]``."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    out = x.data @ weight.data.T
    if bias is not None:
        bias = _as_tensor(bias)
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            weight._accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return _make(out, parents, "linear", backward)


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of ``logits[N, K]`` against integer labels."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    logp = log_softmax(logits.data)
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        logits._accumulate(g * p / n)

    return _make(np.array(loss), (logits,), "softmax_cross_entropy", backward)
