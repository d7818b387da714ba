"""Differentiable layers, the Pre-defined Filter Module, and the smoothed skip.

Modules own ``Parameter`` tensors and sub-modules as plain attributes; the
registry walks attributes in definition order, so every parameter is found
exactly once. Inside ``shape_only()`` parameters record their shape but no
data, which is how the full-size counting graphs are built cheaply.
"""

import contextlib
import contextvars

import numpy as np

from . import autograd as ag
from .filters import FilterBank, gaussian_kernel

_SHAPE_ONLY = contextvars.ContextVar("shape_only", default=False)


@contextlib.contextmanager
def shape_only():
    """Build modules whose parameters have shapes but no storage."""
    token = _SHAPE_ONLY.set(True)
    try:
        yield
    finally:
        _SHAPE_ONLY.reset(token)


class Parameter(ag.Tensor):
    def __init__(self, shape, fill=0.0, trainable=True, data=None):
        self._shape = tuple(int(s) for s in shape)
        if _SHAPE_ONLY.get():
            data_arr = None
        elif data is not None:
            data_arr = np.array(data, dtype=np.float64).reshape(self._shape)
        else:
            data_arr = np.full(self._shape, fill, dtype=np.float64)
        super().__init__(np.zeros(0) if data_arr is None else data_arr, requires_grad=trainable)
        if data_arr is None:
            self.data = None
        self.trainable = trainable

    @property
    def shape(self):
        return self._shape

    @property
    def size(self):
        return int(np.prod(self._shape, dtype=np.int64))

    @property
    def materialized(self):
        return self.data is not None

    def __repr__(self):
        return f"Parameter(shape={self._shape}, trainable={self.trainable})"


class Module:
    """Base class. Subclasses implement ``forward`` and ``out_shape``."""

    training = True
    _buffer_names = ()

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def out_shape(self, shape):
        raise NotImplementedError

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.trainable]

    def named_buffers(self, prefix=""):
        for name in self._buffer_names:
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self):
        yield self
        for _, child in self.children():
            yield from child.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def out_shape(self, shape):
        for layer in self.layers:
            shape = layer.out_shape(shape)
        return shape

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


def _conv_out(shape, channels, k, stride, padding):
    n, _, h, w = shape
    return (n, channels, (h + 2 * padding - k) // stride + 1, (w + 2 * padding - k) // stride + 1)


class Conv2d(Module):
    """Bias-free convolution (cross-correlation)."""

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding=None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.weight = Parameter((out_channels, in_channels, kernel_size, kernel_size))

    def forward(self, x):
        return ag.conv2d(x, self.weight, self.stride, self.padding)

    def out_shape(self, shape):
        if shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {shape[1]}")
        return _conv_out(shape, self.out_channels, self.kernel_size, self.stride, self.padding)


class BatchNorm2d(Module):
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter((channels,), fill=1.0)
        self.bias = Parameter((channels,), fill=0.0)
        if _SHAPE_ONLY.get():
            self.running_mean = self.running_var = None
        else:
            self.running_mean = np.zeros(channels)
            self.running_var = np.ones(channels)

    def forward(self, x):
        return ag.batch_norm2d(x, self.weight, self.bias, self.running_mean, self.running_var,
                               training=self.training, momentum=self.momentum, eps=self.eps)

    def out_shape(self, shape):
        return shape


class ReLU(Module):
    def forward(self, x):
        return ag.relu(x)

    def out_shape(self, shape):
        return shape


class MaxPool2d(Module):
    def __init__(self, kernel_size=3, stride=2, padding=1):
        self.kernel_size, self.stride, self.padding = kernel_size, stride, padding

    def forward(self, x):
        return ag.max_pool2d(x, self.kernel_size, self.stride, self.padding)

    def out_shape(self, shape):
        return _conv_out(shape, shape[1], self.kernel_size, self.stride, self.padding)


class GlobalAvgPool(Module):
    def forward(self, x):
        return ag.global_avg_pool(x)

    def out_shape(self, shape):
        return shape[:2]


class GlobalSumPool(Module):
    def forward(self, x):
        return ag.global_sum_pool(x)

    def out_shape(self, shape):
        return shape[:2]


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter((out_features, in_features))
        self.bias = Parameter((out_features,)) if bias else None

    def forward(self, x):
        return ag.linear(x, self.weight, self.bias)

    def out_shape(self, shape):
        return (shape[0], self.out_features)


class SignHead(Module):
    """Turns a scalar score per sample into two logits ``[0, score]``.

    Class 1 wins exactly when the score is positive.
    """

    def forward(self, x):
        if x.shape[1] != 1:
            raise ValueError("SignHead expects one score per sample")
        return ag.mul(x, np.array([[0.0, 1.0]]))

    def out_shape(self, shape):
        return (shape[0], 2)


class PFM(Module):
    """Pre-defined Filter Module.

    depthwise convolution with the fixed bank -> batch norm over ``F * C``
    channels -> ReLU (if ``use_relu``) -> bias-free 1x1 convolution.

    With ``use_relu=False`` this is a reparametrized ordinary convolution;
    with it, each filter response is rectified before mixing. Set
    ``batch_norm=False`` to get the unnormalized module.
    """

    def __init__(self, in_channels, out_channels, bank, stride=1, use_relu=True,
                 filters_trainable=False, batch_norm=True):
        if not isinstance(bank, FilterBank):
            bank = FilterBank.from_array(bank)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.bank = bank
        self.stride = stride
        self.use_relu = use_relu
        self.filters_trainable = filters_trainable
        n_filters = len(bank)
        self.n_filters = n_filters
        if filters_trainable:
            self.filters = Parameter((n_filters, 3, 3), data=bank.values)
        else:
            self.filters = ag.Tensor(bank.values)
        self.bn = BatchNorm2d(n_filters * in_channels) if batch_norm else None
        self.mix = Conv2d(n_filters * in_channels, out_channels, kernel_size=1, padding=0)

    def responses(self, x):
        """Filter responses after normalization and (optional) ReLU."""
        y = ag.depthwise_conv2d(x, self.filters, stride=self.stride, padding=1)
        if self.bn is not None:
            y = self.bn(y)
        if self.use_relu:
            y = ag.relu(y)
        return y

    def forward(self, x):
        return self.mix(self.responses(x))

    def set_mixing(self, weights):
        """Set the 1x1 weights from an ``(out, C, F)`` or flat array."""
        w = np.asarray(weights, dtype=np.float64).reshape(self.out_channels, self.in_channels * self.n_filters)
        self.mix.weight.data[...] = w[:, :, None, None]

    def out_shape(self, shape):
        if shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {shape[1]}")
        return _conv_out(shape, self.out_channels, 3, self.stride, 1)


class SmoothedSkip(Module):
    """Binomial blur (pad 1) followed by a strided bias-free 1x1 projection."""

    def __init__(self, in_channels, out_channels, stride=2):
        if stride != 2:
            raise ValueError("smoothed skip is only defined for stride 2")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.blur = ag.Tensor(gaussian_kernel()[None])
        self.proj = Conv2d(in_channels, out_channels, kernel_size=1, stride=stride, padding=0)

    def forward(self, x):
        return self.proj(ag.depthwise_conv2d(x, self.blur, stride=1, padding=1))

    def out_shape(self, shape):
        return self.proj.out_shape(shape)


def smoothed_skip(x, proj, stride=2):
    """Functional form: blur ``x`` then apply the ``(out, C, 1, 1)`` projection."""
    if stride != 2:
        raise ValueError("smoothed skip is only defined for stride 2")
    blurred = ag.depthwise_conv2d(x, gaussian_kernel()[None], stride=1, padding=1)
    return ag.conv2d(blurred, proj, stride=stride, padding=0)


class BasicBlock(Module):
    """Two-layer residual block; ``conv`` builds each 3x3 position."""

    def __init__(self, in_channels, out_channels, stride, conv, smooth_skip):
        self.conv1 = conv(in_channels, out_channels, stride)
        self.bn1 = BatchNorm2d(out_channels)
        self.conv2 = conv(out_channels, out_channels, 1)
        self.bn2 = BatchNorm2d(out_channels)
        if stride != 1 or in_channels != out_channels:
            if smooth_skip and stride == 2:
                proj = SmoothedSkip(in_channels, out_channels, stride)
            else:
                proj = Conv2d(in_channels, out_channels, kernel_size=1, stride=stride, padding=0)
            self.shortcut = Sequential(proj, BatchNorm2d(out_channels))
        else:
            self.shortcut = None

    def forward(self, x):
        y = ag.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        skip = x if self.shortcut is None else self.shortcut(x)
        return ag.relu(ag.add(y, skip))

    def out_shape(self, shape):
        out = self.conv2.out_shape(self.conv1.out_shape(shape))
        skip = shape if self.shortcut is None else self.shortcut.out_shape(shape)
        if tuple(out) != tuple(skip):
            raise ValueError(f"residual shapes differ: {out} vs {skip}")
        return out


def switch_eval(w1, a, q11, q12, x):
    """Piecewise form of a ReLU PFM on the sign pair ``{w1, a * w1}``.

    Per pixel, with ``y = (w1 * x)[m, n]`` (zero padding 1): ``q11 * y`` when
    ``y >= 0`` and ``a * q12 * y`` otherwise.
    """
    if a >= 0:
        raise ValueError("a must be negative for the switch form")
    w1 = np.asarray(getattr(w1, "values", w1), dtype=np.float64)
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    x4 = x.reshape((1, 1) + x.shape[-2:]) if x.ndim == 2 else x
    y = ag.conv2d(x4, w1[None, None], stride=1, padding=1).data
    out = np.where(y >= 0, q11 * y, a * q12 * y)
    return out.reshape(x.shape[:-2] + out.shape[-2:]) if x.ndim == 2 else out
