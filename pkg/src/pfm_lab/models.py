"""Model builders: the three toy networks, a desk-scale residual PFNet, and
full-size ResNet18 / PFNet18 graphs for parameter counting."""

import numpy as np

from . import autograd as ag
from .filters import (HORIZONTAL_LINE, SUBSET_FOR_SIZE, VERTICAL_LINE, FilterBank, Kernel3x3,
                      make_edge_line_bank, select_subset)
from .layers import (PFM, BasicBlock, BatchNorm2d, Conv2d, GlobalAvgPool, GlobalSumPool, Linear,
                     MaxPool2d, Module, ReLU, Sequential, SignHead, shape_only)

TOY_VARIANTS = ("pfm", "cnn", "pfm_norelu")


class Model(Module):
    """A named network plus the settings it was built with."""

    def __init__(self, name, net, head_classes, bank=None, use_relu=True,
                 filters_trainable=False, input_shape=None):
        self.name = name
        self.net = net
        self.head_classes = head_classes
        self.bank = bank
        self.use_relu = use_relu
        self.filters_trainable = filters_trainable
        self.input_shape = input_shape

    def forward(self, x):
        if not isinstance(x, ag.Tensor):
            x = ag.Tensor(x)
        return self.net(x)

    def out_shape(self, shape):
        return self.net.out_shape(shape)

    def logits(self, X, batch_size=256):
        """Eval-mode logits as a numpy array, computed in batches."""
        was_training = self.training
        self.eval()
        try:
            out = [self.forward(X[i:i + batch_size]).data for i in range(0, len(X), batch_size)]
        finally:
            self.train(was_training)
        return np.concatenate(out) if out else np.zeros((0, self.head_classes))


def toy_line_bank(with_identity=False):
    """Unnormalized horizontal/vertical line kernels, optionally plus the identity."""
    kernels = [Kernel3x3(HORIZONTAL_LINE, "derived", 1), Kernel3x3(VERTICAL_LINE, "derived", 2)]
    if with_identity:
        delta = np.zeros((3, 3))
        delta[1, 1] = 1.0
        kernels.append(Kernel3x3(delta, "translating", 3))
    return FilterBank(tuple(kernels), "custom")


def build_toy(variant):
    """Two-class toy networks that can express the line-detector score.

    ``pfm``: one PFM on {H, V} -> global sum (2 weights).
    ``cnn``: conv 1->2, ReLU, conv 2->1 -> global sum (36 weights).
    ``pfm_norelu``: two ReLU-free PFMs sharing {H, V, identity} with a ReLU
    between them -> global sum (12 weights).
    """
    if variant == "pfm":
        bank = toy_line_bank()
        net = Sequential(PFM(1, 1, bank, use_relu=True, batch_norm=False), GlobalSumPool(), SignHead())
        use_relu = True
    elif variant == "cnn":
        bank = None
        net = Sequential(Conv2d(1, 2, 3), ReLU(), Conv2d(2, 1, 3), GlobalSumPool(), SignHead())
        use_relu = True
    elif variant == "pfm_norelu":
        bank = toy_line_bank(with_identity=True)
        net = Sequential(
            PFM(1, 2, bank, use_relu=False, batch_norm=False),
            ReLU(),
            PFM(2, 1, bank, use_relu=False, batch_norm=False),
            GlobalSumPool(),
            SignHead(),
        )
        use_relu = False
    else:
        raise ValueError(f"unknown toy variant {variant!r}; choose from {TOY_VARIANTS}")
    return Model(f"toy_{variant}", net, 2, bank, use_relu, False, (1, 1, 48, 48))


def set_toy_oracle_weights(model):
    """Load the hand-derived weights that make a toy model compute the
    closed-form score ``sum(ReLU(H * x) - ReLU(V * x))``."""
    layers = model.net.layers
    if model.name == "toy_pfm":
        layers[0].set_mixing([1.0, -1.0])
    elif model.name == "toy_cnn":
        layers[0].weight.data[:, 0] = np.stack([HORIZONTAL_LINE, VERTICAL_LINE])
        delta = np.zeros((3, 3))
        delta[1, 1] = 1.0
        layers[2].weight.data[0] = np.stack([delta, -delta])
    elif model.name == "toy_pfm_norelu":
        layers[0].set_mixing([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        layers[2].set_mixing([0.0, 0.0, 1.0, 0.0, 0.0, -1.0])
    else:
        raise ValueError(f"{model.name} is not a toy model")
    return model


def _pfm_factory(bank, use_relu, filters_trainable):
    def make(c_in, c_out, stride):
        return PFM(c_in, c_out, bank, stride=stride, use_relu=use_relu,
                   filters_trainable=filters_trainable)
    return make


def _conv_factory(c_in, c_out, stride):
    return Conv2d(c_in, c_out, 3, stride=stride)


def build_mini_pfnet(bank, classes, width=8, use_relu=True, filters_trainable=False, in_channels=1):
    """Small residual PFNet: PFM stem, two stages of two blocks, GAP, linear head.

    ``bank=None`` gives the plain-convolution twin with the same topology.
    """
    if width < 2:
        raise ValueError("width must be >= 2")
    conv = _conv_factory if bank is None else _pfm_factory(bank, use_relu, filters_trainable)
    net = Sequential(
        conv(in_channels, width, 1), BatchNorm2d(width), ReLU(),
        BasicBlock(width, width, 1, conv, smooth_skip=True),
        BasicBlock(width, width, 1, conv, smooth_skip=True),
        BasicBlock(width, 2 * width, 2, conv, smooth_skip=bank is not None),
        BasicBlock(2 * width, 2 * width, 1, conv, smooth_skip=True),
        GlobalAvgPool(),
        Linear(2 * width, classes),
    )
    name = "mini_resnet" if bank is None else "mini_pfnet"
    return Model(name, net, classes, bank, use_relu, filters_trainable, (1, in_channels, 48, 48))


MODEL_NAMES = ("toy-pfm", "toy-cnn", "toy-pfm-norelu", "mini-pfnet", "mini-resnet")


def make_model(name, bank=None, classes=2, width=8, use_relu=True, filters_trainable=False,
               in_channels=1):
    """Build a trainable model by its command-line name.

    Toy models carry their own fixed kernels and ignore ``bank``.
    """
    if name.startswith("toy-"):
        if classes != 2 or in_channels != 1:
            raise ValueError(f"{name} is a single-channel two-class model")
        return build_toy(name[4:].replace("-", "_"))
    if name == "mini-pfnet":
        if bank is None:
            raise ValueError("mini-pfnet needs a filter bank")
        return build_mini_pfnet(bank, classes, width, use_relu, filters_trainable, in_channels)
    if name == "mini-resnet":
        return build_mini_pfnet(None, classes, width, in_channels=in_channels)
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


def counting_bank(bank_size):
    if bank_size not in SUBSET_FOR_SIZE:
        raise ValueError(f"bank size must be one of {sorted(SUBSET_FOR_SIZE)}, got {bank_size}")
    return select_subset(make_edge_line_bank(18), SUBSET_FOR_SIZE[bank_size])


def build_counting_graph(arch, bank_size=0, classes=200, use_relu=True, filters_trainable=False,
                         in_channels=3):
    """Full-size ResNet18 or PFNet18 with shape-only parameters.

    ``bank_size=0`` (or ``arch='resnet18'``) gives the baseline. In PFNet18
    every 3x3 position and the 7x7 stem become PFMs and the strided skips
    are blurred before projection.
    """
    if arch not in ("resnet18", "pfnet18"):
        raise ValueError(f"unknown architecture {arch!r}")
    if arch == "resnet18" and bank_size:
        raise ValueError("resnet18 takes no filter bank (bank_size must be 0)")
    baseline = arch == "resnet18" or bank_size == 0
    bank = None if baseline else counting_bank(bank_size)
    with shape_only():
        if baseline:
            conv = _conv_factory
            stem = Conv2d(in_channels, 64, 7, stride=2, padding=3)
        else:
            conv = _pfm_factory(bank, use_relu, filters_trainable)
            stem = conv(in_channels, 64, 2)
        layers = [stem, BatchNorm2d(64), ReLU(), MaxPool2d(3, 2, 1)]
        c_in = 64
        for c_out, stride in ((64, 1), (128, 2), (256, 2), (512, 2)):
            layers.append(BasicBlock(c_in, c_out, stride, conv, smooth_skip=not baseline))
            layers.append(BasicBlock(c_out, c_out, 1, conv, smooth_skip=not baseline))
            c_in = c_out
        layers += [GlobalAvgPool(), Linear(512, classes)]
        net = Sequential(*layers)
    name = "resnet18" if baseline else f"pfnet18_{bank_size}"
    return Model(name, net, classes, bank, use_relu, filters_trainable, (1, in_channels, 224, 224))


def parameter_table(model):
    """``(name, shape, count)`` for every trainable parameter, in registry order."""
    return [(name, p.shape, p.size) for name, p in model.named_parameters() if p.trainable]


def trainable_count(model):
    return sum(count for _, _, count in parameter_table(model))


def position_weight_counts(model, skip_stem=True):
    """Weight count at each 3x3 position: the 3x3 kernel of a plain conv, or
    the 1x1 mixing weights of a PFM. 1x1 skips are never counted; the stem
    (first layer) is left out by default since its kernel size may differ."""
    layers = model.net.layers[1:] if skip_stem else model.net.layers
    counts = []
    for m in (sub for layer in layers for sub in layer.modules()):
        if isinstance(m, PFM):
            counts.append(m.mix.weight.size)
        elif isinstance(m, Conv2d) and m.kernel_size == 3:
            counts.append(m.weight.size)
    return counts
