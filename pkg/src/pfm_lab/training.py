"""Deterministic SGD training, Kaiming initialization, metrics and checkpoints."""

import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autograd as ag
from .layers import PFM, BatchNorm2d, Conv2d, Linear
from .rng import Xoshiro256


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"non-finite loss {loss} in epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass
class TrainConfig:
    """SGD hyperparameters. Defaults follow the ImageNet reference recipe."""

    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 90
    lr_step: int = 30
    lr_gamma: float = 0.1
    batch_size: int = 48
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0 or self.epochs < 1 or self.lr_step < 1 or self.batch_size < 1:
            raise ValueError("lr0, epochs, lr_step and batch_size must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be non-negative")
        if not 0 < self.lr_gamma <= 1:
            raise ValueError("lr_gamma must lie in (0, 1]")

    @classmethod
    def toy(cls, **overrides):
        """Settings for the toy dataset runs."""
        params = dict(lr0=0.05, epochs=50, batch_size=64)
        params.update(overrides)
        return cls(**params)

    def lr_at(self, epoch):
        return self.lr0 * self.lr_gamma ** (epoch // self.lr_step)


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    wall_ms: float

    COLUMNS = ("epoch", "train_loss", "train_acc", "test_acc", "wall_ms")

    def to_tsv(self):
        return "\t".join(str(getattr(self, c)) if c == "epoch" else repr(float(getattr(self, c)))
                         for c in self.COLUMNS)


def _fan_in(param_shape):
    return int(np.prod(param_shape[1:])) if len(param_shape) > 1 else int(param_shape[0])


def kaiming_init(model, seed):
    """He-normal init of conv/linear weights, zero biases, BN affine (1, 0).

    Pre-defined filters, trainable or not, keep their bank values.
    """
    rng = Xoshiro256(seed)
    for m in model.modules():
        if isinstance(m, (Conv2d, Linear)):
            w = m.weight
            w.data[...] = rng.normal_array(w.shape, std=math.sqrt(2.0 / _fan_in(w.shape)))
            if isinstance(m, Linear) and m.bias is not None:
                m.bias.data[...] = 0.0
        elif isinstance(m, BatchNorm2d):
            m.weight.data[...] = 1.0
            m.bias.data[...] = 0.0
            m.running_mean[...] = 0.0
            m.running_var[...] = 1.0
        elif isinstance(m, PFM) and m.filters_trainable:
            m.filters.data[...] = m.bank.values
    return model


class SGD:
    """Momentum SGD with classic L2 weight decay added to the gradient."""

    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [None] * len(self.params)

    def step(self):
        for i, p in enumerate(self.params):
            if p.grad is None:
                if self.weight_decay == 0:
                    continue
                g = self.weight_decay * p.data
            else:
                g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
            if self.momentum:
                v = self._velocity[i]
                v = g.copy() if v is None else self.momentum * v + g
                self._velocity[i] = v
                g = v
            p.data -= self.lr * g

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def predict_labels(logits):
    # np.argmax already returns the first (lowest) index on ties
    return np.argmax(logits, axis=1)


def evaluate(model, X, y, batch_size=256):
    """Argmax accuracy in eval mode."""
    y = np.asarray(y)
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict_labels(model.logits(X, batch_size)) == y))


def _as_arrays(data):
    if hasattr(data, "to_arrays"):
        return data.to_arrays()
    X, y = data
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)


def train(model, data, cfg, test=None, metrics_path=None, log=print):
    """Minimize softmax cross-entropy with momentum SGD.

    ``data`` and ``test`` are datasets with ``to_arrays()`` or ``(X, y)``
    pairs. Returns one ``MetricsRecord`` per epoch; when ``metrics_path`` is
    given each record is also appended there as a tab-separated line.
    """
    X, y = _as_arrays(data)
    if len(X) == 0:
        raise ValueError("training set is empty")
    if y.max() >= model.head_classes:
        raise ValueError(f"labels reach {y.max()} but the head has {model.head_classes} classes")
    X_test, y_test = _as_arrays(test) if test is not None else (None, None)

    opt = SGD(model.trainable_parameters(), cfg.lr0, cfg.momentum, cfg.weight_decay)
    rng = Xoshiro256(cfg.seed)
    order = list(range(len(X)))
    records = []
    out = None
    if metrics_path is not None:
        out = open(metrics_path, "a")
        if Path(metrics_path).stat().st_size == 0:
            out.write("\t".join(MetricsRecord.COLUMNS) + "\n")
    try:
        for epoch in range(cfg.epochs):
            start = time.perf_counter()
            opt.lr = cfg.lr_at(epoch)
            model.train()
            rng.shuffle(order)
            idx = np.array(order)
            total_loss = 0.0
            for b in range(0, len(idx), cfg.batch_size):
                batch = idx[b:b + cfg.batch_size]
                opt.zero_grad()
                loss = ag.softmax_cross_entropy(model(X[batch]), y[batch])
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(epoch, value)
                loss.backward()
                opt.step()
                total_loss += value * len(batch)
            train_acc = evaluate(model, X, y)
            test_acc = evaluate(model, X_test, y_test) if X_test is not None else float("nan")
            rec = MetricsRecord(epoch, total_loss / len(X), train_acc, test_acc,
                                (time.perf_counter() - start) * 1000.0)
            records.append(rec)
            if out is not None:
                out.write(rec.to_tsv() + "\n")
                out.flush()
            if log is not None:
                log(rec.to_tsv())
    finally:
        if out is not None:
            out.close()
    return records


_CKPT_MAGIC = "PFMCKPT 1"


def save_checkpoint(model, path):
    """Text header (one ``name<TAB>shape`` line per array) then raw ``<f8`` data."""
    arrays = [(n, p.data) for n, p in model.named_parameters()]
    arrays += [(n, b) for n, b in model.named_buffers()]
    header = [_CKPT_MAGIC]
    header += [f"{name}\t{','.join(str(s) for s in arr.shape)}" for name, arr in arrays]
    header.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(model, path):
    raw = Path(path).read_bytes()
    end = raw.index(b"\nEND\n") + len(b"\nEND\n")
    lines = raw[:end].decode("ascii").splitlines()
    if lines[0] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    targets = dict(model.named_parameters())
    targets.update(dict(model.named_buffers()))
    offset = end
    for line in lines[1:-1]:
        name, shape_txt = line.split("\t")
        shape = tuple(int(s) for s in shape_txt.split(",")) if shape_txt else ()
        n = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(raw, "<f8", n, offset).reshape(shape)
        offset += 8 * n
        if name not in targets:
            raise KeyError(f"{path}: model has no array named {name!r}")
        dest = targets[name]
        dest = dest.data if isinstance(dest, ag.Tensor) else dest
        if dest.shape != shape:
            raise ValueError(f"{name}: checkpoint shape {shape} != model shape {dest.shape}")
        dest[...] = values
    return model


def config_dict(cfg):
    return asdict(cfg)


def config_fields():
    return [f.name for f in fields(TrainConfig)]
