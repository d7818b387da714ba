"""scikit-learn compatible wrappers.

``PFMClassifier`` trains one of the package's networks with ``fit`` and
predicts with ``predict`` / ``predict_proba``; ``FilterResponseTransformer``
exposes the fixed, rectified filter responses as features for any
downstream estimator.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import autograd as ag
from .filters import FilterBank, bank_from_spec
from .models import make_model
from .training import TrainConfig, kaiming_init, train


def as_images(X):
    """Coerce ``(n, d)``, ``(n, H, W)`` or ``(n, C, H, W)`` input to NCHW float64.

    Flat rows must have a square number of features.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        side = int(round(np.sqrt(X.shape[1])))
        if side * side != X.shape[1]:
            raise ValueError(f"cannot reshape {X.shape[1]} features into a square image")
        return X.reshape(len(X), 1, side, side)
    if X.ndim == 3:
        return X[:, None]
    if X.ndim == 4:
        return X
    raise ValueError(f"expected 2-, 3- or 4-d input, got {X.ndim}-d")


def _resolve_bank(bank):
    return bank if isinstance(bank, FilterBank) or bank is None else bank_from_spec(bank)


class PFMClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier built from Pre-defined Filter Modules.

    Parameters
    ----------
    model : {"toy-pfm", "toy-cnn", "toy-pfm-norelu", "mini-pfnet", "mini-resnet"}
    bank : str or FilterBank
        Filter bank for ``mini-pfnet`` (see ``bank_from_spec``).
    use_relu, filters_trainable : bool
        PFM variant switches.
    width : int
        Base channel count of the mini networks.
    lr, momentum, weight_decay, epochs, lr_step, lr_gamma, batch_size :
        SGD settings, see ``TrainConfig``.
    random_state : int
        Seeds both the weight initialization and the batch shuffling.
    """

    def __init__(self, model="toy-pfm", bank="edge_line9", use_relu=True, filters_trainable=False,
                 width=8, lr=0.05, momentum=0.9, weight_decay=1e-4, epochs=50, lr_step=30,
                 lr_gamma=0.1, batch_size=64, random_state=0, verbose=False):
        self.model = model
        self.bank = bank
        self.use_relu = use_relu
        self.filters_trainable = filters_trainable
        self.width = width
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.lr_step = lr_step
        self.lr_gamma = lr_gamma
        self.batch_size = batch_size
        self.random_state = random_state
        self.verbose = verbose

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float64)
        check_classification_targets(y)
        images = as_images(X)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        self.input_shape_ = images.shape[1:]
        self.model_ = make_model(self.model, _resolve_bank(self.bank), len(self.classes_),
                                 self.width, self.use_relu, self.filters_trainable,
                                 in_channels=images.shape[1])
        kaiming_init(self.model_, self.random_state)
        cfg = TrainConfig(lr0=self.lr, momentum=self.momentum, weight_decay=self.weight_decay,
                          epochs=self.epochs, lr_step=self.lr_step, lr_gamma=self.lr_gamma,
                          batch_size=self.batch_size, seed=self.random_state)
        self.history_ = train(self.model_, (images, encoded), cfg,
                              log=print if self.verbose else None)
        return self

    def _images(self, X):
        check_is_fitted(self, "model_")
        images = as_images(check_array(X, allow_nd=True, dtype=np.float64))
        if images.shape[1:] != self.input_shape_:
            raise ValueError(f"expected images of shape {self.input_shape_}, got {images.shape[1:]}")
        return images

    def decision_function(self, X):
        images = self._images(X)
        logits = self.model_.logits(images)
        return logits[:, 1] - logits[:, 0] if logits.shape[1] == 2 else logits

    def predict_proba(self, X):
        images = self._images(X)
        logits = self.model_.logits(images)
        return np.exp(ag.log_softmax(logits))

    def predict(self, X):
        images = self._images(X)
        logits = self.model_.logits(images)
        return self.classes_[np.argmax(logits, axis=1)]


class FilterResponseTransformer(TransformerMixin, BaseEstimator):
    """Stateless feature map ``x -> pool(ReLU(h_l * x_c))`` for a fixed bank.

    ``pooling`` is ``"sum"`` or ``"mean"`` (one feature per channel/filter
    pair) or ``"none"`` (every response pixel, flattened). Feature ``c * F + l``
    belongs to channel ``c`` and filter ``l``.
    """

    def __init__(self, bank="edge_line9", use_relu=True, pooling="sum"):
        self.bank = bank
        self.use_relu = use_relu
        self.pooling = pooling

    def fit(self, X, y=None):
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if self.pooling not in ("sum", "mean", "none"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        self.bank_ = _resolve_bank(self.bank)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if int(np.prod(X.shape[1:])) != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {int(np.prod(X.shape[1:]))}")
        y = ag.depthwise_conv2d(as_images(X), self.bank_.values, stride=1, padding=1).data
        if self.use_relu:
            y = np.maximum(y, 0.0)
        if self.pooling == "sum":
            return y.sum(axis=(2, 3))
        if self.pooling == "mean":
            return y.mean(axis=(2, 3))
        return y.reshape(len(y), -1)
