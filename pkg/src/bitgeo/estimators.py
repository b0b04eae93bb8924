"""Scikit-learn estimator wrappers around the network trainer and the
generalized binary transform."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bitcore import gbt, random_rotation
from .bnn import TrainConfig, build_network, predict_proba, train
from .data_io import Dataset


class BinaryMLPClassifier(ClassifierMixin, BaseEstimator):
    """Multilayer classifier with binary hidden weights and activations.

    The first dense layer keeps continuous weights by default (set
    first_layer_mode="binary" to binarize it too); every hidden layer is
    followed by batch norm and a sign activation, and training runs
    straight-through-estimator SGD on the latent continuous weights.

    Parameters
    ----------
    hidden_sizes : tuple of int
        Widths of the binary hidden layers.
    epochs, batch_size, learning_rate, lr_decay, seed
        Passed to the training loop; the learning rate decays
        multiplicatively per epoch.
    first_layer_mode : None, "continuous" or "binary"
        Overrides the first dense layer weight type.
    """

    def __init__(
        self,
        hidden_sizes=(64,),
        epochs=20,
        batch_size=100,
        learning_rate=0.05,
        lr_decay=0.97,
        seed=0,
        first_layer_mode=None,
    ):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.seed = seed
        self.first_layer_mode = first_layer_mode

    def _arch(self, num_features, num_classes):
        hidden = [int(h) for h in self.hidden_sizes]
        if not hidden or any(h < 1 for h in hidden):
            raise ValueError(f"hidden_sizes must be positive, got {self.hidden_sizes}")
        tokens = [f"{num_features}c"] + [f"{h}b" for h in hidden] + [f"{num_classes}s"]
        return "-".join(tokens)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes")
        labels = np.searchsorted(self.classes_, y)
        self.n_features_in_ = X.shape[1]

        arch = self._arch(X.shape[1], self.classes_.size)
        config = TrainConfig(
            arch=arch,
            epochs=self.epochs,
            batch_size=min(self.batch_size, X.shape[0]),
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            seed=self.seed,
            first_layer_mode=self.first_layer_mode,
        )
        self.net_ = build_network(config.arch, seed=self.seed, first_layer_mode=self.first_layer_mode)
        dataset = Dataset(images=X, labels=labels)
        self.history_ = train(self.net_, dataset, config)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"dimension mismatch: fitted on {self.n_features_in_} features, got {X.shape[1]}"
            )
        return predict_proba(self.net_, X)

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]


class GeneralizedBinarizer(TransformerMixin, BaseEstimator):
    """Binarize vectors in a rotated basis: x -> R^T theta(R x).

    kind "none" binarizes in place (R = I), "dense" draws a uniform random
    rotation, "fast" uses a sign-flip Walsh-Hadamard product and requires a
    power-of-two feature count. Outputs always have norm sqrt(d).
    """

    def __init__(self, kind="none", seed=0):
        self.kind = kind
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.kind not in ("none", "dense", "fast"):
            raise ValueError(f"kind must be none, dense or fast, got {self.kind!r}")
        self.n_features_in_ = X.shape[1]
        if self.kind == "none":
            self.rotation_ = None
        else:
            self.rotation_ = random_rotation(X.shape[1], seed=self.seed, kind=self.kind)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"dimension mismatch: fitted on {self.n_features_in_} features, got {X.shape[1]}"
            )
        return gbt(X, self.rotation_)
