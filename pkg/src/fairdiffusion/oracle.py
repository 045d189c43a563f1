"""Frozen evaluation classifier: attributes generated digits to classes and
supplies penultimate-layer features for the distribution distance."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .autodiff import ParameterSet, Tape, Tensor, backward, linear, log, mul, scale, silu, softmax, total
from .errors import ConfigError
from .optim import AdamState, adam_update
from .validation import as_image_matrix

NUM_CLASSES = 10


class DigitOracle(BaseEstimator, ClassifierMixin):
    """Small MLP over 28x28 inputs with a designated 32-wide feature layer.

    fit -> predict/predict_proba for class attribution, transform for the
    feature rows. Training is seeded and deterministic; per-epoch pixel
    shifts of up to ``max_shift`` act as augmentation.
    """

    def __init__(self, hidden_widths=(256, 128), feature_width=32, epochs=12,
                 batch_size=128, learning_rate=1e-3, max_shift=2, seed=0):
        self.hidden_widths = hidden_widths
        self.feature_width = feature_width
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_shift = max_shift
        self.seed = seed

    def fit(self, X, y):
        X = as_image_matrix(X).astype(np.float32)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] != y.shape[0]:
            raise ConfigError(f"{X.shape[0]} images but {y.shape[0]} labels")
        if np.any(y < 0) or np.any(y >= NUM_CLASSES):
            raise ConfigError("labels must lie in 0..9")

        ss = np.random.SeedSequence(self.seed)
        s_init, s_train = ss.spawn(2)
        self.params_ = _init_params(
            np.random.default_rng(s_init), X.shape[1], self.hidden_widths, self.feature_width)
        opt = AdamState(self.params_, learning_rate=self.learning_rate)
        rng = np.random.default_rng(s_train)

        onehot = np.zeros((X.shape[0], NUM_CLASSES), dtype=np.float64)
        onehot[np.arange(X.shape[0]), y] = 1.0
        n = X.shape[0]
        for _ in range(int(self.epochs)):
            order = rng.permutation(n)
            for start in range(0, n, int(self.batch_size)):
                idx = order[start:start + int(self.batch_size)]
                xb = X[idx]
                if self.max_shift > 0:
                    shifts = rng.integers(-self.max_shift, self.max_shift + 1, size=(idx.size, 2))
                    xb = _shift_images(xb, shifts, self.max_shift)
                with Tape() as tape:
                    tape.watch(self.params_)
                    probs = _forward(self.params_, Tensor(xb))
                    picked = mul(Tensor(onehot[idx], dtype=np.float64), log(probs))
                    loss = scale(total(picked), -1.0 / idx.size)
                backward(loss, tape)
                adam_update(self.params_, opt)
        self.classes_ = np.arange(NUM_CLASSES)
        return self

    def predict_proba(self, X):
        """Probability rows (float64, summing to 1 within 1e-9)."""
        self._check_fitted()
        return _forward(self.params_, Tensor(as_image_matrix(X).astype(np.float32))).data

    def predict(self, X):
        """Argmax class per image; ties break to the lowest class index."""
        return np.argmax(self.predict_proba(X), axis=1)

    def transform(self, X):
        """Feature rows from the penultimate (feature_width) layer."""
        self._check_fitted()
        x = Tensor(as_image_matrix(X).astype(np.float32))
        return _hidden_stack(self.params_, x).data

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this DigitOracle instance is not fitted yet")


def _init_params(rng, input_width, hidden_widths, feature_width):
    widths = (int(input_width),) + tuple(int(w) for w in hidden_widths) + (int(feature_width), NUM_CLASSES)
    ps = ParameterSet()
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        w = (rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)).astype(np.float32)
        ps.add(f"l{i + 1}.w", Tensor(w))
        ps.add(f"l{i + 1}.b", Tensor(np.zeros(fan_out, dtype=np.float32)))
    return ps


def _num_layers(ps):
    return len(ps) // 2


def _hidden_stack(ps, x):
    h = x
    for i in range(1, _num_layers(ps)):
        h = silu(linear(h, ps[f"l{i}.w"], ps[f"l{i}.b"]))
    return h


def _forward(ps, x):
    h = _hidden_stack(ps, x)
    last = _num_layers(ps)
    return softmax(linear(h, ps[f"l{last}.w"], ps[f"l{last}.b"]))


def _shift_images(flat, shifts, max_shift):
    """Translate each 28x28 image by its (dy, dx) offset, padding with -1."""
    side = 28
    n = flat.shape[0]
    imgs = flat.reshape(n, side, side)
    pad = max_shift
    padded = np.full((n, side + 2 * pad, side + 2 * pad), -1.0, dtype=flat.dtype)
    padded[:, pad:pad + side, pad:pad + side] = imgs
    out = np.empty_like(imgs)
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            mask = (shifts[:, 0] == dy) & (shifts[:, 1] == dx)
            if mask.any():
                out[mask] = padded[mask, pad + dy:pad + dy + side, pad + dx:pad + dx + side]
    return out.reshape(n, side * side)
