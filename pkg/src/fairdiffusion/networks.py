"""Trainable networks: the conditional noise predictor and the
target/non-target indicator head."""

import numpy as np

from .autodiff import ParameterSet, Tensor, add, concat, linear, silu, softmax
from .errors import ConfigError, DimensionError


def time_embedding_table(num_steps, width=32, max_period=10000.0, dtype=np.float32):
    """Sinusoidal embeddings for steps 1..num_steps; row t-1 holds step t.

    Channel pair k carries (sin(t * w_k), cos(t * w_k)) with geometrically
    spaced frequencies w_k; entries lie in [-1, 1] and rows are pairwise
    distinct because the k=0 channel has period 2*pi, never an integer.
    """
    if width % 2 != 0 or width < 2:
        raise ConfigError(f"time embedding width must be even and >= 2, got {width}")
    half = width // 2
    freqs = max_period ** (-np.arange(half, dtype=np.float64) / half)
    steps = np.arange(1, num_steps + 1, dtype=np.float64)[:, None]
    angles = steps * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1).astype(dtype)


def _normal_init(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)


class DenoiserNet:
    """Residual MLP noise predictor conditioned on step and condition embeddings.

    The flattened input, the step embedding and the condition embedding are
    concatenated and projected to the hidden width; a bias-free projection of
    the input is added residually to that first pre-activation. Two silu
    hidden layers feed a linear output of the input width. The output layer
    starts at zero so an untrained net predicts zero noise.
    """

    def __init__(self, input_width=784, time_width=32, cond_width=16,
                 hidden_width=256, num_steps=200, rng=None, dtype=np.float32):
        self.input_width = int(input_width)
        self.time_width = int(time_width)
        self.cond_width = int(cond_width)
        self.hidden_width = int(hidden_width)
        self.num_steps = int(num_steps)
        self.dtype = np.dtype(dtype)
        self.time_table = time_embedding_table(self.num_steps, self.time_width, dtype=self.dtype)

        if rng is None:
            rng = np.random.default_rng(0)
        cat = self.input_width + self.time_width + self.cond_width
        h = self.hidden_width
        p = ParameterSet()
        p.add("in.w", Tensor(_normal_init(rng, (cat, h), cat, self.dtype)))
        p.add("in.b", Tensor(np.zeros(h, dtype=self.dtype)))
        p.add("skip.w", Tensor(_normal_init(rng, (self.input_width, h), self.input_width, self.dtype)))
        p.add("mid.w", Tensor(_normal_init(rng, (h, h), h, self.dtype)))
        p.add("mid.b", Tensor(np.zeros(h, dtype=self.dtype)))
        p.add("out.w", Tensor(np.zeros((h, self.input_width), dtype=self.dtype)))
        p.add("out.b", Tensor(np.zeros(self.input_width, dtype=self.dtype)))
        self.params = p

    def architecture(self):
        return {
            "input_width": self.input_width,
            "time_width": self.time_width,
            "cond_width": self.cond_width,
            "hidden_width": self.hidden_width,
            "num_steps": self.num_steps,
        }

    def step_embedding(self, steps):
        """Embedding rows for an array of 1-indexed steps."""
        idx = np.asarray(steps, dtype=np.int64) - 1
        if np.any(idx < 0) or np.any(idx >= self.num_steps):
            raise DimensionError(f"steps outside [1, {self.num_steps}]")
        return self.time_table[idx]

    def forward(self, z, t_emb, c_emb):
        """Predict per-element noise for a batch of flattened inputs."""
        if z.shape[1] != self.input_width:
            raise DimensionError(f"denoiser expects input width {self.input_width}, got {z.shape[1]}")
        p = self.params
        x = concat([z, t_emb, c_emb], axis=1)
        pre = add(linear(x, p["in.w"], p["in.b"]), linear(z, p["skip.w"]))
        h = silu(pre)
        h = silu(linear(h, p["mid.w"], p["mid.b"]))
        return linear(h, p["out.w"], p["out.b"])


class IndicatorNet:
    """Three fully connected layers mapping a flattened latent to a
    (non-target, target) probability pair."""

    def __init__(self, input_width=784, hidden_widths=(128, 32), rng=None, dtype=np.float32):
        if len(hidden_widths) != 2:
            raise ConfigError("indicator uses exactly two hidden widths (three layers)")
        self.input_width = int(input_width)
        self.hidden_widths = tuple(int(w) for w in hidden_widths)
        self.dtype = np.dtype(dtype)
        if rng is None:
            rng = np.random.default_rng(0)
        widths = (self.input_width,) + self.hidden_widths + (2,)
        p = ParameterSet()
        for i in range(3):
            fan_in, fan_out = widths[i], widths[i + 1]
            p.add(f"l{i + 1}.w", Tensor(_normal_init(rng, (fan_in, fan_out), fan_in, self.dtype)))
            p.add(f"l{i + 1}.b", Tensor(np.zeros(fan_out, dtype=self.dtype)))
        self.params = p

    def architecture(self):
        return {"input_width": self.input_width, "hidden_widths": list(self.hidden_widths)}

    def forward(self, z):
        """Class probabilities, float64 rows summing to 1."""
        if z.shape[1] != self.input_width:
            raise DimensionError(f"indicator expects input width {self.input_width}, got {z.shape[1]}")
        p = self.params
        h = silu(linear(z, p["l1.w"], p["l1.b"]))
        h = silu(linear(h, p["l2.w"], p["l2.b"]))
        return softmax(linear(h, p["l3.w"], p["l3.b"]))
