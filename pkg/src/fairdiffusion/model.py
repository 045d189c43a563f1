"""Joint training of the noise predictor and the indicator under the
alpha-weighted combined loss, wrapped as a scikit-learn style estimator."""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .autodiff import ParameterSet, Tape, Tensor, backward
from .data import ConditionVocab, condition_embeddings, stack_images
from .diffusion import add_noise_batch, ancestral_sample, diffusion_loss, reconstruct_latent
from .errors import ConfigError, NumericError
from .losses import combined_loss, indicator_loss
from .networks import DenoiserNet, IndicatorNet
from .optim import AdamState, adam_update
from .schedule import build_schedule
from .validation import check_alpha


@dataclass
class TrainRecord:
    step: int
    diffusion_loss: float
    indicator_loss: Optional[float]
    combined_loss: float
    timesteps: tuple


def history_to_csv(records, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "diffusion_loss", "indicator_loss", "combined_loss", "timesteps"])
        for r in records:
            ind = "" if r.indicator_loss is None else repr(r.indicator_loss)
            writer.writerow([r.step, repr(r.diffusion_loss), ind, repr(r.combined_loss),
                             ";".join(str(t) for t in r.timesteps)])


def _abort_on_nonfinite(name, value, step_index, steps, cond_ids, batch):
    if not np.isfinite(value.data):
        raise NumericError(
            f"non-finite {name} at step {step_index}: steps={list(map(int, steps))}, "
            f"conditions={cond_ids}, labels={[int(ex.y) for ex in batch]}")


def train_step(denoiser, indicator, vocab, batch, sched, alpha, params, opt_state, rng,
               step_index=0, include_indicator=True):
    """One joint update: noise a batch, predict, reconstruct, classify,
    backpropagate the combined loss and apply one optimizer step.

    The random draws (per-example step, per-example noise) are identical
    whether or not the indicator participates, so an alpha = 0 run and a
    pure-diffusion run consume the same stream.
    """
    n = len(batch)
    z0 = stack_images(batch)
    cond_ids = [ex.condition_id for ex in batch]
    y = np.zeros((n, 2), dtype=np.float64)
    y[np.arange(n), [int(ex.y) for ex in batch]] = 1.0

    steps = rng.integers(1, sched.num_steps + 1, size=n)
    eps = rng.standard_normal((n, z0.shape[1]), dtype=z0.dtype)
    z_t = add_noise_batch(z0, eps, steps, sched)

    eps_t = Tensor(eps)
    with Tape() as tape:
        tape.watch(params)
        t_emb = Tensor(denoiser.step_embedding(steps), dtype=z0.dtype)
        c_emb = condition_embeddings(vocab, cond_ids)
        eps_hat = denoiser.forward(Tensor(z_t), t_emb, c_emb)
        l_diff = diffusion_loss(eps_t, eps_hat)
        _abort_on_nonfinite("diffusion loss", l_diff, step_index, steps, cond_ids, batch)
        if include_indicator:
            denoised = reconstruct_latent(Tensor(z0), eps_t, eps_hat)
            probs = indicator.forward(denoised)
            l_ind = indicator_loss(y, probs)
            _abort_on_nonfinite("indicator loss", l_ind, step_index, steps, cond_ids, batch)
            loss = combined_loss(l_diff, l_ind, alpha)
        else:
            l_ind = None
            loss = l_diff
    backward(loss, tape)
    adam_update(params, opt_state)
    return TrainRecord(
        step=step_index,
        diffusion_loss=float(l_diff.data),
        indicator_loss=None if l_ind is None else float(l_ind.data),
        combined_loss=float(loss.data),
        timesteps=tuple(int(t) for t in steps),
    )


class DebiasingDiffusion(BaseEstimator):
    """Conditional denoising diffusion model trained jointly with a
    target/non-target indicator head.

    ``alpha`` weighs the indicator's cross-entropy against the noise
    prediction loss; ``alpha=0`` reproduces a plain diffusion model.
    Setting ``include_indicator=False`` removes the indicator from the
    computation graph entirely (the reference baseline trainer).
    """

    def __init__(self, alpha=0.0, epochs=30, batch_size=8, learning_rate=1e-3,
                 num_steps=200, beta_start=1e-4, beta_end=0.02, hidden_width=256,
                 time_width=32, cond_width=16, indicator_widths=(128, 32),
                 include_indicator=True, seed=0):
        self.alpha = alpha
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.num_steps = num_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.hidden_width = hidden_width
        self.time_width = time_width
        self.cond_width = cond_width
        self.indicator_widths = indicator_widths
        self.include_indicator = include_indicator
        self.seed = seed

    def fit(self, examples, y=None):
        """Train on a sequence of LabeledExample drawn uniformly (shuffled
        each epoch); returns self with fitted nets and per-step history."""
        alpha = check_alpha(self.alpha)
        if int(self.epochs) < 0 or int(self.batch_size) < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        examples = list(examples)
        if not examples:
            raise ConfigError("cannot fit on an empty dataset")
        input_width = int(examples[0].image.size)

        ss = np.random.SeedSequence(self.seed)
        s_den, s_ind, s_cond, s_train = ss.spawn(4)
        self.schedule_ = build_schedule(self.num_steps, self.beta_start, self.beta_end)
        self.denoiser_ = DenoiserNet(
            input_width=input_width, time_width=self.time_width, cond_width=self.cond_width,
            hidden_width=self.hidden_width, num_steps=self.num_steps,
            rng=np.random.default_rng(s_den))
        self.indicator_ = IndicatorNet(
            input_width=input_width, hidden_widths=self.indicator_widths,
            rng=np.random.default_rng(s_ind))
        self.vocab_ = ConditionVocab(embed_width=self.cond_width, seed=s_cond)
        self.params_ = ParameterSet.union(
            ("denoiser", self.denoiser_.params),
            ("indicator", self.indicator_.params),
            ("cond", _table_params(self.vocab_)),
        )
        self.optimizer_ = AdamState(self.params_, learning_rate=self.learning_rate)

        train_rng = np.random.default_rng(s_train)
        history = []
        step = 0
        for _ in range(int(self.epochs)):
            order = train_rng.permutation(len(examples))
            for start in range(0, len(examples), int(self.batch_size)):
                batch = [examples[i] for i in order[start:start + int(self.batch_size)]]
                record = train_step(
                    self.denoiser_, self.indicator_, self.vocab_, batch, self.schedule_,
                    alpha, self.params_, self.optimizer_, train_rng,
                    step_index=step, include_indicator=self.include_indicator)
                history.append(record)
                step += 1
        self.history_ = history
        return self

    def sample(self, condition, n, seed=0):
        """Generate n images for a condition name or id; [n, 28, 28] when
        the model works on 28x28 inputs, flat rows otherwise."""
        self._check_fitted()
        cid = self.vocab_.resolve(condition) if isinstance(condition, str) else self.vocab_.check_id(condition)
        cond_row = self.vocab_.table.data[cid]
        flat = ancestral_sample(self.denoiser_, self.schedule_, cond_row, n, seed)
        if flat.shape[1] == 784:
            return flat.reshape(-1, 28, 28)
        return flat

    def _check_fitted(self):
        if not hasattr(self, "denoiser_"):
            raise NotFittedError("this DebiasingDiffusion instance is not fitted yet")


def _table_params(vocab):
    ps = ParameterSet()
    ps.add("table", vocab.table)
    return ps
