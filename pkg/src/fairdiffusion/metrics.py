"""Evaluation metrics: group-proportion fairness measures, feature-space
distribution distance, confidence/diversity score, unrecognizable
proportion and the per-group indicator entropy report."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tensor
from .data import condition_embeddings, stack_images
from .diffusion import add_noise_batch
from .errors import ContractError
from .losses import entropy_rows
from .validation import check_probability_rows, check_unit_interval


@dataclass
class GroupDistribution:
    """Observed vs reference proportions over a binary group set."""
    labels: tuple
    observed: np.ndarray
    reference: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))


def fairness_discrepancy(dist):
    """Absolute gap between the reference and observed share of one group.

    For normalized binary proportions both groups give the same gap, so the
    value is computed as half the L1 distance, which is invariant under
    swapping the group labels by construction.
    """
    observed = _check_proportions("observed", dist.observed)
    reference = _check_proportions("reference", dist.reference)
    return float(0.5 * np.abs(reference - observed).sum())


def statistical_parity_difference(rate_a1, rate_a2):
    """Absolute difference between two per-group rates in [0, 1]."""
    r1 = check_unit_interval("rate_a1", rate_a1)
    r2 = check_unit_interval("rate_a2", rate_a2)
    return float(abs(r1 - r2))


def unrecognizable_proportion(predicted, intended):
    """Fraction of samples whose predicted class differs from the intended one."""
    predicted = np.asarray(predicted)
    intended = np.asarray(intended)
    if predicted.shape != intended.shape or predicted.ndim != 1 or predicted.size == 0:
        raise ContractError(f"predicted/intended must be equal-length nonempty vectors, got {predicted.shape} and {intended.shape}")
    return float(np.mean(predicted != intended))


def frechet_distance(features_real, features_gen):
    """Distance between Gaussian fits of two feature-row sets.

    |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the matrix square
    root taken through symmetric eigendecompositions (eigenvalues clamped
    at zero, as the fitted covariances can be near-singular at small n).
    """
    a = _check_features("features_real", features_real)
    b = _check_features("features_gen", features_gen)
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"feature widths differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a, cov_a = _fit_gaussian(a)
    mu_b, cov_b = _fit_gaussian(b)
    root_b = _sqrt_psd(cov_b)
    cross = root_b @ cov_a @ root_b
    cross = (cross + cross.T) / 2.0
    eigvals = np.linalg.eigvalsh(cross)
    trace_sqrt = np.sum(np.sqrt(np.clip(eigvals, 0.0, None)))
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def inception_score(probability_rows, n_splits=10):
    """exp(mean KL(p(y|x) || p(y))) per split; returns (mean, population std).

    Rows are divided into n_splits consecutive splits, dropping any
    remainder; each split uses its own marginal.
    """
    rows = check_probability_rows(probability_rows)
    n_splits = int(n_splits)
    if n_splits < 1:
        raise ContractError(f"n_splits must be >= 1, got {n_splits}")
    per_split = rows.shape[0] // n_splits
    if per_split < 1:
        raise ContractError(f"{rows.shape[0]} rows cannot fill {n_splits} splits")
    scores = []
    for i in range(n_splits):
        part = rows[i * per_split:(i + 1) * per_split]
        marginal = part.mean(axis=0)
        mask = part > 0
        logs = np.where(mask, np.log(np.where(mask, part, 1.0)) - np.log(marginal), 0.0)
        kl = (part * logs).sum(axis=1)
        scores.append(np.exp(kl.mean()))
    scores = np.asarray(scores)
    return float(scores.mean()), float(scores.std())


def pearson_r(x, y):
    """Sample Pearson correlation of two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ContractError(f"pearson_r needs two equal-length vectors of >= 2 entries, got {x.shape} and {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise ContractError("pearson_r undefined: a vector has zero variance")
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


@dataclass
class GroupEntropyReport:
    mean_entropy: dict
    pearson: Optional[float]
    entropies: dict


def group_entropy_report(denoiser, indicator, vocab, sched, groups, t_eval=None, seed=0):
    """Indicator entropies on held-out groups after one noising/denoising pass.

    Every example is noised at step ``t_eval`` (default: half the schedule)
    with group-locally seeded noise, reconstructed through the denoiser and
    scored by the indicator. The correlation pairs the first two groups by
    index after seeded shuffling, truncated to the shorter group; it is
    None when undefined (fewer than two groups, or zero entropy variance).
    """
    if not groups:
        raise ContractError("group_entropy_report: no groups given")
    if t_eval is None:
        t_eval = max(1, sched.num_steps // 2)
    dtype = denoiser.dtype
    mean_entropy = {}
    vectors = {}
    for label, examples in groups.items():
        examples = list(examples)
        if not examples:
            raise ContractError(f"group {label!r} is empty")
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(examples))
        shuffled = [examples[i] for i in order]
        z0 = stack_images(shuffled).astype(dtype)
        eps = rng.standard_normal(z0.shape, dtype=dtype)
        steps = np.full(z0.shape[0], int(t_eval))
        z_t = add_noise_batch(z0, eps, steps, sched)
        t_emb = Tensor(denoiser.step_embedding(steps), dtype=dtype)
        c_emb = condition_embeddings(vocab, [ex.condition_id for ex in shuffled])
        eps_hat = denoiser.forward(Tensor(z_t), t_emb, c_emb).data
        denoised = z0 + (eps - eps_hat)
        probs = indicator.forward(Tensor(denoised)).data
        values = entropy_rows(probs)
        vectors[label] = values
        mean_entropy[label] = float(values.mean())

    correlation = None
    if len(vectors) >= 2:
        first, second = list(vectors.values())[:2]
        m = min(first.size, second.size)
        if m >= 2:
            try:
                correlation = pearson_r(first[:m], second[:m])
            except ContractError:
                correlation = None
    return GroupEntropyReport(mean_entropy=mean_entropy, pearson=correlation, entropies=vectors)


@dataclass
class MetricsReport:
    scenario: str
    fd: Optional[float]
    spd: Optional[float]
    frechet: float
    is_mean: float
    is_std: float
    unrecognizable: float
    per_group_entropy: dict
    pearson: Optional[float]
    sample_counts: dict
    config_fingerprint: str

    def to_dict(self):
        return {
            "report_version": 1,
            "scenario": self.scenario,
            "fd": self.fd,
            "spd": self.spd,
            "frechet": self.frechet,
            "is_mean": self.is_mean,
            "is_std": self.is_std,
            "unrecognizable": self.unrecognizable,
            "per_group_entropy": self.per_group_entropy,
            "pearson": self.pearson,
            "sample_counts": self.sample_counts,
            "config_fingerprint": self.config_fingerprint,
        }


def _check_proportions(name, values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (2,):
        raise ContractError(f"{name} proportions must be a pair, got shape {arr.shape}")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
        raise ContractError(f"{name} proportions must be nonnegative and sum to 1 within 1e-9")
    return arr


def _check_features(name, rows):
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-d feature rows, got shape {arr.shape}")
    if arr.shape[0] < arr.shape[1] + 1:
        raise ContractError(f"{name} needs at least dim+1 = {arr.shape[1] + 1} rows, got {arr.shape[0]}")
    return arr


def _fit_gaussian(rows):
    mu = rows.mean(axis=0)
    centered = rows - mu
    cov = centered.T @ centered / (rows.shape[0] - 1)
    return mu, cov


def _sqrt_psd(matrix):
    sym = (matrix + matrix.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
