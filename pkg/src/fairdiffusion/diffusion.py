"""Forward noising, noise prediction, latent reconstruction and sampling."""

import numpy as np

from .autodiff import Tensor, add, mean, mul, scale, sub
from .errors import ContractError, DimensionError


def add_noise(z0, eps, t, sched):
    """z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps for one step t."""
    if z0.shape != eps.shape:
        raise ContractError(f"add_noise: shapes differ, {z0.shape} vs {eps.shape}")
    abar = sched.alpha_bar(t)
    return add(scale(z0, np.sqrt(abar)), scale(eps, np.sqrt(1.0 - abar)))


def add_noise_batch(z0, eps, steps, sched):
    """Vectorized forward noising with one step per row.

    z0 and eps are plain arrays [n, d]; returns an array, since the noising
    coefficients never require gradients.
    """
    if z0.shape != eps.shape:
        raise ContractError(f"add_noise_batch: shapes differ, {z0.shape} vs {eps.shape}")
    steps = np.asarray(steps, dtype=np.int64)
    if steps.shape != (z0.shape[0],):
        raise ContractError("add_noise_batch: need one step per row")
    if np.any(steps < 1) or np.any(steps > sched.num_steps):
        raise ContractError(f"steps outside [1, {sched.num_steps}]")
    abar = sched.alpha_bars[steps - 1].astype(z0.dtype)[:, None]
    return np.sqrt(abar) * z0 + np.sqrt(1.0 - abar) * eps


def predict_noise(net, z_t, t, c_embed):
    """Run the denoiser at a single step t for a batch of flattened latents."""
    if z_t.data.ndim != 2:
        raise DimensionError(f"predict_noise expects [n, width] input, got {z_t.shape}")
    n = z_t.shape[0]
    t_emb = Tensor(np.repeat(net.step_embedding([t]), n, axis=0), dtype=z_t.dtype)
    if c_embed.data.ndim == 1:
        c_embed = Tensor(np.repeat(c_embed.data[None, :], n, axis=0), dtype=z_t.dtype)
    elif c_embed.shape[0] == 1 and n > 1:
        c_embed = Tensor(np.repeat(c_embed.data, n, axis=0), dtype=z_t.dtype)
    return net.forward(z_t, t_emb, c_embed)


def reconstruct_latent(z0, eps, eps_hat):
    """Denoised latent z0 + (eps - eps_hat), exactly in that form."""
    if z0.shape != eps.shape or eps.shape != eps_hat.shape:
        raise ContractError(f"reconstruct_latent: shapes differ, {z0.shape}/{eps.shape}/{eps_hat.shape}")
    return add(z0, sub(eps, eps_hat))


def diffusion_loss(eps, eps_hat):
    """Mean over all elements of the squared noise-prediction error."""
    if eps.shape != eps_hat.shape:
        raise ContractError(f"diffusion_loss: shapes differ, {eps.shape} vs {eps_hat.shape}")
    diff = sub(eps, eps_hat)
    return mean(mul(diff, diff))


def ancestral_sample(net, sched, cond_row, n, seed):
    """Generate n images by iterating the reverse-process posterior mean.

    Starts from seeded standard-normal latents at the final step; Gaussian
    noise scaled by sqrt(beta_t) is added for every step except the last,
    and the result is clamped to [-1, 1]. Deterministic for a fixed
    (seed, parameters, schedule, condition).
    """
    if n < 1:
        raise ContractError(f"ancestral_sample: n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    dtype = net.dtype
    cond = np.asarray(cond_row, dtype=dtype).reshape(1, -1)
    cond_batch = Tensor(np.repeat(cond, n, axis=0), dtype=dtype)
    x = rng.standard_normal((n, net.input_width), dtype=dtype)
    for t in range(sched.num_steps, 0, -1):
        t_emb = Tensor(np.repeat(net.step_embedding([t]), n, axis=0), dtype=dtype)
        eps_hat = net.forward(Tensor(x, dtype=dtype), t_emb, cond_batch).data
        beta = sched.beta(t)
        coef = float(beta / np.sqrt(1.0 - sched.alpha_bar(t)))
        x = (x - coef * eps_hat) / float(np.sqrt(sched.alpha(t)))
        if t > 1:
            x = x + float(np.sqrt(beta)) * rng.standard_normal((n, net.input_width), dtype=dtype)
    return np.clip(x, -1.0, 1.0)
