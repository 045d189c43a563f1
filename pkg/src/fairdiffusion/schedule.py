"""Forward-process noise schedule."""

import numpy as np

from .errors import ConfigError, ContractError


class NoiseSchedule:
    """Per-step retention tables: beta[t], alpha[t] = 1 - beta[t] and the
    running product alpha_bar[t], all 1-indexed through the accessors."""

    def __init__(self, betas):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ConfigError("schedule needs at least one beta")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigError("betas must lie strictly inside (0, 1)")
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bars = np.cumprod(self.alphas)

    @property
    def num_steps(self):
        return int(self.betas.size)

    def _check_t(self, t):
        t = int(t)
        if not 1 <= t <= self.num_steps:
            raise ContractError(f"step {t} outside [1, {self.num_steps}]")
        return t

    def beta(self, t):
        return float(self.betas[self._check_t(t) - 1])

    def alpha(self, t):
        return float(self.alphas[self._check_t(t) - 1])

    def alpha_bar(self, t):
        return float(self.alpha_bars[self._check_t(t) - 1])


def build_schedule(num_steps, beta_start=1e-4, beta_end=0.02):
    """Linearly spaced betas from beta_start to beta_end over num_steps."""
    num_steps = int(num_steps)
    if num_steps < 1:
        raise ConfigError(f"num_steps must be >= 1, got {num_steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError(f"betas must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})")
    return NoiseSchedule(np.linspace(beta_start, beta_end, num_steps))
