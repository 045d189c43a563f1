"""Losses that couple the indicator to the diffusion objective, plus the
prediction entropy used by the evaluation reports."""

import numpy as np

from .autodiff import Tensor, add, cast, log, mean, mul, scale, total
from .errors import ContractError
from .validation import check_alpha, check_probability_pair


def indicator_loss(y, yhat):
    """Cross-entropy sum_i y_i * ln(1 / yhat_i), batch-averaged over rows.

    ``y`` is a one-hot array (row per example); ``yhat`` the matching
    probability Tensor. Probabilities are floored at 1e-12 inside ``log``.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if y_arr.ndim == 1:
        y_arr = y_arr[None, :]
    if not ((y_arr == 0) | (y_arr == 1)).all() or not (y_arr.sum(axis=1) == 1).all():
        raise ContractError("indicator_loss: y rows must be one-hot")
    yhat_t = yhat if isinstance(yhat, Tensor) else Tensor(yhat, dtype=np.float64)
    if yhat_t.data.ndim == 1:
        yhat_t = Tensor(yhat_t.data[None, :], dtype=yhat_t.dtype)
    if yhat_t.shape != y_arr.shape:
        raise ContractError(f"indicator_loss: shapes differ, {y_arr.shape} vs {yhat_t.shape}")
    picked = mul(Tensor(y_arr, dtype=yhat_t.dtype), log(yhat_t))
    return scale(total(picked), -1.0 / y_arr.shape[0])


def combined_loss(diff_loss, ind_loss, alpha):
    """(1 - alpha) * diffusion loss + alpha * indicator loss, in float64."""
    alpha = check_alpha(alpha)
    for name, value in (("diffusion", diff_loss), ("indicator", ind_loss)):
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        if not np.all(np.isfinite(arr)):
            raise ContractError(f"combined_loss: non-finite {name} loss")
    if not isinstance(diff_loss, Tensor):
        diff_loss = Tensor(diff_loss, dtype=np.float64)
    if not isinstance(ind_loss, Tensor):
        ind_loss = Tensor(ind_loss, dtype=np.float64)
    return add(scale(cast(diff_loss, np.float64), 1.0 - alpha),
               scale(cast(ind_loss, np.float64), alpha))


def entropy(yhat):
    """Prediction entropy -sum_i p_i ln p_i with 0 * ln 0 = 0.

    The pair is renormalized in float64 before the logarithm so the result
    never exceeds ln 2 by more than rounding noise.
    """
    arr = check_probability_pair(yhat)
    return _entropy_rows(arr[None, :])[0]


def entropy_rows(probs, tol=1e-9):
    """Vectorized entropy for an array of probability rows."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"entropy_rows expects [n, k] rows, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ContractError("entropy_rows: negative entry")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ContractError(f"entropy_rows: rows must sum to 1 within {tol}")
    return _entropy_rows(arr)


def _entropy_rows(arr):
    normed = arr / arr.sum(axis=1, keepdims=True)
    terms = np.where(normed > 0, normed * np.log(np.where(normed > 0, normed, 1.0)), 0.0)
    return -terms.sum(axis=1)
