"""Input validation helpers shared by estimators and metric functions."""

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

IMAGE_SIDE = 28
IMAGE_WIDTH = IMAGE_SIDE * IMAGE_SIDE


def check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def check_unit_interval(name, value):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ContractError(f"{name} must lie in [0, 1], got {value}")
    return value


def as_image_matrix(images):
    """Coerce [n, 28, 28] or [n, 784] input to a float [n, 784] matrix."""
    arr = np.asarray(images)
    if arr.ndim == 3 and arr.shape[1:] == (IMAGE_SIDE, IMAGE_SIDE):
        arr = arr.reshape(arr.shape[0], IMAGE_WIDTH)
    if arr.ndim != 2 or arr.shape[1] != IMAGE_WIDTH:
        raise DimensionError(f"expected images shaped [n, {IMAGE_WIDTH}] or [n, {IMAGE_SIDE}, {IMAGE_SIDE}], got {arr.shape}")
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


def check_probability_rows(rows, tol=1e-9):
    """Validate nonnegative rows that each sum to 1 within ``tol``."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ContractError(f"expected a nonempty 2-d array of probability rows, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ContractError("probability rows contain negative entries")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.abs(sums - 1.0).max())
        raise ContractError(f"probability rows must sum to 1 within {tol}, worst deviation {worst:.3g}")
    return arr


def check_probability_pair(pair, tol=1e-9):
    arr = np.asarray(pair, dtype=np.float64).reshape(-1)
    if arr.shape != (2,):
        raise ContractError(f"expected a probability pair, got shape {np.asarray(pair).shape}")
    if np.any(arr < 0):
        raise ContractError("probability pair contains a negative entry")
    if abs(arr.sum() - 1.0) > tol:
        raise ContractError(f"probability pair must sum to 1 within {tol}, got {arr.sum()!r}")
    return arr


def check_one_hot_pair(pair):
    arr = np.asarray(pair, dtype=np.float64).reshape(-1)
    if arr.shape != (2,) or not ((arr == 0) | (arr == 1)).all() or arr.sum() != 1:
        raise ContractError(f"expected a one-hot pair, got {pair!r}")
    return arr
