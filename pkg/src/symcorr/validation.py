"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

import math

import numpy as np

from .exceptions import ContractError, ShapeError


def check_tokens(x, name: str = "tokens") -> np.ndarray:
    """Return ``x`` as a finite float64 (n, d) array with n, d >= 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D (tokens x dim) array, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one token and one feature, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError(f"{name} contains NaN or Inf")
    return x


def check_grid(g, name: str = "grid", channels: int | None = None) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim == 2:
        g = g[:, :, None]
    if g.ndim != 3 or min(g.shape) < 1:
        raise ShapeError(f"{name} must be a non-empty H x W x C array, got shape {g.shape}")
    if channels is not None and g.shape[2] != channels:
        raise ShapeError(f"{name} must have {channels} channel(s), got {g.shape[2]}")
    if not np.all(np.isfinite(g)):
        raise ContractError(f"{name} contains NaN or Inf")
    return g


def check_binary(m, name: str = "mask") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ContractError(f"{name} must contain only 0 and 1")
    return m


def grid_side(n_tokens: int, name: str = "token count") -> int:
    """Side of the square token grid holding ``n_tokens`` tokens."""
    side = math.isqrt(int(n_tokens))
    if side * side != n_tokens:
        raise ShapeError(f"{name} {n_tokens} is not a perfect square")
    return side


def check_count(value, name: str, minimum: int = 0) -> int:
    if int(value) != value or value < minimum:
        raise ContractError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
