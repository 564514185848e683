"""Central finite-difference checking of analytic gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..exceptions import ContractError, EvaluationError


def central_differences(f: Callable[[np.ndarray], float], params, step: float = 1e-5) -> np.ndarray:
    if not step > 0:
        raise ContractError(f"step must be > 0, got {step}")
    x0 = np.array(params, dtype=np.float64).ravel()
    grad = np.empty_like(x0)
    x = x0.copy()
    for j in range(x0.size):
        x[j] = x0[j] + step
        fplus = _evaluate(f, x)
        x[j] = x0[j] - step
        fminus = _evaluate(f, x)
        x[j] = x0[j]
        grad[j] = (fplus - fminus) / (2.0 * step)
    return grad


def _evaluate(f, x) -> float:
    value = float(f(x.copy()))
    if not np.isfinite(value):
        raise EvaluationError(f"function returned {value!r}")
    return value


def relative_errors(analytic, numeric) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))


def finite_difference_check(f, params, step: float = 1e-5, *, grad) -> float:
    """Max over coordinates of ``|analytic - central| / max(1, |analytic|)``.

    ``grad`` is either the analytic gradient at ``params`` or a callable
    returning it.
    """
    params = np.array(params, dtype=np.float64).ravel()
    analytic = grad(params.copy()) if callable(grad) else grad
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    if analytic.shape != params.shape:
        raise ContractError(f"gradient shape {analytic.shape} != params {params.shape}")
    numeric = central_differences(f, params, step)
    return float(relative_errors(analytic, numeric).max(initial=0.0))


class ParameterVector:
    """Flatten a list of arrays into one vector and back."""

    def __init__(self, arrays: Sequence[np.ndarray]):
        self.shapes = [np.shape(a) for a in arrays]
        self.sizes = [int(np.prod(s)) for s in self.shapes]

    def flatten(self, arrays) -> np.ndarray:
        if not arrays:
            return np.zeros(0)
        return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])

    def unflatten(self, vec) -> list[np.ndarray]:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != sum(self.sizes):
            raise ContractError(f"vector has {vec.size} entries, expected {sum(self.sizes)}")
        out, pos = [], 0
        for shape, size in zip(self.shapes, self.sizes):
            out.append(vec[pos:pos + size].reshape(shape).copy())
            pos += size
        return out
