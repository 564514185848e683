"""Segmentation loss and the class-averaged IoU metric."""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Hashable, Sequence

import numpy as np

from ..exceptions import ContractError, ShapeError
from ..tensor import autodiff as ad
from ..tensor.autodiff import Tape
from ..validation import check_binary

PROB_EPS = 1e-7


def bce_loss(probs, truth) -> float:
    """Mean binary cross-entropy over pixels, probabilities clamped to [1e-7, 1 - 1e-7]."""
    probs = np.asarray(probs, dtype=np.float64)
    truth = check_binary(truth, "truth")
    if probs.shape != truth.shape:
        raise ShapeError(f"probs {probs.shape} vs truth {truth.shape}")
    tape = Tape()
    return float(ad.bce(tape.constant(probs), truth, PROB_EPS).value)


def _binary(m) -> np.ndarray:
    m = getattr(m, "binary", m)
    m = np.asarray(m)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[:, :, 0]
    return m > 0.5


def miou(preds: Sequence, truths: Sequence, classes: Sequence[Hashable]) -> float:
    """Per-class IoU (intersections and unions summed over that class's samples),
    averaged over classes. A class with an empty union scores 1."""
    if len(preds) == 0:
        raise ContractError("miou needs at least one sample")
    if not len(preds) == len(truths) == len(classes):
        raise ContractError(
            f"misaligned inputs: {len(preds)} preds, {len(truths)} truths, {len(classes)} classes"
        )
    inter: dict = defaultdict(int)
    union: dict = defaultdict(int)
    for p, t, c in zip(preds, truths, classes):
        p, t = _binary(p), _binary(t)
        if p.shape != t.shape:
            raise ShapeError(f"prediction {p.shape} vs truth {t.shape}")
        inter[c] += int(np.count_nonzero(p & t))
        union[c] += int(np.count_nonzero(p | t))
    scores = [inter[c] / union[c] if union[c] else 1.0 for c in union]
    # fsum makes the result independent of class order
    return math.fsum(scores) / len(scores)
