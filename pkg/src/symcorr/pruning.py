"""Support pruning: pick the N' supports whose mean token best matches the query.

The score of a subset is additive over its members. Each member contributes
the dot product of its projected mean token with the projected mean query
token, so a support is projected once per layer and no token-level
attention is ever formed.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .correlation import ScProjector, SupportPack, contribution_index, multi_head_sc, project_node
from .exceptions import ContractError, ShapeError
from .tensor.autodiff import Tape
from .validation import check_tokens

Projection = Union[ScProjector, Sequence[ScProjector]]


@dataclass
class PruneScoreTable:
    per_support_theta_term: np.ndarray
    query_embedding: np.ndarray

    def __len__(self):
        return len(self.per_support_theta_term)


@dataclass
class PruneResult:
    selected_ids: list
    objective_value: float
    evaluations: int = 0


@dataclass(frozen=True)
class PruneConfig:
    """Pruning runs only when the pool holds more than ``threshold`` supports."""

    enabled: bool = True
    threshold: int = 30
    keep: int = 30

    def active(self, pool_size: int) -> bool:
        return self.enabled and pool_size > self.threshold


@dataclass
class JensenGap:
    support: int
    delta: float
    theta_term: float
    gap: float


def _heads(p: Projection) -> list:
    return [p] if isinstance(p, ScProjector) else list(p)


def project_mean(x, p: Projection) -> np.ndarray:
    """Project the mean token of ``x``; multi-head projectors act on their slices."""
    x = check_tokens(x)
    heads = _heads(p)
    d = x.shape[1]
    if d % len(heads):
        raise ShapeError(f"token dim {d} not divisible by {len(heads)} heads")
    dh = d // len(heads)
    mean = x.mean(axis=0, keepdims=True)
    tape = Tape()
    parts = []
    for h, head in enumerate(heads):
        head.check(dh)
        parts.append(project_node(tape, head, mean[:, h * dh:(h + 1) * dh]).value[0])
    return np.concatenate(parts)


def theta_term(support, query, p: Projection) -> float:
    """Projected mean support token dotted with projected mean query token."""
    return float(project_mean(support, p) @ project_mean(query, p))


def score_table(pool: Sequence, query, p: Projection) -> PruneScoreTable:
    q = project_mean(query, p)
    terms = np.array([project_mean(s, p) @ q for s in pool], dtype=np.float64)
    return PruneScoreTable(terms, q)


def _check_n_prime(n_prime, n: int) -> int:
    if int(n_prime) != n_prime or not 1 <= n_prime <= n:
        raise ContractError(f"n_prime must satisfy 1 <= n_prime <= {n}, got {n_prime}")
    return int(n_prime)


def greedy_select(terms, n_prime: int) -> PruneResult:
    """Reference greedy loop: rescore every partial set, keep strict improvements."""
    terms = np.asarray(terms, dtype=np.float64)
    if not np.all(np.isfinite(terms)):
        raise ContractError("subset scores must be finite")
    n = terms.size
    n_prime = _check_n_prime(n_prime, n)
    index: list[int] = []
    evaluations = 0
    for _ in range(n_prime):
        best_n, best = -1, -math.inf
        for cand in range(n):
            if cand in index:
                continue
            score = math.fsum(terms[index + [cand]])
            evaluations += 1
            if score > best:
                best_n, best = cand, score
        index.append(best_n)
    return PruneResult(index, math.fsum(terms[index]), evaluations)


def greedy_prune(pool: Sequence, query, p: Projection, n_prime: int) -> PruneResult:
    _check_n_prime(n_prime, len(pool))
    return greedy_select(score_table(pool, query, p).per_support_theta_term, n_prime)


def topk_prune(table: PruneScoreTable | Sequence[float], n_prime: int) -> PruneResult:
    """Pick the ``n_prime`` largest terms; ties go to the lower index."""
    terms = np.asarray(getattr(table, "per_support_theta_term", table), dtype=np.float64)
    n_prime = _check_n_prime(n_prime, terms.size)
    order = np.argsort(-terms, kind="stable")[:n_prime]
    ids = [int(i) for i in order]
    return PruneResult(ids, math.fsum(terms[ids]), 0)


def brute_force_prune(terms, n_prime: int) -> PruneResult:
    """Exhaustive search over all subsets of size ``n_prime``."""
    terms = np.asarray(terms, dtype=np.float64)
    n_prime = _check_n_prime(n_prime, terms.size)
    best, best_set, count = -math.inf, None, 0
    for combo in itertools.combinations(range(terms.size), n_prime):
        score = math.fsum(terms[list(combo)])
        count += 1
        if score > best:
            best, best_set = score, combo
    return PruneResult(list(best_set), best, count)


def multilayer_terms(pools: Sequence[Sequence], query_layers: Sequence, projectors: Sequence) -> np.ndarray:
    """Per-support score averaged over layers. ``pools[l][i]`` is support i at layer l."""
    n_layers = len(query_layers)
    if len(pools) != n_layers or len(projectors) != n_layers:
        raise ContractError(
            f"layer counts differ: pools {len(pools)}, query {n_layers}, projectors {len(projectors)}"
        )
    if n_layers == 0:
        raise ContractError("need at least one layer")
    sizes = {len(layer) for layer in pools}
    if len(sizes) != 1:
        raise ContractError(f"ragged pools: per-layer sizes {sorted(sizes)}")
    per_layer = [score_table(pools[l], query_layers[l], projectors[l]).per_support_theta_term
                 for l in range(n_layers)]
    return np.mean(per_layer, axis=0)


def multilayer_prune(pools, query_layers, projectors, n_prime: int) -> PruneResult:
    terms = multilayer_terms(pools, query_layers, projectors)
    return greedy_select(terms, n_prime)


def jensen_gap_report(pool: Sequence, query, p: Projection, scale_mode: str = "sqrt_d") -> list[JensenGap]:
    """Contribution under full attention next to the mean-token score, per support.

    The gap is reported, not asserted: its sign is not guaranteed.
    """
    heads = _heads(p)
    amap = multi_head_sc(SupportPack.from_tokens(list(pool)), query, heads, scale_mode)
    deltas = contribution_index(amap).per_support_delta
    terms = score_table(pool, query, p).per_support_theta_term
    return [JensenGap(i, float(d), float(t), float(d - t))
            for i, (d, t) in enumerate(zip(deltas, terms))]
