"""Upper-bound dilution sweeps: deviation and mIoU against the number of shots."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..correlation import AffineMap, ScProjector
from ..exceptions import ConfigurationError, ContractError
from ..pruning import PruneConfig
from ..segmenter.metrics import miou
from ..segmenter.model import ForwardConfig, forward_episode
from ..segmenter.types import RefinerWeights, SegmenterParams
from .synth import PoolSpec, synth_pool

logger = logging.getLogger(__name__)

METHODS = ("standard", "symmetric", "symmetric+prune")
DEFAULT_N_VALUES = (1, 2, 5, 10, 30, 50, 70)
SWEEP_TOKENS = (8 * 8, 16 * 16, 32 * 32)


@dataclass(frozen=True)
class ModelSpec:
    """How the untrained comparison models are drawn for each trial.

    The baseline uses a query map ``W_q`` and a key map mixing ``W_q`` with an
    independent draw (``key_mix`` is the weight of the independent part).
    The symmetric model reuses ``W_q`` as its magnitude branch, scaled so
    that its projection equals ``W_q x`` at the unit-bias initialisation.
    """

    gain: float = 2.0
    key_mix: float = 0.5
    hidden: int = 16
    refiner_gain: float = 12.0


@dataclass
class SweepRow:
    N: int
    method: str
    delta: Optional[float]
    miou: float
    wall_ms: Optional[float] = None


@dataclass
class SweepResult:
    rows: list
    metadata: dict = field(default_factory=dict)

    def methods(self) -> list:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def series(self, method: str, metric: str = "delta") -> list:
        return [(r.N, getattr(r, metric)) for r in self.rows if r.method == method]


def comparison_params(dims: Sequence[int], seed: int, model: ModelSpec = ModelSpec()) -> SegmenterParams:
    rng = np.random.default_rng([seed, 1])
    projectors, standard = [], []
    for d in dims:
        wq = AffineMap.random(d, rng, model.gain)
        other = AffineMap.random(d, rng, model.gain)
        mix = model.key_mix
        wk = AffineMap(math.sqrt(1.0 - mix * mix) * wq.weight + mix * other.weight, np.zeros(d))
        projectors.append([ScProjector.from_query_map(AffineMap(math.sqrt(d) * wq.weight, wq.bias))])
        standard.append((wk, wq))
    refiner = RefinerWeights.passthrough(len(dims), dims[-1], model.hidden, model.refiner_gain)
    return SegmenterParams(projectors, refiner, standard)


def _forward_config(method: str, prune: PruneConfig) -> ForwardConfig:
    if method == "standard":
        return ForwardConfig(attention="standard", prune=PruneConfig(enabled=False))
    if method == "symmetric":
        return ForwardConfig(attention="symmetric", prune=PruneConfig(enabled=False))
    if method == "symmetric+prune":
        return ForwardConfig(attention="symmetric", prune=prune)
    raise ConfigurationError(f"unknown method {method!r}; choose from {METHODS}")


def designated_deviation(reports: Sequence, kept_ids: Sequence, designated=0) -> Optional[float]:
    """Layer-averaged deviation of ``designated``; a pruned-away support counts as zero."""
    devs = []
    for rep in reports:
        deltas = list(rep.per_support_delta)
        if designated in kept_ids:
            pos = list(kept_ids).index(designated)
            own = deltas.pop(pos)
        else:
            own = 0.0
        if not deltas:
            return None
        devs.append(own - float(np.mean(deltas)))
    return float(np.mean(devs))


def run_trial(template: PoolSpec, n: int, seed: int, methods: Sequence[str] = METHODS,
              model: ModelSpec = ModelSpec(), prune: PruneConfig = PruneConfig(),
              timing: bool = False) -> list[SweepRow]:
    """One seeded episode with ``n`` supports: the query copy plus ``n - 1`` distractors."""
    if n < 1:
        raise ContractError(f"N must be >= 1, got {n}")
    spec = template.replace(upper_bound=True, n_high=0, n_low=n - 1, seed=seed)
    episode = synth_pool(spec)
    params = comparison_params([spec.dim] * len(spec.tokens_per_layer), seed, model)
    rows = []
    for method in methods:
        config = _forward_config(method, prune)
        t0 = time.perf_counter()
        out = forward_episode(episode, params, config)
        elapsed = (time.perf_counter() - t0) * 1e3
        score = miou([out.mask], [episode.query_truth], [episode.category])
        delta = designated_deviation(out.reports, out.selected_ids) if n >= 2 else None
        rows.append(SweepRow(n, method, delta, score, elapsed if timing else None))
    return rows


def _trial_job(args):
    return run_trial(*args)


def dilution_trials(template: PoolSpec, n_values: Sequence[int], seeds: Sequence[int],
                    methods: Sequence[str] = METHODS, model: ModelSpec = ModelSpec(),
                    prune: PruneConfig = PruneConfig(), timing: bool = False,
                    workers: int = 1) -> dict:
    """Per-seed rows, keyed by seed, merged in seed order regardless of scheduling."""
    jobs = [(template, n, s, tuple(methods), model, prune, timing) for s in seeds for n in n_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    out: dict = {}
    for job, rows in sorted(zip(jobs, results), key=lambda jr: (jr[0][2], jr[0][1])):
        out.setdefault(job[2], []).extend(rows)
    return out


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def dilution_sweep(template: PoolSpec, n_values: Sequence[int] = DEFAULT_N_VALUES,
                   methods: Sequence[str] = METHODS, seeds: Optional[Sequence[int]] = None,
                   model: ModelSpec = ModelSpec(), prune: PruneConfig = PruneConfig(),
                   timing: bool = False, workers: int = 1) -> SweepResult:
    """Mean deviation and mIoU per (N, method) over ``seeds`` (default: the template seed)."""
    n_values = [int(n) for n in n_values]
    if len(n_values) < 2:
        raise ContractError("a sweep needs at least two N values")
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ContractError(f"N values must be strictly increasing, got {n_values}")
    if not methods:
        raise ContractError("at least one method is required")
    for m in methods:
        _forward_config(m, prune)
    seeds = [template.seed] if seeds is None else [int(s) for s in seeds]
    trials = dilution_trials(template, n_values, seeds, methods, model, prune, timing, workers)

    rows = []
    for method in methods:
        for n in n_values:
            hits = [r for s in seeds for r in trials[s] if r.N == n and r.method == method]
            deltas = [r.delta for r in hits if r.delta is not None]
            times = [r.wall_ms for r in hits if r.wall_ms is not None]
            rows.append(SweepRow(
                n, method,
                float(np.mean(deltas)) if deltas else None,
                float(np.mean([r.miou for r in hits])),
                float(np.mean(times)) if times else None,
            ))
    payload = {"template": asdict(template), "n_values": n_values, "methods": list(methods),
               "seeds": seeds, "model": asdict(model), "prune": asdict(prune)}
    meta = {"seed": template.seed, "seeds": seeds, "config_hash": config_hash(payload)}
    return SweepResult(rows, meta)
