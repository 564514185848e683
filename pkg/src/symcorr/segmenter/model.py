"""Forward pass: prune, correlate per layer, aggregate masks, refine top-down."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..correlation import (
    AffineMap,
    AttentionMap,
    ScProjector,
    SupportPack,
    contribution_index,
    sc_attention_node,
    standard_attention_node,
)
from ..exceptions import ConfigurationError, ContractError, ShapeError
from ..pruning import PruneConfig, PruneResult, multilayer_prune
from ..tensor import autodiff as ad
from ..tensor.autodiff import Node, Tape
from ..validation import check_binary, check_tokens, grid_side
from .types import Episode, PredictionMask, RefinerWeights, SegmenterParams

ATTENTION_MODES = ("symmetric", "standard")
POOL_MODES = ("tokens", "supports")


@dataclass(frozen=True)
class ForwardConfig:
    attention: str = "symmetric"
    scale_mode: str = "sqrt_d"
    pool_mode: str = "tokens"
    prune: PruneConfig = field(default_factory=PruneConfig)

    def __post_init__(self):
        if self.attention not in ATTENTION_MODES:
            raise ConfigurationError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")
        if self.pool_mode not in POOL_MODES:
            raise ConfigurationError(f"pool_mode must be one of {POOL_MODES}, got {self.pool_mode!r}")


@dataclass
class SegmentationOutput:
    mask: PredictionMask
    reports: list
    selected_ids: list
    prune_result: Optional[PruneResult] = None
    attention: list = field(default_factory=list, repr=False)


def _as_node(tape, x):
    return x if isinstance(x, Node) else tape.constant(x)


def coarse_mask_node(tape: Tape, attention, mask_vector):
    a = _as_node(tape, attention)
    m = np.asarray(mask_vector, dtype=np.float64).reshape(-1, 1)
    if m.shape[0] != a.shape[1]:
        raise ShapeError(f"mask vector has {m.shape[0]} entries, attention has {a.shape[1]} columns")
    side = grid_side(a.shape[0], "query token count")
    return ad.reshape(ad.matmul(a, m), (side, side, 1))


def coarse_mask(a: AttentionMap, support_masks) -> np.ndarray:
    """Attention-weighted support masks, reshaped onto the query token grid."""
    m = check_binary(np.asarray(support_masks, dtype=np.float64).ravel(), "support masks")
    return coarse_mask_node(Tape(), np.asarray(a.values), m).value


def refine_node(tape: Tape, coarse: Sequence, refiner: RefinerWeights, query_finest, pooled_support,
                out_size: Optional[tuple] = None):
    """Returns the logit grid of the final head (1 channel)."""
    n_layers = len(coarse)
    if n_layers == 0:
        raise ContractError("need at least one coarse mask")
    xq = _as_node(tape, query_finest)
    d = xq.shape[1]
    refiner.check(n_layers, d)
    running = _as_node(tape, coarse[0])
    for k, (kern, bias) in enumerate(refiner.convs, start=1):
        c = _as_node(tape, coarse[k])
        up = ad.bilinear_resize(running, c.shape[0], c.shape[1])
        running = ad.conv2d(ad.concat([up, c], axis=2), kern, bias)
    side = grid_side(xq.shape[0], "finest query token count")
    up = ad.bilinear_resize(running, side, side)
    q_grid = ad.reshape(xq, (side, side, d))
    s_grid = ad.broadcast_grid(_as_node(tape, pooled_support), side, side)
    logits = ad.conv2d(ad.concat([up, q_grid, s_grid], axis=2), *refiner.head)
    if out_size is not None and tuple(out_size) != (side, side):
        logits = ad.bilinear_resize(logits, *out_size)
    return logits


def refine_topdown(coarse: Sequence, weights: RefinerWeights, query_l1, support_pool_l1,
                   out_size: Optional[tuple] = None) -> PredictionMask:
    """Coarse grids ordered coarse to fine; ``support_pool_l1`` is the pooled 1 x d support feature."""
    query_l1 = check_tokens(query_l1, "finest query layer")
    pooled = np.asarray(support_pool_l1, dtype=np.float64).reshape(1, -1)
    if pooled.shape[1] != query_l1.shape[1]:
        raise ShapeError(f"pooled support dim {pooled.shape[1]} != query dim {query_l1.shape[1]}")
    tape = Tape()
    logits = refine_node(tape, [np.asarray(c, dtype=np.float64) for c in coarse], weights,
                         query_l1, pooled, out_size)
    return PredictionMask(ad.sigmoid(logits).value)


def pooled_support(tape: Tape, supports_finest: Sequence[np.ndarray], pool_mode: str = "tokens"):
    if pool_mode == "tokens":
        return ad.mean_rows(tape.constant(np.concatenate(supports_finest, axis=0)))
    per = [np.mean(x, axis=0, keepdims=True) for x in supports_finest]
    return tape.constant(np.mean(per, axis=0))


def select_supports(episode: Episode, params: SegmenterParams, prune: PruneConfig):
    """Detached pruning step: returns (kept ids in pool order, PruneResult or None)."""
    n = len(episode.supports)
    if not prune.active(n):
        return list(range(n)), None
    pools = [[s.layers[l] for s in episode.supports] for l in range(episode.n_layers)]
    projectors = [[_detach_projector(p) for p in heads] for heads in params.projectors]
    result = multilayer_prune(pools, episode.query_layers, projectors, min(prune.keep, n))
    return sorted(result.selected_ids), result


def _detach_projector(p):
    def val(a):
        return a.value if isinstance(a, Node) else a

    return ScProjector(AffineMap(val(p.f1.weight), val(p.f1.bias)),
                       AffineMap(val(p.f2.weight), val(p.f2.bias)))


def forward_nodes(tape: Tape, episode: Episode, params: SegmenterParams, config: ForwardConfig,
                  kept: Sequence[int]):
    """Build the differentiable graph for the kept supports; returns (probs node, attention nodes)."""
    if len(params.projectors) != episode.n_layers:
        raise ContractError(f"{len(params.projectors)} projector layers for a {episode.n_layers}-layer episode")
    supports = [episode.supports[i] for i in kept]
    attention, coarse = [], []
    for l in range(episode.n_layers):
        xs = np.concatenate([s.layers[l] for s in supports], axis=0)
        xq = episode.query_layers[l]
        if config.attention == "symmetric":
            a = sc_attention_node(tape, params.projectors[l], xq, xs, config.scale_mode)
        else:
            if params.standard is None:
                raise ConfigurationError("standard attention needs per-layer (key, query) maps")
            f_key, f_query = params.standard[l]
            a = standard_attention_node(tape, f_key, f_query, xq, xs)
        masks = np.concatenate([s.masks[l].ravel() for s in supports])
        attention.append(a)
        coarse.append(coarse_mask_node(tape, a, masks))
    pooled = pooled_support(tape, [s.layers[-1] for s in supports], config.pool_mode)
    logits = refine_node(tape, coarse, params.refiner, episode.query_layers[-1], pooled,
                         episode.query_truth.shape)
    return ad.sigmoid(logits), attention


def forward_episode(episode: Episode, params: SegmenterParams,
                    config: Optional[ForwardConfig] = None) -> SegmentationOutput:
    config = ForwardConfig() if config is None else config
    kept, prune_result = select_supports(episode, params, config.prune)
    tape = Tape()
    probs, attention = forward_nodes(tape, episode, params, config, kept)
    reports, maps = [], []
    for l, a in enumerate(attention):
        spans_l = SupportPack.from_tokens([episode.supports[i].layers[l] for i in kept]).spans
        amap = AttentionMap(a.value, spans_l)
        maps.append(amap)
        reports.append(contribution_index(amap))
    return SegmentationOutput(PredictionMask(probs.value), reports,
                              [episode.supports[i].id for i in kept], prune_result, maps)
