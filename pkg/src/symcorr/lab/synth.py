"""Seeded synthetic episodes with relevant and irrelevant supports.

Each image has a binary blob mask. Its tokens are a foreground or background
prototype (scaled by ``separation``) plus per-token Gaussian texture. High
supports are noisy copies of the query with the query's mask; low supports
come from independent images with their own prototypes and masks.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from ..exceptions import ContractError
from ..segmenter.types import Episode, SupportItem, downsample_mask
from ..validation import check_count, grid_side

DEFAULT_TOKENS = (12 * 12, 24 * 24, 48 * 48)


@dataclass(frozen=True)
class PoolSpec:
    n_high: int = 0
    n_low: int = 0
    noise_sigma_high: float = 0.0
    noise_sigma_low: float = 1.0
    dim: int = 32
    tokens_per_layer: tuple = DEFAULT_TOKENS
    seed: int = 0
    upper_bound: bool = True
    separation: float = 2.0
    category: int = 0

    def __post_init__(self):
        check_count(self.n_high, "n_high")
        check_count(self.n_low, "n_low")
        check_count(self.dim, "dim", 1)
        if self.noise_sigma_high < 0 or self.noise_sigma_low < 0:
            raise ContractError("noise sigmas must be >= 0")
        if len(self.tokens_per_layer) == 0:
            raise ContractError("tokens_per_layer must list at least one layer")
        sides = [grid_side(t, "tokens_per_layer entry") for t in self.tokens_per_layer]
        full = max(sides)
        if any(full % s for s in sides):
            raise ContractError(f"layer grid sides {sides} must all divide the finest side {full}")
        object.__setattr__(self, "tokens_per_layer", tuple(int(t) for t in self.tokens_per_layer))

    @property
    def n_supports(self) -> int:
        return int(self.upper_bound) + self.n_high + self.n_low

    @property
    def sides(self) -> list:
        return [grid_side(t) for t in self.tokens_per_layer]

    @property
    def full_side(self) -> int:
        return max(self.sides)

    def replace(self, **changes) -> "PoolSpec":
        return replace(self, **changes)


def blob_mask(rng: np.random.Generator, side: int) -> np.ndarray:
    """Random axis-aligned ellipse covering roughly 10-45% of the grid."""
    cy, cx = rng.uniform(0.3, 0.7, size=2) * side
    ry, rx = rng.uniform(0.2, 0.38, size=2) * side
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return mask.astype(np.float64)


def _unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def _prototypes(rng, n_layers, d):
    return [(_unit(rng, d), _unit(rng, d)) for _ in range(n_layers)]


def _render(rng, full_mask, spec, protos, texture_sigma):
    layers = []
    for side, (fg, bg) in zip(spec.sides, protos):
        m = downsample_mask(full_mask, side).ravel()[:, None]
        base = spec.separation * (m * fg + (1.0 - m) * bg)
        layers.append(base + texture_sigma * rng.normal(size=(side * side, spec.dim)))
    return layers


def synth_pool(spec: PoolSpec) -> Episode:
    if spec.n_supports < 1:
        raise ContractError("the pool must contain at least one support")
    rng = np.random.default_rng(spec.seed)
    n_layers = len(spec.tokens_per_layer)
    protos = _prototypes(rng, n_layers, spec.dim)
    q_mask = blob_mask(rng, spec.full_side)
    q_layers = _render(rng, q_mask, spec, protos, 1.0)

    supports = []
    if spec.upper_bound:
        supports.append(SupportItem.from_full_mask(0, [x.copy() for x in q_layers], q_mask.copy()))
    for _ in range(spec.n_high):
        layers = [x + spec.noise_sigma_high * rng.normal(size=x.shape) for x in q_layers]
        supports.append(SupportItem.from_full_mask(len(supports), layers, q_mask.copy()))
    for _ in range(spec.n_low):
        mask = blob_mask(rng, spec.full_side)
        other = _prototypes(rng, n_layers, spec.dim)
        layers = _render(rng, mask, spec, other, spec.noise_sigma_low)
        supports.append(SupportItem.from_full_mask(len(supports), layers, mask))
    return Episode(q_layers, q_mask, supports, spec.category)


def episode_digest(e: Episode) -> str:
    """SHA-256 over every array in the episode, in a fixed order."""
    h = hashlib.sha256()
    for x in e.query_layers:
        h.update(np.ascontiguousarray(x).tobytes())
    h.update(np.ascontiguousarray(e.query_truth).tobytes())
    for s in e.supports:
        h.update(repr(s.id).encode())
        for x, m in zip(s.layers, s.masks):
            h.update(np.ascontiguousarray(x).tobytes())
            h.update(np.ascontiguousarray(m).tobytes())
    return h.hexdigest()


# A single episode whose classes the toy segmenter can separate quickly.
TOY_TRAIN_SPEC = PoolSpec(tokens_per_layer=(4 * 4, 8 * 8, 16 * 16), separation=12.0)
