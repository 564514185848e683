"""Episode containers and model parameter bundles.

Layer stacks are ordered coarse to fine: index 0 is the coarsest token
grid, index -1 the finest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

import numpy as np

from ..correlation import AffineMap, ScProjector
from ..exceptions import ContractError, ShapeError
from ..validation import check_binary, check_grid, check_tokens, grid_side


def _check_stack(layers, name) -> list:
    if len(layers) == 0:
        raise ContractError(f"{name} has no layers")
    out = [check_tokens(x, f"{name} layer {l}") for l, x in enumerate(layers)]
    for l, x in enumerate(out):
        grid_side(x.shape[0], f"{name} layer {l} token count")
    return out


def _mask2d(m, name) -> np.ndarray:
    m = check_binary(np.asarray(m, dtype=np.float64), name)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[:, :, 0]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D grid, got shape {m.shape}")
    return m


def downsample_mask(mask, side: int) -> np.ndarray:
    """Area-average a binary mask onto a ``side x side`` grid, then threshold at 0.5."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    if h % side or w % side:
        raise ShapeError(f"mask {mask.shape} does not tile into a {side}x{side} grid")
    fy, fx = h // side, w // side
    area = mask.reshape(side, fy, side, fx).mean(axis=(1, 3))
    return (area >= 0.5).astype(np.float64)


@dataclass
class SupportItem:
    id: Hashable
    layers: list
    masks: list
    full_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.layers = _check_stack(self.layers, f"support {self.id!r}")
        if len(self.masks) != len(self.layers):
            raise ContractError(
                f"support {self.id!r}: {len(self.masks)} masks for {len(self.layers)} layers"
            )
        self.masks = [_mask2d(m, f"support {self.id!r} mask {l}") for l, m in enumerate(self.masks)]
        for l, (x, m) in enumerate(zip(self.layers, self.masks)):
            if m.size != x.shape[0]:
                raise ShapeError(
                    f"support {self.id!r} layer {l}: mask has {m.size} cells, layer has {x.shape[0]} tokens"
                )
        if self.full_mask is not None:
            self.full_mask = _mask2d(self.full_mask, f"support {self.id!r} full mask")

    @classmethod
    def from_full_mask(cls, id, layers, full_mask) -> "SupportItem":
        layers = _check_stack(layers, f"support {id!r}")
        masks = [downsample_mask(full_mask, grid_side(x.shape[0])) for x in layers]
        return cls(id, layers, masks, np.asarray(full_mask, dtype=np.float64))

    @property
    def n_layers(self) -> int:
        return len(self.layers)


@dataclass
class Episode:
    query_layers: list
    query_truth: np.ndarray
    supports: list
    category: Hashable = 0

    def __post_init__(self):
        self.query_layers = _check_stack(self.query_layers, "query")
        self.query_truth = _mask2d(self.query_truth, "query truth")
        if len(self.supports) == 0:
            raise ContractError("an episode needs at least one support")
        n_layers = len(self.query_layers)
        for s in self.supports:
            if s.n_layers != n_layers:
                raise ContractError(f"support {s.id!r} has {s.n_layers} layers, query has {n_layers}")
            for l, (x, q) in enumerate(zip(s.layers, self.query_layers)):
                if x.shape[1] != q.shape[1]:
                    raise ShapeError(f"support {s.id!r} layer {l} dim {x.shape[1]} != query dim {q.shape[1]}")

    @property
    def n_layers(self) -> int:
        return len(self.query_layers)

    @property
    def dims(self) -> list:
        return [x.shape[1] for x in self.query_layers]

    def with_supports(self, supports: Sequence[SupportItem]) -> "Episode":
        return Episode(self.query_layers, self.query_truth, list(supports), self.category)


@dataclass
class PredictionMask:
    probs: np.ndarray
    binary: np.ndarray = None
    threshold: float = 0.5

    def __post_init__(self):
        self.probs = check_grid(self.probs, "probs")[:, :, 0]
        if self.binary is None:
            self.binary = (self.probs > self.threshold).astype(np.float64)


def _conv_init(rng, c_out, c_in, scale):
    fan_in = 9 * c_in
    return rng.normal(0.0, scale / math.sqrt(fan_in), size=(c_out, c_in, 3, 3)), np.zeros(c_out)


@dataclass
class RefinerWeights:
    """Top-down convolutions (coarsest first) plus the final head.

    Top-down conv ``k`` fuses the upsampled running feature with the coarse
    mask of layer ``k``; the head fuses the upsampled running feature with
    the finest query features and the pooled support features.
    """

    convs: list
    head: tuple

    @staticmethod
    def channel_plan(n_layers: int, dim: int, hidden: int) -> tuple[list, tuple]:
        conv_shapes = []
        ch = 1
        for _ in range(1, n_layers - 1):
            conv_shapes.append((hidden, ch + 1))
            ch = hidden
        return conv_shapes, (1, ch + 2 * dim)

    @classmethod
    def init(cls, n_layers: int, dim: int, hidden: int = 16,
             rng: Optional[np.random.Generator] = None, scale: float = 1.0) -> "RefinerWeights":
        rng = np.random.default_rng(0) if rng is None else rng
        conv_shapes, head_shape = cls.channel_plan(n_layers, dim, hidden)
        convs = [_conv_init(rng, o, i, scale) for o, i in conv_shapes]
        return cls(convs, _conv_init(rng, *head_shape, scale))

    @classmethod
    def zeros(cls, n_layers: int, dim: int, hidden: int = 16) -> "RefinerWeights":
        conv_shapes, (ho, hi) = cls.channel_plan(n_layers, dim, hidden)
        convs = [(np.zeros((o, i, 3, 3)), np.zeros(o)) for o, i in conv_shapes]
        return cls(convs, (np.zeros((ho, hi, 3, 3)), np.zeros(ho)))

    @classmethod
    def passthrough(cls, n_layers: int, dim: int, hidden: int = 16, gain: float = 12.0) -> "RefinerWeights":
        """Hand-set weights that average coarse masks top-down and threshold at 0.5."""
        w = cls.zeros(n_layers, dim, hidden)
        for k, _ in w.convs:
            k[0, 0, 1, 1] = 0.5
            k[0, -1, 1, 1] = 0.5
        hk, hb = w.head
        hk[0, 0, 1, 1] = gain
        hb[0] = -0.5 * gain
        return w

    def arrays(self) -> list:
        out = []
        for k, b in self.convs:
            out += [k, b]
        return out + [self.head[0], self.head[1]]

    @classmethod
    def from_arrays(cls, arrays) -> "RefinerWeights":
        arrays = list(arrays)
        if len(arrays) < 2 or len(arrays) % 2:
            raise ContractError("refiner arrays come in (kernel, bias) pairs")
        pairs = [(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)]
        return cls(pairs[:-1], pairs[-1])

    def check(self, n_layers: int, dim: int) -> None:
        if len(self.convs) != max(n_layers - 2, 0):
            raise ShapeError(f"refiner has {len(self.convs)} top-down convs, {n_layers} layers need "
                             f"{max(n_layers - 2, 0)}")
        ch = 1
        for i, (k, b) in enumerate(self.convs):
            if np.shape(k)[1] != ch + 1:
                raise ShapeError(f"top-down conv {i} expects {np.shape(k)[1]} input channels, gets {ch + 1}")
            ch = np.shape(k)[0]
        k, b = self.head
        if np.shape(k)[0] != 1 or np.shape(k)[1] != ch + 2 * dim:
            raise ShapeError(f"head kernel {np.shape(k)} does not match {ch + 2 * dim} input channels")


@dataclass
class SegmenterParams:
    """Everything the forward pass reads: per-layer projector heads, refiner, and
    optional per-layer (key, query) maps for the standard-attention baseline."""

    projectors: list
    refiner: RefinerWeights
    standard: Optional[list] = None

    @classmethod
    def unit_bias_init(cls, dims: Sequence[int], hidden: int = 16, n_heads: int = 1,
                       rng: Optional[np.random.Generator] = None, query_maps=None,
                       refiner_scale: float = 1.0) -> "SegmenterParams":
        """``f1`` copies a query map (random unless given), ``f2`` is zero weight / unit bias."""
        rng = np.random.default_rng(0) if rng is None else rng
        projectors = []
        for l, d in enumerate(dims):
            if d % n_heads:
                raise ContractError(f"layer {l} dim {d} not divisible by {n_heads} heads")
            dh = d // n_heads
            heads = []
            for h in range(n_heads):
                fq = query_maps[l][h] if query_maps is not None else AffineMap.random(dh, rng)
                heads.append(ScProjector.from_query_map(fq))
            projectors.append(heads)
        refiner = RefinerWeights.init(len(dims), dims[-1], hidden, rng, refiner_scale)
        return cls(projectors, refiner)

    @classmethod
    def random(cls, dims: Sequence[int], hidden: int = 16,
               rng: Optional[np.random.Generator] = None) -> "SegmenterParams":
        """Generic parameters with no unit-bias shortcut, so every gradient term is live."""
        rng = np.random.default_rng(0) if rng is None else rng
        projectors = [[ScProjector.random(d, rng)] for d in dims]
        refiner = RefinerWeights.init(len(dims), dims[-1], hidden, rng)
        for _, b in refiner.convs + [refiner.head]:
            b[...] = rng.normal(scale=0.1, size=b.shape)
        return cls(projectors, refiner)

    def arrays(self) -> list:
        out = []
        for heads in self.projectors:
            for p in heads:
                out += p.arrays()
        return out + self.refiner.arrays()

    def with_arrays(self, arrays) -> "SegmenterParams":
        arrays = list(arrays)
        pos = 0
        projectors = []
        for heads in self.projectors:
            layer = []
            for _ in heads:
                layer.append(ScProjector.from_arrays(arrays[pos:pos + 4]))
                pos += 4
            projectors.append(layer)
        return SegmenterParams(projectors, RefinerWeights.from_arrays(arrays[pos:]), self.standard)

    def copy(self) -> "SegmenterParams":
        return self.with_arrays([np.array(a, dtype=np.float64) for a in self.arrays()])
