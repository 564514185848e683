"""Cross-attention kernels and the per-support contribution index.

Attention maps are stored with query tokens as rows and the concatenated
support tokens as columns; the softmax runs over columns. A support's
contribution is the mean, over its own columns, of each column's maximum
attention weight across query rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, ContractError, ShapeError
from .tensor import autodiff as ad
from .tensor.autodiff import Tape
from .validation import check_tokens

SCALE_MODES = ("sqrt_d", "d")


@dataclass(frozen=True)
class AffineMap:
    """Token-wise ``x @ weight.T + bias``; ``weight`` is (out, in)."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.eye(d), np.zeros(d))

    @classmethod
    def constant(cls, d: int, value: float = 1.0) -> "AffineMap":
        """Zero weight, constant bias."""
        return cls(np.zeros((d, d)), np.full(d, float(value)))

    @classmethod
    def random(cls, d: int, rng: np.random.Generator, gain: float = 1.0,
               bias_scale: float = 0.0) -> "AffineMap":
        return cls(rng.normal(0.0, gain / math.sqrt(d), size=(d, d)),
                   rng.normal(0.0, bias_scale, size=d) if bias_scale else np.zeros(d))

    @property
    def dim(self) -> int:
        return int(np.shape(self.weight)[1])

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weight.T + self.bias

    def node(self, tape: Tape, x):
        return ad.affine(_lift(tape, x), self.weight, self.bias)


@dataclass(frozen=True)
class ScProjector:
    """Shared key/query projection: magnitude branch ``f1`` times unit-direction branch ``f2``."""

    f1: AffineMap
    f2: AffineMap

    @classmethod
    def from_query_map(cls, f1: AffineMap) -> "ScProjector":
        """Reuse an existing query map as ``f1``; ``f2`` starts at zero weight, unit bias."""
        return cls(f1, AffineMap.constant(f1.dim, 1.0))

    @classmethod
    def random(cls, d: int, rng: np.random.Generator, gain: float = 1.0) -> "ScProjector":
        return cls(AffineMap.random(d, rng, gain, bias_scale=0.1),
                   AffineMap.random(d, rng, 1.0, bias_scale=0.1))

    @property
    def dim(self) -> int:
        return self.f1.dim

    def arrays(self) -> list:
        return [self.f1.weight, self.f1.bias, self.f2.weight, self.f2.bias]

    @classmethod
    def from_arrays(cls, arrays) -> "ScProjector":
        w1, b1, w2, b2 = arrays
        return cls(AffineMap(w1, b1), AffineMap(w2, b2))

    def check(self, d: Optional[int] = None) -> None:
        for name, m in (("f1", self.f1), ("f2", self.f2)):
            w, b = np.shape(m.weight), np.shape(m.bias)
            if len(w) != 2 or w[0] != w[1] or b != (w[0],):
                raise ShapeError(f"{name} must be a square d->d map, got weight {w}, bias {b}")
        if self.f1.dim != self.f2.dim:
            raise ShapeError(f"f1 dim {self.f1.dim} != f2 dim {self.f2.dim}")
        if d is not None and self.dim != d:
            raise ShapeError(f"projector dim {self.dim} != token dim {d}")


@dataclass(frozen=True)
class SupportPack:
    items: tuple
    spans: tuple

    @classmethod
    def from_tokens(cls, items: Sequence) -> "SupportPack":
        if len(items) == 0:
            raise ContractError("a support pack needs at least one support")
        mats = tuple(check_tokens(x, f"support {i}") for i, x in enumerate(items))
        dims = {m.shape[1] for m in mats}
        if len(dims) != 1:
            raise ShapeError(f"supports have differing token dims {sorted(dims)}")
        spans, head = [], 0
        for m in mats:
            spans.append((head, head + m.shape[0]))
            head += m.shape[0]
        return cls(mats, tuple(spans))

    @property
    def dim(self) -> int:
        return self.items[0].shape[1]

    @property
    def n_tokens(self) -> int:
        return self.spans[-1][1]

    def __len__(self):
        return len(self.items)

    def stacked(self) -> np.ndarray:
        return np.concatenate(self.items, axis=0)

    def subset(self, ids: Sequence[int]) -> "SupportPack":
        return SupportPack.from_tokens([self.items[i] for i in ids])


@dataclass
class AttentionMap:
    values: np.ndarray
    spans: tuple

    @property
    def n_supports(self) -> int:
        return len(self.spans)

    def support(self, i: int) -> np.ndarray:
        lo, hi = self.spans[i]
        return self.values[:, lo:hi]


@dataclass
class ContributionReport:
    per_support_delta: list
    designated_index: Optional[int] = None
    mean_others: float = float("nan")
    deviation: float = float("nan")

    def designate(self, index: int) -> "ContributionReport":
        dev = deviation(self, index)
        others = [d for i, d in enumerate(self.per_support_delta) if i != index]
        return ContributionReport(list(self.per_support_delta), index,
                                  float(np.mean(others)), dev)


def _lift(tape, x):
    return x if isinstance(x, ad.Node) else tape.constant(np.asarray(x, dtype=np.float64))


def scale_for(d: int, scale_mode: str) -> float:
    if scale_mode == "sqrt_d":
        return math.sqrt(d)
    if scale_mode == "d":
        return float(d)
    raise ConfigurationError(f"scale_mode must be one of {SCALE_MODES}, got {scale_mode!r}")


# -- tape-level kernels (shared by inference and training) -----------------

def project_node(tape: Tape, p: ScProjector, x):
    magnitude = p.f1.node(tape, x)
    direction = ad.row_unit_normalize(p.f2.node(tape, x))
    return ad.mul(magnitude, direction)


def sc_logits_node(tape: Tape, p: ScProjector, xq, xs, scale: float):
    return ad.scale(ad.pair_dot(project_node(tape, p, xq), project_node(tape, p, xs)), 1.0 / scale)


def sc_attention_node(tape: Tape, heads: Sequence[ScProjector], xq, xs, scale_mode="sqrt_d"):
    """Head-averaged symmetric attention; head ``h`` sees feature slice ``h``."""
    xq = _lift(tape, xq)
    xs = _lift(tape, xs)
    d = xq.shape[1]
    n_heads = len(heads)
    if n_heads == 0 or d % n_heads:
        raise ConfigurationError(f"token dim {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    scale = scale_for(dh, scale_mode)
    maps = []
    for h, p in enumerate(heads):
        q = xq if n_heads == 1 else ad.columns(xq, h * dh, (h + 1) * dh)
        s = xs if n_heads == 1 else ad.columns(xs, h * dh, (h + 1) * dh)
        logits = ad.pair_dot(project_node(tape, p, q), project_node(tape, p, s))
        maps.append(ad.row_softmax(logits, scale))
    out = maps[0]
    for m in maps[1:]:
        out = ad.add(out, m)
    return out if n_heads == 1 else ad.scale(out, 1.0 / n_heads)


def standard_attention_node(tape: Tape, f_key: AffineMap, f_query: AffineMap, xq, xs):
    xq = _lift(tape, xq)
    logits = ad.matmul(f_query.node(tape, xq), ad.transpose(f_key.node(tape, xs)))
    return ad.row_softmax(logits, math.sqrt(xq.shape[1]))


# -- public array-level API ------------------------------------------------

def _pack(xs_or_pack) -> SupportPack:
    if isinstance(xs_or_pack, SupportPack):
        return xs_or_pack
    if isinstance(xs_or_pack, np.ndarray) and xs_or_pack.ndim == 2:
        return SupportPack.from_tokens([xs_or_pack])
    return SupportPack.from_tokens(list(xs_or_pack))


def _check_dims(pack: SupportPack, xq: np.ndarray) -> None:
    if pack.dim != xq.shape[1]:
        raise ShapeError(f"support dim {pack.dim} != query dim {xq.shape[1]}")


def standard_attention(xs_or_pack, xq, f_key: AffineMap, f_query: AffineMap) -> AttentionMap:
    """``softmax(fQ(xq) fK(X_S)^T / sqrt(d))`` over the support axis."""
    pack = _pack(xs_or_pack)
    xq = check_tokens(xq, "query")
    _check_dims(pack, xq)
    for name, f in (("f_key", f_key), ("f_query", f_query)):
        if np.shape(f.weight)[1] != xq.shape[1]:
            raise ShapeError(f"{name} expects dim {np.shape(f.weight)[1]}, tokens have {xq.shape[1]}")
    tape = Tape()
    a = standard_attention_node(tape, f_key, f_query, xq, pack.stacked())
    return AttentionMap(a.value, pack.spans)


def sc_project(p: ScProjector, x) -> np.ndarray:
    """Per token: ``f1(t) * f2(t) / ||f2(t)||`` (elementwise product)."""
    x = check_tokens(x)
    p.check(x.shape[1])
    return project_node(Tape(), p, x).value


def sc_logits(xs, xq, p: ScProjector, scale_mode: str = "sqrt_d") -> np.ndarray:
    """Pre-softmax symmetric logits, query rows by support columns.

    ``sc_logits(a, b, p)`` equals ``sc_logits(b, a, p).T`` bitwise.
    """
    xs = check_tokens(xs, "support")
    xq = check_tokens(xq, "query")
    if xs.shape[1] != xq.shape[1]:
        raise ShapeError(f"support dim {xs.shape[1]} != query dim {xq.shape[1]}")
    p.check(xq.shape[1])
    scale = scale_for(xq.shape[1], scale_mode)
    return sc_logits_node(Tape(), p, xq, xs, scale).value


def symmetric_attention(pack, xq, p: ScProjector, scale_mode: str = "sqrt_d") -> AttentionMap:
    pack = _pack(pack)
    xq = check_tokens(xq, "query")
    _check_dims(pack, xq)
    p.check(xq.shape[1])
    a = sc_attention_node(Tape(), [p], xq, pack.stacked(), scale_mode)
    return AttentionMap(a.value, pack.spans)


def multi_head_sc(pack, xq, projectors: Sequence[ScProjector], scale_mode: str = "sqrt_d") -> AttentionMap:
    pack = _pack(pack)
    xq = check_tokens(xq, "query")
    _check_dims(pack, xq)
    n_heads = len(projectors)
    if n_heads == 0 or xq.shape[1] % n_heads:
        raise ConfigurationError(f"token dim {xq.shape[1]} not divisible by {n_heads} heads")
    for p in projectors:
        p.check(xq.shape[1] // n_heads)
    a = sc_attention_node(Tape(), list(projectors), xq, pack.stacked(), scale_mode)
    return AttentionMap(a.value, pack.spans)


def contribution_index(a: AttentionMap) -> ContributionReport:
    """Per support: mean over its columns of the column maximum across query rows."""
    colmax = np.asarray(a.values).max(axis=0)
    deltas = []
    for i, (lo, hi) in enumerate(a.spans):
        if hi <= lo:
            raise ContractError(f"support {i} has an empty column span")
        deltas.append(float(colmax[lo:hi].mean()))
    return ContributionReport(deltas)


def deviation(report: ContributionReport, designated: int) -> float:
    """Contribution of the designated support minus the mean of all others."""
    deltas = report.per_support_delta
    if len(deltas) < 2:
        raise ContractError("deviation needs at least two supports")
    if not 0 <= designated < len(deltas):
        raise ContractError(f"designated index {designated} outside 0..{len(deltas) - 1}")
    others = [d for i, d in enumerate(deltas) if i != designated]
    return float(deltas[designated] - np.mean(others))
