"""FTS feature files, PGM masks, and on-disk episodes.

FTS layout (all little-endian)::

    b"FTS1"
    u32 layer_count
    layer_count x (u32 rows, u32 cols)
    layer_count x float32[rows * cols]   row-major payloads

Payloads are float32: values written from float64 arrays are rounded once,
and anything read back round-trips bit-exactly.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from ..exceptions import ContractError, FormatError
from ..segmenter.types import Episode, SupportItem

MAGIC = b"FTS1"
_U32 = struct.Struct("<I")
_DIM = struct.Struct("<II")
U32_MAX = 2**32 - 1


def encode_features(stack: Sequence) -> bytes:
    mats = [np.asarray(x) for x in stack]
    if not mats:
        raise ContractError("cannot write an empty layer stack")
    parts = [MAGIC, _U32.pack(len(mats))]
    payloads = []
    for l, x in enumerate(mats):
        if x.ndim != 2:
            raise ContractError(f"layer {l} must be 2-D, got shape {x.shape}")
        if x.shape[0] > U32_MAX or x.shape[1] > U32_MAX:
            raise ContractError(f"layer {l} shape {x.shape} exceeds u32")
        if not np.all(np.isfinite(x)):
            raise ContractError(f"layer {l} contains NaN or Inf")
        parts.append(_DIM.pack(*x.shape))
        payloads.append(np.ascontiguousarray(x, dtype="<f4").tobytes())
    return b"".join(parts + payloads)


def decode_features(data: bytes) -> list[np.ndarray]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}", 0)
    if len(data) < 8:
        raise FormatError("truncated layer count", 4)
    (count,) = _U32.unpack_from(data, 4)
    if count == 0:
        raise FormatError("layer count is zero", 4)
    header_end = 8 + 8 * count
    if header_end > len(data):
        raise FormatError(f"truncated header: {count} layer shapes need {header_end} bytes, "
                          f"file has {len(data)}", len(data))
    shapes = [_DIM.unpack_from(data, 8 + 8 * l) for l in range(count)]
    offset = header_end
    layers = []
    for l, (rows, cols) in enumerate(shapes):
        nbytes = 4 * rows * cols
        if offset + nbytes > len(data):
            raise FormatError(f"layer {l} ({rows}x{cols}) needs {nbytes} payload bytes, "
                              f"only {len(data) - offset} remain", offset)
        x = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=offset)
        layers.append(x.reshape(rows, cols).astype(np.float64))
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last layer", offset)
    return layers


def write_features(path, stack: Sequence) -> None:
    data = encode_features(stack)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def read_features(path) -> list[np.ndarray]:
    return decode_features(Path(path).read_bytes())


def encode_pgm(mask) -> bytes:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ContractError(f"mask must be 2-D, got shape {m.shape}")
    h, w = m.shape
    pixels = np.where(m > 0.5, 255, 0).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Binary P5 mask; pixels >= 128 are foreground."""
    fields, pos = [], 0
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (missing P5 magic)", 0)
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header", pos)
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header", pos)
    pos += 1
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", pos)
    if pos + w * h > len(data):
        raise FormatError(f"truncated PGM payload: need {w * h} bytes", pos)
    if pos + w * h != len(data):
        raise FormatError("trailing bytes after PGM payload", pos + w * h)
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)
    return (pixels >= 128).astype(np.float64)


def write_mask(path, mask) -> None:
    Path(path).write_bytes(encode_pgm(mask))


def read_mask(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def save_episode(directory, episode: Episode) -> None:
    """Query stack and truth, then one FTS + PGM pair per support."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_features(d / "query.fts", episode.query_layers)
    write_mask(d / "query_truth.pgm", episode.query_truth)
    lines = [f"category = {episode.category}", f"n_supports = {len(episode.supports)}"]
    for i, s in enumerate(episode.supports):
        write_features(d / f"support_{i:04d}.fts", s.layers)
        full = s.full_mask if s.full_mask is not None else s.masks[-1]
        write_mask(d / f"support_{i:04d}.pgm", full)
        lines.append(f"support_{i:04d}.id = {s.id}")
    (d / "episode.txt").write_text("\n".join(lines) + "\n")


def load_episode(directory) -> Episode:
    from .config import parse_config

    d = Path(directory)
    meta = parse_config((d / "episode.txt").read_text())
    n = int(meta["n_supports"])
    supports = []
    for i in range(n):
        layers = read_features(d / f"support_{i:04d}.fts")
        sid = meta.get(f"support_{i:04d}.id", str(i))
        sid = int(sid) if sid.lstrip("-").isdigit() else sid
        supports.append(SupportItem.from_full_mask(sid, layers, read_mask(d / f"support_{i:04d}.pgm")))
    category = meta.get("category", "0")
    category = int(category) if category.lstrip("-").isdigit() else category
    return Episode(read_features(d / "query.fts"), read_mask(d / "query_truth.pgm"), supports, category)
