"""Dense float64 kernels on matrices (n x d) and grids (H x W x C).

These are the forward kernels; :mod:`symcorr.tensor.autodiff` wraps each of
them with a backward rule.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ContractError, DegenerateRowError, ShapeError

NORM_EPS = 1e-12
KERNEL_SIZE = 3


def as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def as_grid(g, name="grid") -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim == 2:
        g = g[:, :, None]
    if g.ndim != 3:
        raise ShapeError(f"{name} must be H x W x C, got shape {g.shape}")
    return g


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def pair_dot(a, b) -> np.ndarray:
    """Return ``a @ b.T`` such that ``pair_dot(a, b) == pair_dot(b, a).T`` bitwise.

    BLAS gives no guarantee that ``a @ b.T`` and ``(b @ a.T).T`` round
    identically, so both are formed and averaged; float addition commutes,
    which makes the result exactly transpose-symmetric in its operands.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"feature dims differ: {a.shape} vs {b.shape}")
    out = a @ b.T
    out += (b @ a.T).T
    out *= 0.5
    return out


def row_softmax(m, scale=1.0) -> np.ndarray:
    if not scale > 0:
        raise ContractError(f"softmax scale must be > 0, got {scale}")
    z = as_matrix(m) / scale
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def row_norms(m) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def row_unit_normalize(m) -> np.ndarray:
    m = as_matrix(m)
    norms = row_norms(m)
    bad = np.flatnonzero(~(norms >= NORM_EPS))
    if bad.size:
        raise DegenerateRowError(bad[0], float(norms[bad[0]]))
    return m / norms[:, None]


@lru_cache(maxsize=256)
def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centers, edge-clamped (align_corners=False)
    r = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for o in range(n_out):
        src = max((o + 0.5) * ratio - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        w1 = src - i0
        r[o, i0] += 1.0 - w1
        r[o, i1] += w1
    r.setflags(write=False)
    return r


def resize_matrices(in_h, in_w, out_h, out_w):
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be >= 1, got {out_h}x{out_w}")
    return _interp_matrix(in_h, out_h), _interp_matrix(in_w, out_w)


def bilinear_resize(g, out_h: int, out_w: int) -> np.ndarray:
    g = as_grid(g)
    rh, rw = resize_matrices(g.shape[0], g.shape[1], out_h, out_w)
    return np.einsum("oh,hwc,pw->opc", rh, g, rw)


def _check_conv(g, kernels, bias):
    if kernels.ndim != 4 or kernels.shape[2:] != (KERNEL_SIZE, KERNEL_SIZE):
        raise ShapeError(f"kernels must be (out, in, 3, 3), got {kernels.shape}")
    if kernels.shape[1] != g.shape[2]:
        raise ShapeError(
            f"kernel expects {kernels.shape[1]} input channels, grid has {g.shape[2]}"
        )
    if bias.shape != (kernels.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({kernels.shape[0]},)")


def im2col(g) -> np.ndarray:
    """H x W x C grid -> (H*W) x (C*9) patch matrix, zero padding 1."""
    h, w, c = g.shape
    padded = np.pad(g, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(padded, (KERNEL_SIZE, KERNEL_SIZE), axis=(0, 1))
    # win: H x W x C x 3 x 3
    return win.reshape(h * w, c * KERNEL_SIZE * KERNEL_SIZE)


def col2im(cols, h, w, c) -> np.ndarray:
    """Adjoint of :func:`im2col`."""
    cols = cols.reshape(h, w, c, KERNEL_SIZE, KERNEL_SIZE)
    padded = np.zeros((h + 2, w + 2, c))
    for dy in range(KERNEL_SIZE):
        for dx in range(KERNEL_SIZE):
            padded[dy:dy + h, dx:dx + w, :] += cols[:, :, :, dy, dx]
    return padded[1:h + 1, 1:w + 1, :]


def conv2d(g, kernels, bias) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1 (cross-correlation).

    ``kernels`` has shape ``(out_channels, in_channels, 3, 3)``.
    """
    g = as_grid(g)
    kernels = np.asarray(kernels, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_conv(g, kernels, bias)
    h, w, _ = g.shape
    out = im2col(g) @ kernels.reshape(kernels.shape[0], -1).T + bias
    return out.reshape(h, w, kernels.shape[0])


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
