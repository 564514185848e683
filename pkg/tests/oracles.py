"""Slow, obviously-correct reference implementations used as test oracles."""
import math

import numpy as np


def matmul_loops(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i, j] = s
    return out


def softmax_row(row, scale):
    z = [v / scale for v in row]
    top = max(z)
    e = [math.exp(v - top) for v in z]
    tot = sum(e)
    return [v / tot for v in e]


def bilinear_pixel(g, y, x, out_h, out_w):
    """Half-pixel-centre bilinear sample of channel-last grid ``g`` at output pixel (y, x)."""
    h, w = g.shape[:2]

    def coord(o, n_in, n_out):
        src = (o + 0.5) * n_in / n_out - 0.5
        src = min(max(src, 0.0), n_in - 1)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = coord(y, h, out_h)
    x0, x1, fx = coord(x, w, out_w)
    top = (1 - fx) * g[y0, x0] + fx * g[y0, x1]
    bot = (1 - fx) * g[y1, x0] + fx * g[y1, x1]
    return (1 - fy) * top + fy * bot


def conv_loops(g, k, b):
    h, w, c = g.shape
    o = k.shape[0]
    out = np.zeros((h, w, o))
    for y in range(h):
        for x in range(w):
            for oc in range(o):
                s = b[oc]
                for ic in range(c):
                    for dy in range(3):
                        for dx in range(3):
                            yy, xx = y + dy - 1, x + dx - 1
                            if 0 <= yy < h and 0 <= xx < w:
                                s += k[oc, ic, dy, dx] * g[yy, xx, ic]
                out[y, x, oc] = s
    return out


def sc_project_loops(w1, b1, w2, b2, x):
    n, d = x.shape
    out = np.zeros((n, d))
    for t in range(n):
        f1 = [sum(w1[i, j] * x[t, j] for j in range(d)) + b1[i] for i in range(d)]
        f2 = [sum(w2[i, j] * x[t, j] for j in range(d)) + b2[i] for i in range(d)]
        norm = math.sqrt(sum(v * v for v in f2))
        out[t] = [f1[i] * f2[i] / norm for i in range(d)]
    return out


def delta_loops(a, spans):
    a = np.asarray(a)
    out = []
    for lo, hi in spans:
        total = 0.0
        for j in range(lo, hi):
            best = a[0, j]
            for i in range(1, a.shape[0]):
                if a[i, j] > best:
                    best = a[i, j]
            total += best
        out.append(total / (hi - lo))
    return out
