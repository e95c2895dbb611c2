"""Hot numeric kernels with two interchangeable backends.

The numba backend compiles the inner loops with ``@njit``; the pure-numpy
backend expresses the same arithmetic with vectorized shifts.  Set the
environment variable ``HIERCAST_NO_NUMBA=1`` before import to force the
numpy path (also used automatically when numba is unavailable).

``benchmarks/bench_kernels.py`` compares the two backends.
"""

import os

import numpy as np

_NO_NUMBA = os.environ.get("HIERCAST_NO_NUMBA", "0") not in ("", "0")

if not _NO_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        _NO_NUMBA = True

BACKEND = "numpy" if _NO_NUMBA else "numba"


# ---------------------------------------------------------------------------
# 1-D convolution, stride 1, zero "same" padding.
#
# x: (B, w, c_in), k: (ks, c_in, c_out), bias: (c_out,) -> (B, w, c_out)
# Left pad is (ks-1)//2, the remainder goes to the right (matters for even
# kernel sizes, which the default grids use).
# ---------------------------------------------------------------------------

def _conv1d_same_np(x, k, bias):
    B, w, c_in = x.shape
    ks, _, c_out = k.shape
    pad = (ks - 1) // 2
    out = np.broadcast_to(bias, (B, w, c_out)).copy()
    for u in range(ks):
        off = u - pad
        lo = max(0, -off)
        hi = min(w, w - off)
        if lo >= hi:
            continue
        out[:, lo:hi, :] += x[:, lo + off:hi + off, :] @ k[u]
    return out


def _conv1d_same_grad_np(x, k, gout):
    B, w, c_in = x.shape
    ks, _, c_out = k.shape
    pad = (ks - 1) // 2
    gx = np.zeros_like(x)
    gk = np.zeros_like(k)
    for u in range(ks):
        off = u - pad
        lo = max(0, -off)
        hi = min(w, w - off)
        if lo >= hi:
            continue
        xs = x[:, lo + off:hi + off, :]
        gs = gout[:, lo:hi, :]
        gk[u] = np.einsum("bti,bto->io", xs, gs)
        gx[:, lo + off:hi + off, :] += gs @ k[u].T
    gb = gout.sum(axis=(0, 1))
    return gx, gk, gb


def _conv1d_same_loops(x, k, bias):
    B, w, c_in = x.shape
    ks, _, c_out = k.shape
    pad = (ks - 1) // 2
    out = np.empty((B, w, c_out))
    for b in range(B):
        for t in range(w):
            for o in range(c_out):
                acc = bias[o]
                for u in range(ks):
                    src = t + u - pad
                    if 0 <= src < w:
                        for i in range(c_in):
                            acc += x[b, src, i] * k[u, i, o]
                out[b, t, o] = acc
    return out


def _conv1d_same_grad_loops(x, k, gout):
    B, w, c_in = x.shape
    ks, _, c_out = k.shape
    pad = (ks - 1) // 2
    gx = np.zeros_like(x)
    gk = np.zeros_like(k)
    gb = np.zeros(c_out)
    for b in range(B):
        for t in range(w):
            for o in range(c_out):
                g = gout[b, t, o]
                gb[o] += g
                for u in range(ks):
                    src = t + u - pad
                    if 0 <= src < w:
                        for i in range(c_in):
                            gk[u, i, o] += x[b, src, i] * g
                            gx[b, src, i] += k[u, i, o] * g
    return gx, gk, gb


# ---------------------------------------------------------------------------
# Exponential-smoothing recursions.  Each returns the final state plus the
# in-sample one-step SSE, so a grid sweep is one call per parameter combo.
# ---------------------------------------------------------------------------

def _ses_fit_py(y, alpha):
    level = y[0]
    sse = 0.0
    for t in range(1, y.shape[0]):
        e = y[t] - level
        sse += e * e
        level += alpha * e
    return level, sse


def _holt_fit_py(y, alpha, beta):
    level = y[0]
    trend = y[1] - y[0]
    sse = 0.0
    for t in range(1, y.shape[0]):
        f = level + trend
        e = y[t] - f
        sse += e * e
        new_level = alpha * y[t] + (1.0 - alpha) * (level + trend)
        trend = beta * (new_level - level) + (1.0 - beta) * trend
        level = new_level
    return level, trend, sse


def _hw_add_fit_py(y, m, alpha, beta, gamma):
    T = y.shape[0]
    level = 0.0
    nxt = 0.0
    for i in range(m):
        level += y[i]
        nxt += y[m + i]
    level /= m
    nxt /= m
    trend = (nxt - level) / m
    season = np.empty(m)
    for i in range(m):
        season[i] = y[i] - level
    sse = 0.0
    for t in range(m, T):
        s_old = season[t % m]
        f = level + trend + s_old
        e = y[t] - f
        sse += e * e
        new_level = alpha * (y[t] - s_old) + (1.0 - alpha) * (level + trend)
        trend = beta * (new_level - level) + (1.0 - beta) * trend
        season[t % m] = gamma * (y[t] - new_level) + (1.0 - gamma) * s_old
        level = new_level
    return level, trend, season, sse


if _NO_NUMBA:
    conv1d_same = _conv1d_same_np
    conv1d_same_grad = _conv1d_same_grad_np
    ses_fit = _ses_fit_py
    holt_fit = _holt_fit_py
    hw_add_fit = _hw_add_fit_py
else:
    conv1d_same = njit(cache=True)(_conv1d_same_loops)

    # einsum is unsupported in nopython mode; the loop body is restated here.
    @njit(cache=True)
    def conv1d_same_grad(x, k, gout):
        B, w, c_in = x.shape
        ks, _, c_out = k.shape
        pad = (ks - 1) // 2
        gx = np.zeros_like(x)
        gk = np.zeros_like(k)
        gb = np.zeros(c_out)
        for b in range(B):
            for t in range(w):
                for o in range(c_out):
                    g = gout[b, t, o]
                    gb[o] += g
                    for u in range(ks):
                        src = t + u - pad
                        if 0 <= src < w:
                            for i in range(c_in):
                                gk[u, i, o] += x[b, src, i] * g
                                gx[b, src, i] += k[u, i, o] * g
        return gx, gk, gb

    ses_fit = njit(cache=True)(_ses_fit_py)
    holt_fit = njit(cache=True)(_holt_fit_py)
    hw_add_fit = njit(cache=True)(_hw_add_fit_py)
