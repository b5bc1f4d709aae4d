"""Naive loop reference kernels.

Deliberately slow, element-at-a-time implementations kept independent of the
vectorized production path in ops.py. Oracle tests and the selftest compare
the two routes on seeded random instances.
"""
from __future__ import annotations

import math

import numpy as np


def conv2d(x, kernel, bias, stride: int, padding: int):
    h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((h_out, w_out, cout), dtype=np.float64)
    for i in range(h_out):
        for j in range(w_out):
            for o in range(cout):
                acc = 0.0
                for a in range(kh):
                    for b in range(kw):
                        ii = i * stride + a - padding
                        jj = j * stride + b - padding
                        if 0 <= ii < h and 0 <= jj < w:
                            for c in range(cin):
                                acc += float(x[ii, jj, c]) * float(kernel[a, b, c, o])
                out[i, j, o] = acc + float(bias[o])
    return out


def bn_relu(x, gamma, beta, mean, var, eps: float):
    h, w, c = x.shape
    out = np.zeros((h, w, c), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for k in range(c):
                y = (float(x[i, j, k]) - float(mean[k])) / math.sqrt(float(var[k]) + eps)
                y = float(gamma[k]) * y + float(beta[k])
                out[i, j, k] = y if y > 0 else 0.0
    return out


def global_avg_pool(x):
    h, w, c = x.shape
    out = np.zeros(c, dtype=np.float64)
    for k in range(c):
        acc = 0.0
        for i in range(h):
            for j in range(w):
                acc += float(x[i, j, k])
        out[k] = acc / (h * w)
    return out


def dense(x, weight, bias, activation: str):
    n, m = weight.shape
    out = np.zeros(m, dtype=np.float64)
    for j in range(m):
        acc = float(bias[j])
        for i in range(n):
            acc += float(x[i]) * float(weight[i, j])
        if activation == "relu":
            acc = acc if acc > 0 else 0.0
        elif activation == "sigmoid":
            acc = 1.0 / (1.0 + math.exp(-acc))
        out[j] = acc
    return out


def upsample2_nearest(x):
    h, w, c = x.shape
    out = np.zeros((2 * h, 2 * w, c), dtype=np.float64)
    for i in range(2 * h):
        for j in range(2 * w):
            for k in range(c):
                out[i, j, k] = float(x[i // 2, j // 2, k])
    return out


def maxpool(x, k: int, stride: int, padding: int):
    h, w, c = x.shape
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    out = np.zeros((h_out, w_out, c), dtype=np.float64)
    for i in range(h_out):
        for j in range(w_out):
            for ch in range(c):
                best = -math.inf
                for a in range(k):
                    for b in range(k):
                        ii = i * stride + a - padding
                        jj = j * stride + b - padding
                        if 0 <= ii < h and 0 <= jj < w:
                            v = float(x[ii, jj, ch])
                            if v > best:
                                best = v
                out[i, j, ch] = best
    return out


def concat_channels(a, b):
    h, w, ca = a.shape
    cb = b.shape[2]
    out = np.zeros((h, w, ca + cb), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for c in range(ca):
                out[i, j, c] = float(a[i, j, c])
            for c in range(cb):
                out[i, j, ca + c] = float(b[i, j, c])
    return out


def softmax(x):
    n = x.shape[0]
    m = max(float(v) for v in x)
    exps = [math.exp(float(v) - m) for v in x]
    total = sum(exps)
    return np.array([e / total for e in exps], dtype=np.float64)
