"""Slow, loop-based reference implementations.

They share no code with the vectorised kernels and serve as oracles for the
verification suites and the test-suite.
"""
import math

import numpy as np


def conv2d_naive(x, w, stride=1, pad=0):
    n, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    assert cin == cin_w
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for o in range(cout):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for i in range(cin):
                        for a in range(kh):
                            for c in range(kw):
                                yy = y * stride + a - pad
                                xc = xx * stride + c - pad
                                if 0 <= yy < h and 0 <= xc < wd:
                                    acc += x[b, i, yy, xc] * w[o, i, a, c]
                    out[b, o, y, xx] = acc
    return out


def linear_naive(x, w, b):
    out = np.zeros((x.shape[0], w.shape[0]))
    for n in range(x.shape[0]):
        for o in range(w.shape[0]):
            acc = b[o]
            for i in range(w.shape[1]):
                acc += x[n, i] * w[o, i]
            out[n, o] = acc
    return out


def demod_naive(w_dw, w_pw, s, eps=1e-8):
    """demod[n, j] = 1/sqrt(sum_{i,k} (s[n,i] * w_pw[j,i] * w_dw[i,k])^2 + eps)."""
    n_s, cin = s.shape
    cout = w_pw.shape[0]
    out = np.zeros((n_s, cout))
    for n in range(n_s):
        for j in range(cout):
            acc = 0.0
            for i in range(cin):
                for a in range(3):
                    for b in range(3):
                        v = s[n, i] * w_pw[j, i, 0, 0] * w_dw[i, 0, a, b]
                        acc += v * v
            out[n, j] = 1.0 / math.sqrt(acc + eps)
    return out


def haar_synthesis_naive(coeffs):
    n, c4, h, w = coeffs.shape
    out = np.zeros((n, c4 // 4, 2 * h, 2 * w))
    for b in range(n):
        for c in range(c4 // 4):
            for y in range(h):
                for x in range(w):
                    ll, hl, lh, hh = coeffs[b, 4 * c:4 * c + 4, y, x]
                    out[b, c, 2 * y, 2 * x] = ll + hl + lh + hh
                    out[b, c, 2 * y, 2 * x + 1] = ll - hl + lh - hh
                    out[b, c, 2 * y + 1, 2 * x] = ll + hl - lh - hh
                    out[b, c, 2 * y + 1, 2 * x + 1] = ll - hl - lh + hh
    return out
