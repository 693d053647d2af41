"""Modulated convolutions: the dense baseline and the depthwise-separable variant.

Modulation and demodulation act on activations, not weights. For the
separable layer the forward pass is

    s    = affine(style)
    x'   = s * x                 (per input channel)
    x''  = depthwise3x3(x')
    x''' = pointwise1x1(x'')
    out  = demod * x'''          (per output channel)

followed by bias, noise injection and leaky-relu. Because depthwise then
pointwise is linear, it equals one dense 3x3 convolution with kernel
``w_pw[j, i] * w_dw[i]``; demodulation coefficients are computed from that
composed kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .tensor import (as_tensor, conv2d_dense, conv2d_depthwise, conv2d_pointwise, leaky_relu,
                     linear, noise_inject, tally)

DEMOD_EPS = 1e-8
DEMOD_MODES = ("style", "trainable", "fused", "none")
LRELU_SLOPE = 0.2


@dataclass(frozen=True)
class DsModConvParams:
    """Weights of one depthwise-separable modulated convolution.

    ``out_scale`` and ``act_gain`` are optional constant nodes (a per-channel
    scale before the bias, a scalar gain after the activation). Freshly
    exported graphs do not carry them; :func:`mobilestyle.optimize.fold_constants`
    removes them when present.
    """

    w_dw: np.ndarray                 # [Cin,1,3,3]
    w_pw: np.ndarray                 # [Cout,Cin,1,1]
    bias: np.ndarray                 # [Cout]
    affine_w: np.ndarray             # [Cin,style_dim]
    affine_b: np.ndarray             # [Cin]
    demod_mode: str = "style"
    p_demod: Optional[np.ndarray] = None   # [Cin], trainable mode only
    noise_strength: Optional[float] = None
    activate: bool = True
    out_scale: Optional[np.ndarray] = None
    act_gain: Optional[float] = None

    def __post_init__(self):
        if self.demod_mode not in DEMOD_MODES:
            raise ValueError(f"unknown demod_mode {self.demod_mode!r}; expected one of {DEMOD_MODES}")
        cin = self.w_dw.shape[0]
        if self.w_dw.shape != (cin, 1, 3, 3):
            raise ValueError(f"depthwise weight must be [Cin,1,3,3], got {self.w_dw.shape}")
        if self.w_pw.ndim != 4 or self.w_pw.shape[1:] != (cin, 1, 1):
            raise ValueError(f"pointwise weight must be [Cout,{cin},1,1], got {self.w_pw.shape}")
        if self.affine_w.shape[0] != cin or self.affine_b.shape != (cin,):
            raise ValueError("style affine must produce one scale per input channel")
        if self.demod_mode == "trainable":
            if self.p_demod is None or self.p_demod.shape != (cin,):
                raise ValueError(f"trainable demodulation needs p_demod of shape ({cin},)")
            if np.any(self.p_demod <= 0):
                raise ValueError("p_demod must be strictly positive")
        if self.demod_mode == "fused" and self.p_demod is not None:
            raise ValueError("fused layers already absorb demodulation; p_demod must be dropped")

    @property
    def cin(self) -> int:
        return self.w_dw.shape[0]

    @property
    def cout(self) -> int:
        return self.w_pw.shape[0]

    def with_(self, **changes) -> "DsModConvParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DenseModConvParams:
    """StyleGAN2-style modulated convolution with a dense kernel."""

    weight: np.ndarray               # [Cout,Cin,k,k]
    bias: np.ndarray
    affine_w: np.ndarray
    affine_b: np.ndarray
    demodulate: bool = True
    noise_strength: Optional[float] = None
    activate: bool = True
    out_scale: Optional[np.ndarray] = None
    act_gain: Optional[float] = None

    @property
    def cin(self) -> int:
        return self.weight.shape[1]

    @property
    def cout(self) -> int:
        return self.weight.shape[0]


def style_affine(style, affine_w, affine_b) -> np.ndarray:
    return linear(style, affine_w, affine_b)


def modulate(x, s) -> np.ndarray:
    """Scale input channel ``i`` of sample ``n`` by ``s[n, i]``."""
    x = as_tensor(x)
    s = as_tensor(s)
    if s.shape != x.shape[:2]:
        raise ValueError(f"modulate: style scales {s.shape} do not match input {x.shape}")
    tally("modulate", x.size)
    return x * s[:, :, None, None]


def compose_dense(w_dw, w_pw) -> np.ndarray:
    """Dense kernel equal to depthwise followed by pointwise: [Cout,Cin,3,3]."""
    w_dw = as_tensor(w_dw)
    w_pw = as_tensor(w_pw)
    pw = w_pw.reshape(w_pw.shape[0], w_pw.shape[1])
    if pw.shape[1] != w_dw.shape[0]:
        raise ValueError(f"compose_dense: pointwise {w_pw.shape} does not follow depthwise {w_dw.shape}")
    tally("compose", pw.size * w_dw.shape[2] * w_dw.shape[3])
    return pw[:, :, None, None] * w_dw[None, :, 0, :, :]


def _demod_from_kernel(w_dense, scales) -> np.ndarray:
    # scales: [N,Cin]; w_dense: [Cout,Cin,k,k] -> [N,Cout]
    wsq = np.sum(w_dense * w_dense, axis=(2, 3))          # [Cout,Cin]
    tally("demod_coeffs", scales.shape[0] * w_dense.size)
    return 1.0 / np.sqrt((scales * scales) @ wsq.T + DEMOD_EPS)


def compute_demod(w_dw, w_pw, s) -> np.ndarray:
    """Style-dependent demodulation, one coefficient per (sample, output channel)."""
    s = as_tensor(s)
    if s.ndim != 2:
        raise ValueError(f"compute_demod expects s of shape [N,Cin], got {s.shape}")
    return _demod_from_kernel(compose_dense(w_dw, w_pw), s)


def compute_demod_trainable(w_dw, w_pw, p_demod) -> np.ndarray:
    """Demodulation with learned constants in place of the style: shape [Cout]."""
    p = as_tensor(p_demod)
    if p.ndim != 1:
        raise ValueError(f"p_demod must be 1-D, got {p.shape}")
    return _demod_from_kernel(compose_dense(w_dw, w_pw), p[None, :])[0]


def _finish(y, params, noise):
    """Shared tail: constant scale, bias, noise, activation, gain."""
    if params.out_scale is not None:
        tally("scale", y.size)
        y = y * params.out_scale[None, :, None, None]
    y = y + params.bias[None, :, None, None]
    if params.noise_strength is not None and noise is not None:
        y = noise_inject(y, noise, params.noise_strength)
    if params.activate:
        y = leaky_relu(y, LRELU_SLOPE)
    if params.act_gain is not None:
        tally("scale", y.size)
        y = y * params.act_gain
    return y


def ds_modconv_forward(x, style, params: DsModConvParams, noise=None) -> np.ndarray:
    """Depthwise-separable modulated convolution, including bias/noise/activation."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[1] != params.cin:
        raise ValueError(f"ds_modconv_forward: input {x.shape} does not have {params.cin} channels")
    s = style_affine(style, params.affine_w, params.affine_b)
    y = conv2d_pointwise(conv2d_depthwise(modulate(x, s), params.w_dw), params.w_pw)
    y = apply_demod(y, params, s)
    return _finish(y, params, noise)


def apply_demod(y, params: DsModConvParams, s) -> np.ndarray:
    mode = params.demod_mode
    if mode in ("fused", "none"):
        return y
    if mode == "style":
        d = compute_demod(params.w_dw, params.w_pw, s)
    else:
        d = compute_demod_trainable(params.w_dw, params.w_pw, params.p_demod)[None, :]
    tally("demodulate", y.size)
    return y * d[:, :, None, None]


def modconv_dense_forward(x, style, params: DenseModConvParams, noise=None) -> np.ndarray:
    """Modulate, dense "same" convolution, style demodulation, then the tail."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[1] != params.cin:
        raise ValueError(f"modconv_dense_forward: input {x.shape} does not have {params.cin} channels")
    s = style_affine(style, params.affine_w, params.affine_b)
    k = params.weight.shape[-1]
    y = conv2d_dense(modulate(x, s), params.weight, stride=1, pad=(k - 1) // 2)
    if params.demodulate:
        d = _demod_from_kernel(params.weight, s)
        tally("demodulate", y.size)
        y = y * d[:, :, None, None]
    return _finish(y, params, noise)
