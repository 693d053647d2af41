"""Dense NCHW tensor primitives.

Tensors are plain ``numpy.ndarray`` objects holding float64 values. Every
function here is pure: inputs are never written to, and the reduction order
of each kernel is fixed, so results are bit-reproducible for a given input.

A light instrumentation layer (:func:`count_ops`) tallies multiply-accumulate
work done by the primitives. The graph optimizer and the complexity analyzer
use it to check that rewritten graphs really do less arithmetic.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64
PIXEL_NORM_EPS = 1e-8


# ---------------------------------------------------------------------------
# Instrumentation
# ---------------------------------------------------------------------------

@dataclass
class OpCounter:
    """Running tally of multiply-accumulates, keyed by primitive name."""

    macs: dict = field(default_factory=dict)

    def add(self, kind: str, n: int) -> None:
        self.macs[kind] = self.macs.get(kind, 0) + int(n)

    @property
    def total(self) -> int:
        return sum(self.macs.values())


_active_counter: contextvars.ContextVar = contextvars.ContextVar("op_counter", default=None)


@contextlib.contextmanager
def count_ops():
    """Collect MAC counts from every primitive called inside the block."""
    counter = OpCounter()
    token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(token)


def tally(kind: str, n: int) -> None:
    counter = _active_counter.get()
    if counter is not None:
        counter.add(kind, n)


class MulCountingArray(np.ndarray):
    """ndarray subclass that counts multiplicative ufunc calls and elements.

    Used to prove that a kernel touches its inputs with additions only:
    wrap the inputs with :meth:`wrap`, run the kernel, read ``mul_count``.
    """

    _MULTIPLICATIVE = {np.multiply, np.true_divide, np.floor_divide, np.matmul,
                       np.power, np.square, np.reciprocal, np.ldexp}
    mul_count = 0

    @classmethod
    def wrap(cls, a):
        return np.asarray(a).view(cls)

    @classmethod
    def reset(cls):
        cls.mul_count = 0

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if ufunc in self._MULTIPLICATIVE:
            size = max(np.size(x) for x in inputs)
            MulCountingArray.mul_count += int(size)
        args = [x.view(np.ndarray) if isinstance(x, MulCountingArray) else x for x in inputs]
        if "out" in kwargs:
            kwargs["out"] = tuple(o.view(np.ndarray) if isinstance(o, MulCountingArray) else o
                                  for o in kwargs["out"])
        result = getattr(ufunc, method)(*args, **kwargs)
        if isinstance(result, np.ndarray):
            return result.view(MulCountingArray)
        return result

    def __array_function__(self, func, types, args, kwargs):
        # einsum/dot/tensordot bypass __array_ufunc__; count them by output size
        if func in (np.einsum, np.dot, np.tensordot, np.inner, np.outer, np.vdot, np.prod):
            MulCountingArray.mul_count += 1
        return super().__array_function__(func, types, args, kwargs)


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator on the Philox-4x64 counter-based bit generator.

    Philox output depends only on (key, counter), so a seed yields the same
    stream on every platform.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def as_tensor(x) -> np.ndarray:
    a = np.asanyarray(x, dtype=DTYPE)
    if a.ndim and any(d < 1 for d in a.shape):
        raise ValueError(f"tensor extents must be >= 1, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _check_image(x: np.ndarray, name: str = "x") -> None:
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (N,C,H,W), got shape {x.shape}")


def conv2d_dense(x, w, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation of ``x`` [N,Cin,H,W] with ``w`` [Cout,Cin,kh,kw]."""
    x = as_tensor(x)
    w = as_tensor(w)
    _check_image(x)
    if w.ndim != 4 or w.shape[1] != x.shape[1]:
        raise ValueError(f"conv2d_dense: input shape {x.shape} incompatible with weight shape {w.shape}")
    cout, cin, kh, kw = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d_dense: kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d_dense: invalid stride={stride} pad={pad}")
    n, _, h, wd = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d_dense: kernel {kh}x{kw} larger than padded input {x.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    # windows: [N, Cin, Ho, Wo, kh, kw]
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = np.einsum("nihwab,oiab->nohw", windows, w, optimize=True)
    tally("conv_dense", n * cout * cin * kh * kw * ho * wo)
    return np.ascontiguousarray(out)


def conv2d_depthwise(x, w, pad: int | None = None) -> np.ndarray:
    """Per-channel "same" convolution; ``w`` is [C,1,kh,kw]."""
    x = as_tensor(x)
    w = as_tensor(w)
    _check_image(x)
    if w.ndim != 4 or w.shape[1] != 1 or w.shape[0] != x.shape[1]:
        raise ValueError(f"conv2d_depthwise: input shape {x.shape} needs weight [C,1,kh,kw] "
                         f"with C={x.shape[1]}, got {w.shape}")
    c, _, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"conv2d_depthwise: kernel must be square and odd, got {kh}x{kw}")
    if pad is None:
        pad = (kh - 1) // 2
    if pad != (kh - 1) // 2:
        raise ValueError(f"conv2d_depthwise: pad must be {(kh - 1) // 2} for same-size output")
    n, _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros_like(x)
    # fixed tap order keeps the accumulation deterministic
    for a in range(kh):
        for b in range(kw):
            out += w[None, :, 0, a, b, None, None] * xp[:, :, a:a + h, b:b + wd]
    tally("conv_depthwise", n * c * kh * kw * h * wd)
    return out


def conv2d_pointwise(x, w) -> np.ndarray:
    """1x1 convolution: a per-pixel matrix product over channels."""
    x = as_tensor(x)
    w = as_tensor(w)
    _check_image(x)
    if w.ndim == 4:
        if w.shape[2:] != (1, 1):
            raise ValueError(f"conv2d_pointwise: weight must be [Cout,Cin,1,1], got {w.shape}")
        w = w[:, :, 0, 0]
    if w.ndim != 2 or w.shape[1] != x.shape[1]:
        raise ValueError(f"conv2d_pointwise: input shape {x.shape} incompatible with weight shape {w.shape}")
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    out = np.matmul(w, x.reshape(n, cin, h * wd)).reshape(n, cout, h, wd)
    tally("conv_pointwise", n * cout * cin * h * wd)
    return out


def linear(x, w, b=None) -> np.ndarray:
    x = as_tensor(x)
    w = as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or w.shape[1] != x.shape[1]:
        raise ValueError(f"linear: input shape {x.shape} incompatible with weight shape {w.shape}")
    out = x @ w.T
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ValueError(f"linear: bias shape {b.shape} does not match weight shape {w.shape}")
        out = out + b
    tally("linear", x.shape[0] * w.shape[0] * w.shape[1])
    return out


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def leaky_relu(x, slope: float = 0.2) -> np.ndarray:
    x = as_tensor(x)
    return np.where(x >= 0, x, x * slope)


def noise_inject(x, noise, scale: float) -> np.ndarray:
    """Add ``scale * noise`` ([N,1,H,W]) to every channel of ``x``."""
    x = as_tensor(x)
    noise = as_tensor(noise)
    _check_image(x)
    n, _, h, w = x.shape
    if noise.shape != (n, 1, h, w):
        raise ValueError(f"noise_inject: noise shape {noise.shape} != expected {(n, 1, h, w)}")
    tally("noise", n * h * w)
    return x + scale * noise


def pixel_norm(x, eps: float = PIXEL_NORM_EPS) -> np.ndarray:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ValueError(f"pixel_norm expects [N,C], got {x.shape}")
    return x / np.sqrt(np.mean(x * x, axis=1, keepdims=True) + eps)


def upsample_nearest(x, factor: int = 2) -> np.ndarray:
    x = as_tensor(x)
    _check_image(x)
    return x.repeat(factor, axis=2).repeat(factor, axis=3)
