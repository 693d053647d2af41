"""Single-level 2-D Haar transform.

Coefficients are stored channel-grouped: source channel ``c`` owns output
channels ``4c .. 4c+3`` in the order LL, HL, LH, HH.

For a 2x2 block with pixels A (top-left), B (top-right), C (bottom-left)
and D (bottom-right) the synthesis side is

    A = LL + HL + LH + HH        B = LL - HL + LH - HH
    C = LL + HL - LH - HH        D = LL - HL - LH + HH

and the analysis side uses a 1/4 scale (not the orthonormal 1/2) so that
the pair is an exact inverse:

    LL = (A + B + C + D) / 4     HL = (A - B + C - D) / 4
    LH = (A + B - C - D) / 4     HH = (A - B - C + D) / 4

Consequently LL is the 2x2 block mean, which is also what the pyramid
builder uses for downsampling. Note the scale convention when comparing
loss magnitudes against other Haar implementations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import as_tensor

SUBBANDS = ("LL", "HL", "LH", "HH")

# sign of each subband in pixels A, B, C, D
_SYNTHESIS_SIGNS = np.array([
    [1.0, 1.0, 1.0, 1.0],    # A
    [1.0, -1.0, 1.0, -1.0],  # B
    [1.0, 1.0, -1.0, -1.0],  # C
    [1.0, -1.0, -1.0, 1.0],  # D
])
# (row offset, col offset) of A, B, C, D inside the 2x2 block
_PIXEL_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _split_pixels(img):
    return img[:, :, 0::2, 0::2], img[:, :, 0::2, 1::2], img[:, :, 1::2, 0::2], img[:, :, 1::2, 1::2]


def _split_bands(coeffs):
    n, c4, h, w = coeffs.shape
    if c4 % 4:
        raise ValueError(f"wavelet coefficients need a channel count divisible by 4, got {c4}")
    g = coeffs.reshape(n, c4 // 4, 4, h, w)
    return g[:, :, 0], g[:, :, 1], g[:, :, 2], g[:, :, 3]


def dwt2(img) -> np.ndarray:
    """Haar analysis: [N,C,H,W] -> [N,4C,H/2,W/2]."""
    img = as_tensor(img)
    if img.ndim != 4:
        raise ValueError(f"dwt2 expects [N,C,H,W], got {img.shape}")
    n, c, h, w = img.shape
    if h % 2 or w % 2:
        raise ValueError(f"dwt2 needs even spatial extents, got {h}x{w}")
    a, b, cc, d = _split_pixels(img)
    ll = (a + b + cc + d) / 4
    hl = (a - b + cc - d) / 4
    lh = (a + b - cc - d) / 4
    hh = (a - b - cc + d) / 4
    return np.stack([ll, hl, lh, hh], axis=2).reshape(n, 4 * c, h // 2, w // 2)


def idwt2(coeffs) -> np.ndarray:
    """Haar synthesis: [N,4C,h,w] -> [N,C,2h,2w].

    Reference form: each pixel is the signed sum of the four subbands, with
    the sign applied as an explicit multiply and the terms accumulated in
    LL, HL, LH, HH order.
    """
    coeffs = as_tensor(coeffs)
    if coeffs.ndim != 4:
        raise ValueError(f"idwt2 expects [N,4C,h,w], got {coeffs.shape}")
    bands = _split_bands(coeffs)
    n, c, h, w = bands[0].shape
    out = np.empty((n, c, 2 * h, 2 * w), dtype=coeffs.dtype)
    for p, (dy, dx) in enumerate(_PIXEL_OFFSETS):
        acc = bands[0] * _SYNTHESIS_SIGNS[p, 0]
        for k in range(1, 4):
            acc = acc + bands[k] * _SYNTHESIS_SIGNS[p, k]
        out[:, :, dy::2, dx::2] = acc
    return out


def idwt2_addonly(coeffs) -> np.ndarray:
    """Haar synthesis using additions and subtractions only.

    Bit-identical to :func:`idwt2`: ``x * -1 + y`` and ``y - x`` round the
    same way, and the accumulation order matches.
    """
    if not isinstance(coeffs, np.ndarray):
        coeffs = as_tensor(coeffs)
    if coeffs.ndim != 4:
        raise ValueError(f"idwt2_addonly expects [N,4C,h,w], got {coeffs.shape}")
    ll, hl, lh, hh = _split_bands(coeffs)
    n, c, h, w = ll.shape
    out = np.empty((n, c, 2 * h, 2 * w), dtype=coeffs.dtype)
    out[:, :, 0::2, 0::2] = ll + hl + lh + hh
    out[:, :, 0::2, 1::2] = ll - hl + lh - hh
    out[:, :, 1::2, 0::2] = ll + hl - lh - hh
    out[:, :, 1::2, 1::2] = ll - hl - lh + hh
    return out


@dataclass(frozen=True)
class PyramidLevel:
    coeffs: np.ndarray   # [N,12,r/2,r/2] for RGB
    pixels: np.ndarray   # [N,3,r,r]

    @property
    def resolution(self) -> int:
        return self.pixels.shape[-1]


@dataclass(frozen=True)
class WaveletPyramid:
    """Per-scale wavelet predictions and their pixel reconstructions, coarse to fine."""

    levels: tuple

    def __post_init__(self):
        for lo, hi in zip(self.levels, self.levels[1:]):
            if hi.pixels.shape[-1] != 2 * lo.pixels.shape[-1]:
                raise ValueError("pyramid levels must double in size from coarse to fine")

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    @property
    def resolutions(self):
        return [lvl.resolution for lvl in self.levels]

    @classmethod
    def from_coeffs(cls, coeffs_list):
        return cls(tuple(PyramidLevel(c, idwt2_addonly(c)) for c in coeffs_list))

    @classmethod
    def from_pixels(cls, pixels_list):
        return cls(tuple(PyramidLevel(dwt2(p), p) for p in pixels_list))


def downsample_ll(img) -> np.ndarray:
    """Keep only the LL band: a 2x2 mean pool."""
    img = as_tensor(img)
    n, c = img.shape[:2]
    return dwt2(img).reshape(n, c, 4, img.shape[2] // 2, img.shape[3] // 2)[:, :, 0]


def build_pyramid(img, levels: int) -> WaveletPyramid:
    """Pyramid of ``levels`` scales ending at ``img`` itself, built by LL chaining."""
    img = as_tensor(img)
    if img.ndim != 4:
        raise ValueError(f"build_pyramid expects [N,C,H,W], got {img.shape}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = img.shape[2:]
    # every level's pixels must still be splittable by dwt2
    max_levels = int(math.log2(min(h, w)))
    if levels > max_levels:
        raise ValueError(f"{levels} levels requested but a {h}x{w} image supports at most {max_levels}")
    scales = [img]
    for _ in range(levels - 1):
        scales.append(downsample_ll(scales[-1]))
    return WaveletPyramid.from_pixels(scales[::-1])
