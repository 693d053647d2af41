"""Forward-only distillation objectives.

Reductions are per-level means so loss magnitudes do not depend on
resolution. Nothing here differentiates; the R1 term takes gradient norms
computed by the caller (see :func:`r1_grad_sqnorms_fd` for a finite
difference helper usable with small analytic discriminators).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .tensor import as_tensor
from .wavelet import WaveletPyramid, build_pyramid, dwt2, idwt2

PERCEPTUAL_SIZE = 256


# ---------------------------------------------------------------------------
# Pixel-level distillation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PixelLossTerms:
    wavelet: float     # sum over levels of mean |F_s - DWT(I_t)|
    pixel: float       # sum over levels of mean |IDWT(F_s) - I_t|

    @property
    def total(self) -> float:
        return self.wavelet + self.pixel


def _teacher_levels(teacher):
    if isinstance(teacher, WaveletPyramid):
        return [lvl.pixels for lvl in teacher.levels]
    return [as_tensor(t) for t in teacher]


def pixel_distillation_terms(student: WaveletPyramid, teacher) -> PixelLossTerms:
    """Wavelet-domain and pixel-domain L1 terms, summed over scales."""
    targets = _teacher_levels(teacher)
    if len(targets) != len(student.levels):
        raise ValueError(f"student has {len(student.levels)} levels, teacher pyramid has {len(targets)}")
    wav = pix = 0.0
    for i, (lvl, target) in enumerate(zip(student.levels, targets)):
        if lvl.pixels.shape != target.shape:
            raise ValueError(f"level {i}: student image {lvl.pixels.shape} vs teacher {target.shape}")
        wav += float(np.mean(np.abs(lvl.coeffs - dwt2(target))))
        pix += float(np.mean(np.abs(idwt2(lvl.coeffs) - target)))
    return PixelLossTerms(wav, pix)


def pixel_distillation_loss(student: WaveletPyramid, teacher) -> float:
    return pixel_distillation_terms(student, teacher).total


# ---------------------------------------------------------------------------
# Perceptual loss
# ---------------------------------------------------------------------------

class FeatureExtractor(Protocol):
    """Deterministic image -> named feature maps, with a fixed layer list."""

    layers: Sequence[str]

    def __call__(self, img: np.ndarray) -> dict: ...


def resize_to(img, size: int = PERCEPTUAL_SIZE) -> np.ndarray:
    """Integer-factor resize: mean-pool down, nearest-repeat up."""
    img = as_tensor(img)
    h, w = img.shape[2:]
    if h != w:
        raise ValueError(f"expected square images, got {h}x{w}")
    if h == size:
        return img
    if h > size:
        if h % size:
            raise ValueError(f"cannot average-pool {h} to {size} by an integer factor")
        f = h // size
        n, c = img.shape[:2]
        return img.reshape(n, c, size, f, size, f).mean(axis=(3, 5))
    if size % h:
        raise ValueError(f"cannot upsample {h} to {size} by an integer factor")
    f = size // h
    return img.repeat(f, axis=2).repeat(f, axis=3)


def perceptual_loss(extractor: FeatureExtractor, img_s, img_t, size: int = PERCEPTUAL_SIZE) -> float:
    """Sum over layers of the mean squared feature difference.

    Both images are resized to ``size`` first. Per layer this is the
    squared Euclidean distance normalised by the feature size.
    """
    feats_s = extractor(resize_to(img_s, size))
    feats_t = extractor(resize_to(img_t, size))
    layers = list(extractor.layers)
    if list(feats_s) != layers or list(feats_t) != layers:
        raise ValueError(f"extractor returned layers {list(feats_s)} / {list(feats_t)}, "
                         f"declared {layers}")
    total = 0.0
    for name in layers:
        a, b = as_tensor(feats_s[name]), as_tensor(feats_t[name])
        if a.shape != b.shape:
            raise ValueError(f"layer {name}: feature shapes differ {a.shape} vs {b.shape}")
        total += float(np.mean((a - b) ** 2))
    return total


class IdentityExtractor:
    layers = ("pixels",)

    def __call__(self, img):
        return {"pixels": img}


class PoolPyramidExtractor:
    """Toy extractor: the image and its 2x mean-pooled copy."""

    layers = ("identity", "pool2")

    def __call__(self, img):
        n, c, h, w = img.shape
        return {"identity": img, "pool2": img.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))}


# ---------------------------------------------------------------------------
# Adversarial terms
# ---------------------------------------------------------------------------

def softplus(t) -> np.ndarray:
    """log(1 + exp(t)) without overflow."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def f_logsigmoid(t) -> np.ndarray:
    """f(t) = -log(1 + exp(-t)), the printed form (a log-sigmoid)."""
    return -softplus(-np.asarray(t, dtype=np.float64))


def f_softplus(t) -> np.ndarray:
    """f(t) = log(1 + exp(t)), the usual non-saturating GAN choice."""
    return softplus(t)


GAN_VARIANTS = {"logsigmoid": f_logsigmoid, "softplus": f_softplus}


def _f(variant: str) -> Callable:
    try:
        return GAN_VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown GAN loss variant {variant!r}; choose from {sorted(GAN_VARIANTS)}") from None


def generator_gan_loss(scores_fake, variant: str = "logsigmoid") -> float:
    """mean f(-D(G(.))).

    With the default ``logsigmoid`` f this is unbounded below; the
    ``softplus`` variant gives the standard softplus(-score), and the two are
    related pointwise by softplus(-s) == -f_logsigmoid(s).
    """
    s = as_tensor(scores_fake).reshape(-1)
    return float(np.mean(_f(variant)(-s)))


def discriminator_gan_loss(scores_real, scores_fake, r1_grad_sqnorms, gamma: float,
                           variant: str = "logsigmoid") -> float:
    """mean f(-D(real)) + mean f(D(fake)) + gamma/2 * mean |grad D(real)|^2."""
    f = _f(variant)
    real = as_tensor(scores_real).reshape(-1)
    fake = as_tensor(scores_fake).reshape(-1)
    r1 = as_tensor(r1_grad_sqnorms).reshape(-1)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return float(np.mean(f(-real)) + np.mean(f(fake)) + gamma / 2 * np.mean(r1))


def r1_grad_sqnorms_fd(discriminator: Callable, images, h: float = 1e-5) -> np.ndarray:
    """Per-sample |dD/dx|^2 by central differences. O(numel) evaluations."""
    images = as_tensor(images)
    out = np.empty(images.shape[0])
    for n in range(images.shape[0]):
        x = images[n:n + 1].copy()
        flat = x.reshape(-1)
        grad = np.empty(flat.size)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = float(np.asarray(discriminator(x)).reshape(-1)[0])
            flat[k] = orig - h
            down = float(np.asarray(discriminator(x)).reshape(-1)[0])
            flat[k] = orig
            grad[k] = (up - down) / (2 * h)
        out[n] = float(grad @ grad)
    return out


# ---------------------------------------------------------------------------
# Full objective and data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    pix: float = 1.0
    perc: float = 1.0
    gan: float = 0.1
    gamma: float = 10.0

    def __post_init__(self):
        if min(self.pix, self.perc, self.gan, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossParts:
    pix: float
    perc: float
    gan: float
    disc: float = 0.0


def full_objective(parts: LossParts, weights: LossWeights = LossWeights()) -> tuple:
    """(student loss, discriminator loss)."""
    student = weights.pix * parts.pix + weights.perc * parts.perc + weights.gan * parts.gan
    return student, parts.disc


@dataclass(frozen=True)
class Triplet:
    style: np.ndarray
    noise: list
    teacher_pyramid: list     # pixel tensors, coarse to fine

    @property
    def resolutions(self) -> list:
        return [t.shape[-1] for t in self.teacher_pyramid]


def make_triplet(teacher, z, noises=(), student_resolutions: Sequence[int] | None = None) -> Triplet:
    """Run the teacher on ``z`` and cut its image into a pyramid.

    ``student_resolutions`` are the student's head image sizes; by default a
    pyramid with one level per power of two from 8 up to the image size.
    """
    style = teacher.mapping_forward(z)
    img = teacher.synthesis_forward(style, noises)
    size = img.shape[-1]
    if student_resolutions is None:
        student_resolutions = [2 ** k for k in range(3, int(math.log2(size)) + 1)]
    student_resolutions = list(student_resolutions)
    if student_resolutions[-1] != size:
        raise ValueError(f"finest student head is {student_resolutions[-1]}, teacher image is {size}")
    for lo, hi in zip(student_resolutions, student_resolutions[1:]):
        if hi != 2 * lo:
            raise ValueError(f"student head sizes must double: {student_resolutions}")
    pyramid = build_pyramid(img, len(student_resolutions))
    return Triplet(style=style, noise=list(noises), teacher_pyramid=[lvl.pixels for lvl in pyramid.levels])
