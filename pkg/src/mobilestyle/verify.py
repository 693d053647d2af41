"""Self-check suites behind ``mobilestyle verify``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import config as configs
from .losses import (LossParts, LossWeights, discriminator_gan_loss, f_logsigmoid, full_objective,
                     pixel_distillation_loss, r1_grad_sqnorms_fd)
from .modconv import DsModConvParams, compose_dense, ds_modconv_forward
from .optimize import fuse_demodulation, verify_equivalence
from .reference import conv2d_naive, haar_synthesis_naive
from .tensor import MulCountingArray, conv2d_depthwise, conv2d_pointwise, make_rng
from .wavelet import build_pyramid, dwt2, idwt2, idwt2_addonly
from .weights import init_random

SUITES = ("wavelet", "modconv", "fusion", "losses")


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tol: str
    passed: bool

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.suite:<8} {self.name:<40} value={self.value:.3e}  tol {self.tol}"


def wavelet_suite(n_images: int = 100, seed: int = 0) -> list:
    rng = make_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(n_images):
        img = rng.integers(0, 256, size=(1, 3, 64, 64)).astype(np.float64)
        worst = max(worst, float(np.max(np.abs(img - idwt2(dwt2(img))))))
    elapsed = time.perf_counter() - t0
    checks = [
        Check("wavelet", "round trip max|I - IDWT(DWT(I))|", worst, "<= 1e-12", worst <= 1e-12),
        Check("wavelet", "round trip runtime (s)", elapsed, "< 1", elapsed < 1.0),
    ]
    mismatches, muls = 0, 0
    for _ in range(n_images):
        coeffs = rng.standard_normal((1, 12, 16, 16))
        MulCountingArray.reset()
        fast = idwt2_addonly(MulCountingArray.wrap(coeffs)).view(np.ndarray)
        muls += MulCountingArray.mul_count
        if fast.tobytes() != idwt2(coeffs).tobytes():
            mismatches += 1
    checks.append(Check("wavelet", "add-only IDWT bitwise mismatches", mismatches, "== 0", mismatches == 0))
    checks.append(Check("wavelet", "add-only IDWT multiplications", muls, "== 0", muls == 0))
    coeffs = rng.standard_normal((1, 8, 4, 4))
    err = float(np.max(np.abs(idwt2(coeffs) - haar_synthesis_naive(coeffs))))
    checks.append(Check("wavelet", "IDWT vs naive synthesis loop", err, "<= 1e-12", err <= 1e-12))
    return checks


def modconv_suite(n_instances: int = 50, n_mc: int = 10_000, seed: int = 1) -> list:
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        cin, cout = (int(v) for v in rng.integers(1, 9, size=2))
        x = rng.standard_normal((1, cin, 5, 5))
        w_dw = rng.standard_normal((cin, 1, 3, 3))
        w_pw = rng.standard_normal((cout, cin, 1, 1))
        seq = conv2d_pointwise(conv2d_depthwise(x, w_dw), w_pw)
        oracle = conv2d_naive(x, compose_dense(w_dw, w_pw), pad=1)
        worst = max(worst, float(np.max(np.abs(seq - oracle)) / max(np.max(np.abs(oracle)), 1e-300)))
    checks = [Check("modconv", "separable == composed dense (rel)", worst, "<= 1e-10", worst <= 1e-10)]
    stds = demod_output_stds(n_mc, seed=seed + 1)
    lo, hi = float(stds.min()), float(stds.max())
    checks.append(Check("modconv", "demodulated output std (min)", lo, ">= 0.8", lo >= 0.8))
    checks.append(Check("modconv", "demodulated output std (max)", hi, "<= 1.2", hi <= 1.2))
    return checks


def demod_output_stds(n_samples: int = 10_000, cin: int = 8, cout: int = 6, style_dim: int = 16,
                      seed: int = 0) -> np.ndarray:
    """Per-channel std of demodulated outputs for unit-variance inputs.

    Inputs are 3x3 patches so the centre pixel sees the whole footprint
    without zero padding; bias, noise and activation are disabled.
    """
    rng = make_rng(seed)
    params = DsModConvParams(
        w_dw=rng.standard_normal((cin, 1, 3, 3)),
        w_pw=rng.standard_normal((cout, cin, 1, 1)),
        bias=np.zeros(cout),
        affine_w=rng.standard_normal((cin, style_dim)),
        affine_b=np.ones(cin),
        demod_mode="style",
        activate=False,
    )
    x = rng.standard_normal((n_samples, cin, 3, 3))
    style = rng.standard_normal((n_samples, style_dim))
    y = ds_modconv_forward(x, style, params)[:, :, 1, 1]
    return y.std(axis=0)


def fusion_suite(weights=None, fused=None, n_samples: int = 16, tol: float = 1e-10) -> list:
    weights = weights if weights is not None else init_random(configs.tiny_mobile(64), seed=3)
    made = fuse_demodulation(weights)
    fused = fused if fused is not None else made
    rep = verify_equivalence(weights, fused, n_samples=n_samples, tol=tol)
    again = fuse_demodulation(made)
    checks = [
        Check("fusion", f"fused vs unfused max-abs ({n_samples} samples)", rep.max_abs_divergence,
              f"<= {tol:g}", bool(rep.passed)),
        Check("fusion", "fuse(fuse(g)) == fuse(g) bitwise", 0.0 if again.equals(made) else 1.0,
              "== 0", again.equals(made)),
    ]
    return checks


def losses_suite(seed: int = 2) -> list:
    rng = make_rng(seed)
    img = rng.uniform(-1, 1, size=(2, 3, 32, 32))
    teacher = build_pyramid(img, 3)
    loss = pixel_distillation_loss(teacher, teacher)
    f0 = float(f_logsigmoid(0.0))
    err_f0 = abs(f0 + math.log(2))
    # D(x) = 0.5 x^T A x + b^T x on flattened 1x1x2x2 images; grad = A_sym x + b
    a = rng.standard_normal((4, 4))
    b = rng.standard_normal(4)
    disc = lambda x: 0.5 * x.reshape(-1) @ a @ x.reshape(-1) + b @ x.reshape(-1)
    xs = rng.standard_normal((3, 1, 2, 2))
    analytic = np.array([np.sum((0.5 * (a + a.T) @ x.reshape(-1) + b) ** 2) for x in xs])
    fd_err = float(np.max(np.abs(r1_grad_sqnorms_fd(disc, xs) - analytic)))
    student, _ = full_objective(LossParts(2.0, 3.0, 10.0), LossWeights(1.0, 1.0, 0.1))
    d0 = discriminator_gan_loss([0.0], [0.0], [1.0], gamma=2.0)
    return [
        Check("losses", "pixel loss on matched pyramids", loss, "<= 1e-12", 0.0 <= loss <= 1e-12),
        Check("losses", "|f(0) + log 2|", err_f0, "<= 1e-12", err_f0 <= 1e-12),
        Check("losses", "R1 finite-difference vs analytic", fd_err, "<= 1e-6", fd_err <= 1e-6),
        Check("losses", "objective (1,1,0.1)x(2,3,10)", student, "== 6.0", student == 6.0),
        Check("losses", "D loss gamma=2, zero scores", abs(d0 - (1 - 2 * math.log(2))), "<= 1e-12",
              abs(d0 - (1 - 2 * math.log(2))) <= 1e-12),
    ]


def run_suites(names, weights=None, fused=None) -> list:
    checks = []
    for name in names:
        if name == "wavelet":
            checks += wavelet_suite()
        elif name == "modconv":
            checks += modconv_suite()
        elif name == "fusion":
            checks += fusion_suite(weights, fused)
        elif name == "losses":
            checks += losses_suite()
        else:
            raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
    return checks
