"""Executable generator graph built from a :class:`WeightContainer`.

Mobile variant (wavelet domain)::

    const [C0, b, b] -> conv_main -> head                      (block 0)
    features -> IDWT (C -> C/4, 2x size) -> conv_post_idwt
             -> conv_main -> head                               (blocks 1..)

Every block's head predicts 12 wavelet channels (4 subbands x RGB) at the
block's feature resolution; the inverse transform turns it into an RGB image
at twice that size. Only the last head forms the final image. The earlier
heads are auxiliary outputs used for multi-scale distillation and do not
feed back into the trunk.

Dense baseline (StyleGAN2-like, skip generator): const -> conv1 -> torgb,
then per resolution nearest-upsample -> conv0 -> conv1 -> torgb, with the RGB
outputs summed across resolutions through nearest upsampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GeneratorConfig
from .modconv import (LRELU_SLOPE, DenseModConvParams, DsModConvParams, ds_modconv_forward,
                      modconv_dense_forward)
from .tensor import as_tensor, leaky_relu, linear, make_rng, pixel_norm, tally, upsample_nearest
from .wavelet import WaveletPyramid, idwt2_addonly
from .weights import WeightContainer


@dataclass(frozen=True)
class SynthesisBlock:
    resolution: int                  # feature resolution after the block
    conv_main: object
    head: object
    conv_post_idwt: object = None    # first conv after upscaling; None in block 0
    upscale: str | None = None       # "idwt", "nearest" or None

    @property
    def cin(self) -> int:
        first = self.conv_post_idwt if self.conv_post_idwt is not None else self.conv_main
        return first.cin * 4 if self.upscale == "idwt" else first.cin


@dataclass(frozen=True)
class MappingLayer:
    weight: np.ndarray
    bias: np.ndarray
    act_gain: float | None = None


class _Reader:
    """Pulls entries out of a container and remembers which were used."""

    def __init__(self, weights: WeightContainer):
        self.weights = weights
        self.used = set()

    def get(self, name):
        if name not in self.weights:
            raise ValueError(f"weight container is missing parameter {name!r}")
        self.used.add(name)
        return self.weights[name]

    def opt(self, name):
        return self.get(name) if name in self.weights else None

    def scalar(self, name):
        v = self.opt(name)
        return None if v is None else float(v.reshape(-1)[0])

    def leftovers(self):
        return [n for n in self.weights if n not in self.used]


def _ds_params(rd: _Reader, prefix, demod_mode, activate=True, noise=True) -> DsModConvParams:
    return DsModConvParams(
        w_dw=rd.get(f"{prefix}.dw"),
        w_pw=rd.get(f"{prefix}.pw"),
        bias=rd.get(f"{prefix}.bias"),
        affine_w=rd.get(f"{prefix}.affine.weight"),
        affine_b=rd.get(f"{prefix}.affine.bias"),
        demod_mode=demod_mode,
        p_demod=rd.get(f"{prefix}.p_demod") if demod_mode == "trainable" else None,
        noise_strength=rd.scalar(f"{prefix}.noise_strength") if noise else None,
        activate=activate,
        out_scale=rd.opt(f"{prefix}.out_scale"),
        act_gain=rd.scalar(f"{prefix}.act_gain"),
    )


def _dense_params(rd: _Reader, prefix, demodulate=True, activate=True, noise=True) -> DenseModConvParams:
    return DenseModConvParams(
        weight=rd.get(f"{prefix}.weight"),
        bias=rd.get(f"{prefix}.bias"),
        affine_w=rd.get(f"{prefix}.affine.weight"),
        affine_b=rd.get(f"{prefix}.affine.bias"),
        demodulate=demodulate,
        noise_strength=rd.scalar(f"{prefix}.noise_strength") if noise else None,
        activate=activate,
        out_scale=rd.opt(f"{prefix}.out_scale"),
        act_gain=rd.scalar(f"{prefix}.act_gain"),
    )


class Generator:
    """Immutable generator; forward calls allocate their own activations."""

    def __init__(self, weights: WeightContainer):
        self.weights = weights
        cfg = self.config = weights.config
        rd = _Reader(weights)
        self.mapping = [
            MappingLayer(rd.get(f"mapping.{i}.weight"), rd.get(f"mapping.{i}.bias"),
                         rd.scalar(f"mapping.{i}.act_gain"))
            for i in range(cfg.mapping_layers)
        ]
        self.const = rd.get("synthesis.const")
        self.blocks = []
        for b, r in enumerate(cfg.feature_resolutions):
            p = f"synthesis.b{r}"
            if cfg.variant == "mobile":
                block = SynthesisBlock(
                    resolution=r,
                    conv_post_idwt=_ds_params(rd, f"{p}.conv_post_idwt", cfg.demod_mode) if b else None,
                    conv_main=_ds_params(rd, f"{p}.conv_main", cfg.demod_mode),
                    head=_ds_params(rd, f"{p}.head", "none", activate=False, noise=False),
                    upscale="idwt" if b else None,
                )
            else:
                block = SynthesisBlock(
                    resolution=r,
                    conv_post_idwt=_dense_params(rd, f"{p}.conv0") if b else None,
                    conv_main=_dense_params(rd, f"{p}.conv1"),
                    head=_dense_params(rd, f"{p}.torgb", demodulate=False, activate=False, noise=False),
                    upscale="nearest" if b else None,
                )
            self.blocks.append(block)
        extra = rd.leftovers()
        if extra:
            raise ValueError(f"weight container has parameters the graph does not use: {extra[:5]}")
        self._check_shapes()

    def _check_shapes(self):
        cfg = self.config
        if self.const.shape[1:] != (cfg.channels[cfg.base_resolution], cfg.base_resolution, cfg.base_resolution):
            raise ValueError(f"constant input has shape {self.const.shape}, config expects "
                             f"{cfg.channels[cfg.base_resolution]} channels at {cfg.base_resolution}")
        for layer in self.mapping:
            if layer.weight.shape != (cfg.style_dim, cfg.style_dim):
                raise ValueError(f"mapping weight shape {layer.weight.shape} does not match style_dim")

    # -- inputs ----------------------------------------------------------

    @property
    def noise_sites(self) -> list:
        """(layer name, resolution) for every noise injection, in execution order."""
        sites = []
        for blk in self.blocks:
            p = f"synthesis.b{blk.resolution}"
            if blk.conv_post_idwt is not None:
                sites.append((f"{p}.{'conv_post_idwt' if self.is_mobile else 'conv0'}", blk.resolution))
            sites.append((f"{p}.{'conv_main' if self.is_mobile else 'conv1'}", blk.resolution))
        return sites

    @property
    def is_mobile(self) -> bool:
        return self.config.variant == "mobile"

    def sample_inputs(self, seed: int, n: int = 1):
        """Latent z and per-site noise drawn from one seeded stream."""
        rng = make_rng(seed)
        z = rng.standard_normal((n, self.config.style_dim))
        noises = [rng.standard_normal((n, 1, r, r)) for _, r in self.noise_sites]
        return z, noises

    # -- forward ---------------------------------------------------------

    def mapping_forward(self, z) -> np.ndarray:
        z = as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.config.style_dim:
            raise ValueError(f"latent must be [N,{self.config.style_dim}], got {z.shape}")
        x = pixel_norm(z)
        for layer in self.mapping:
            x = leaky_relu(linear(x, layer.weight, layer.bias), LRELU_SLOPE)
            if layer.act_gain is not None:
                tally("scale", x.size)
                x = x * layer.act_gain
        return x

    def block_forward(self, x, style, noises, block: SynthesisBlock):
        """Run one block. Returns (features, head output).

        For the mobile variant the head output is a 12-channel wavelet
        prediction at the feature resolution; for the dense baseline it is the
        block's RGB contribution.
        """
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != block.cin:
            raise ValueError(f"block at {block.resolution} expects {block.cin} input channels, got {x.shape}")
        noises = list(noises)
        fwd = ds_modconv_forward if self.is_mobile else modconv_dense_forward
        if block.upscale:
            if block.upscale == "idwt":
                if x.shape[1] % 4:
                    raise ValueError(f"IDWT upscale needs channels divisible by 4, got {x.shape[1]}")
                x = idwt2_addonly(x)
            else:
                x = upsample_nearest(x)
            x = fwd(x, style, block.conv_post_idwt, noises.pop(0))
        x = fwd(x, style, block.conv_main, noises.pop(0))
        return x, fwd(x, style, block.head)

    def _resolve_noises(self, noises, n):
        sites = self.noise_sites
        if not noises:
            return [np.zeros((n, 1, r, r)) for _, r in sites]
        if len(noises) != len(sites):
            raise ValueError(f"expected {len(sites)} noise tensors for sites "
                             f"{[name for name, _ in sites]}, got {len(noises)}")
        return [as_tensor(v) for v in noises]

    def synthesis_forward(self, style, noises=(), mode: str = "final"):
        """Image [N,3,R,R] (``mode="final"``) or a WaveletPyramid of every head."""
        if mode not in ("final", "pyramid"):
            raise ValueError(f"mode must be 'final' or 'pyramid', got {mode!r}")
        style = as_tensor(style)
        if style.ndim != 2 or style.shape[1] != self.config.style_dim:
            raise ValueError(f"style must be [N,{self.config.style_dim}], got {style.shape}")
        n = style.shape[0]
        noises = self._resolve_noises(noises, n)
        x = np.broadcast_to(self.const, (n,) + self.const.shape[1:])
        heads, rgb, k = [], None, 0
        for blk in self.blocks:
            used = 2 if blk.conv_post_idwt is not None else 1
            x, head = self.block_forward(x, style, noises[k:k + used], blk)
            k += used
            if self.is_mobile:
                heads.append(head)
            else:
                rgb = head if rgb is None else upsample_nearest(rgb) + head
                heads.append(rgb)
        if self.is_mobile:
            if mode == "final":
                return idwt2_addonly(heads[-1])
            return WaveletPyramid.from_coeffs(heads)
        if mode == "final":
            return rgb
        return WaveletPyramid.from_pixels(heads)

    def generate(self, seed: int) -> np.ndarray:
        """Seed -> clamped image [1,3,R,R] with values in [-1, 1]."""
        z, noises = self.sample_inputs(seed)
        img = self.synthesis_forward(self.mapping_forward(z), noises)
        return np.clip(img, -1.0, 1.0)

    def __call__(self, z, noises=(), mode="final"):
        return self.synthesis_forward(self.mapping_forward(z), noises, mode)

    # -- introspection ---------------------------------------------------

    def runtime_nodes(self) -> list:
        """Names of the executed operations; graph passes shrink this list."""
        nodes = ["pixel_norm"]
        for i, layer in enumerate(self.mapping):
            nodes += [f"mapping.{i}.linear", f"mapping.{i}.lrelu"]
            if layer.act_gain is not None:
                nodes.append(f"mapping.{i}.gain")
        nodes.append("synthesis.const")
        for blk in self.blocks:
            p = f"synthesis.b{blk.resolution}"
            if blk.upscale:
                nodes.append(f"{p}.{'idwt' if self.is_mobile else 'upsample'}")
            names = (["conv_post_idwt", "conv_main", "head"] if self.is_mobile
                     else ["conv0", "conv1", "torgb"])
            for name, conv in zip(names, (blk.conv_post_idwt, blk.conv_main, blk.head)):
                if conv is not None:
                    nodes += [f"{p}.{name}.{op}" for op in _conv_nodes(conv)]
            if not self.is_mobile and blk.upscale:
                nodes += [f"{p}.skip_upsample", f"{p}.skip_add"]
        if self.is_mobile:
            nodes.append("output.idwt")
        return nodes


def _conv_nodes(conv) -> list:
    ops = ["affine", "modulate"]
    if isinstance(conv, DsModConvParams):
        ops += ["depthwise", "pointwise"]
        if conv.demod_mode in ("style", "trainable"):
            ops.append("demod")
    else:
        ops.append("conv")
        if conv.demodulate:
            ops.append("demod")
    if conv.out_scale is not None:
        ops.append("scale")
    ops.append("bias")
    if conv.noise_strength is not None:
        ops.append("noise")
    if conv.activate:
        ops.append("lrelu")
    if conv.act_gain is not None:
        ops.append("gain")
    return ops


def generate(seed: int, weights: WeightContainer) -> np.ndarray:
    return Generator(weights).generate(seed)
