"""Generator configuration and its JSON file format.

Config file schema (JSON object)::

    {
      "variant": "mobile" | "dense_baseline",
      "style_dim": 512,
      "mapping_layers": 8,
      "base_resolution": 4,
      "target_resolution": 1024,
      "channels": {"4": 512, "8": 512, ...},   # feature resolution -> width
      "demod_mode": "trainable" | "style" | "fused"
    }

``channels`` is keyed by the resolution of the feature maps. The mobile
variant works in the wavelet domain, so its last feature maps are at half
the image resolution; the dense baseline's are at full resolution.
Omitted keys take the defaults below.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

VARIANTS = ("mobile", "dense_baseline")

# StyleGAN2 config-f widths
STYLEGAN2_F_CHANNELS = {4: 512, 8: 512, 16: 512, 32: 512, 64: 512,
                        128: 256, 256: 128, 512: 64, 1024: 32}

# Mobile widths used for the headline complexity comparison at 1024x1024.
MOBILE_CHANNELS = {4: 512, 8: 512, 16: 512, 32: 512, 64: 512,
                   128: 256, 256: 128, 512: 64}


def _is_pow2(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


@dataclass(frozen=True)
class GeneratorConfig:
    target_resolution: int = 1024
    variant: str = "mobile"
    style_dim: int = 512
    mapping_layers: int = 8
    base_resolution: int = 4
    channels: dict = field(default_factory=dict)
    demod_mode: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not _is_pow2(self.target_resolution) or not _is_pow2(self.base_resolution):
            raise ValueError("resolutions must be powers of two")
        if self.target_resolution < 2 * self.base_resolution:
            raise ValueError("target_resolution must be at least twice base_resolution")
        if self.style_dim < 1 or self.mapping_layers < 0:
            raise ValueError("style_dim must be >= 1 and mapping_layers >= 0")
        default_demod = "trainable" if self.variant == "mobile" else "style"
        object.__setattr__(self, "demod_mode", self.demod_mode or default_demod)
        if self.variant == "dense_baseline" and self.demod_mode != "style":
            raise ValueError("the dense baseline only supports style demodulation")
        if self.demod_mode not in ("style", "trainable", "fused"):
            raise ValueError(f"unknown demod_mode {self.demod_mode!r}")

        defaults = MOBILE_CHANNELS if self.variant == "mobile" else STYLEGAN2_F_CHANNELS
        chans = {int(k): int(v) for k, v in self.channels.items()}
        for r in self.feature_resolutions:
            if r not in chans:
                if r not in defaults:
                    raise ValueError(f"no channel width given for resolution {r}")
                chans[r] = defaults[r]
        chans = {r: chans[r] for r in self.feature_resolutions}
        for r, c in chans.items():
            if c < 1:
                raise ValueError(f"channel width at {r} must be positive")
            if self.variant == "mobile" and c % 4:
                raise ValueError(f"mobile widths must be divisible by 4 (IDWT regroups channels), "
                                 f"got {c} at resolution {r}")
        object.__setattr__(self, "channels", chans)

    @property
    def feature_resolutions(self) -> list:
        """Resolutions of the synthesis trunk, one per block, coarse to fine."""
        top = self.target_resolution // 2 if self.variant == "mobile" else self.target_resolution
        n = int(math.log2(top // self.base_resolution)) + 1
        return [self.base_resolution * 2 ** i for i in range(n)]

    @property
    def num_blocks(self) -> int:
        return len(self.feature_resolutions)

    @property
    def image_resolutions(self) -> list:
        """Resolution of each block's image prediction."""
        if self.variant == "mobile":
            return [2 * r for r in self.feature_resolutions]
        return list(self.feature_resolutions)

    def structure(self) -> dict:
        """Everything except the demodulation mode, which graph passes rewrite."""
        d = self.to_dict()
        d.pop("demod_mode")
        return d

    def replace(self, **changes) -> "GeneratorConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = {str(k): v for k, v in self.channels.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {"target_resolution", "variant", "style_dim", "mapping_layers",
                 "base_resolution", "channels", "demod_mode"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> GeneratorConfig:
    with open(path) as f:
        return GeneratorConfig.from_dict(json.load(f))


def save_config(config: GeneratorConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def stylegan2_f(resolution: int = 1024, style_dim: int = 512) -> GeneratorConfig:
    return GeneratorConfig(target_resolution=resolution, variant="dense_baseline", style_dim=style_dim)


def mobile(resolution: int = 1024, style_dim: int = 512, demod_mode: str = "trainable") -> GeneratorConfig:
    return GeneratorConfig(target_resolution=resolution, variant="mobile", style_dim=style_dim,
                           demod_mode=demod_mode)


def tiny_mobile(resolution: int = 64, style_dim: int = 32, width: int = 32,
                demod_mode: str = "trainable") -> GeneratorConfig:
    """Small mobile config for tests and quick experiments."""
    return GeneratorConfig(target_resolution=resolution, variant="mobile", style_dim=style_dim,
                           demod_mode=demod_mode, **_tiny_channels(resolution // 2, width))


def tiny_dense(resolution: int = 64, style_dim: int = 32, width: int = 32) -> GeneratorConfig:
    return GeneratorConfig(target_resolution=resolution, variant="dense_baseline",
                           style_dim=style_dim, **_tiny_channels(resolution, width))


def _tiny_channels(top: int, width: int) -> dict:
    chans, r, c = {}, 4, width
    while r <= top:
        chans[r] = c
        r *= 2
        if r >= 32:
            c = max(8, c // 2 // 4 * 4)
    return {"channels": chans}
