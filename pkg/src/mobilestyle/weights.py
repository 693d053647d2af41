"""Weight container: named float64 parameters plus the config they belong to.

On-disk layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"MSGW"
    4       4     u32 format version (currently 1)
    8       8     u64 manifest length M in bytes
    16      M     manifest, UTF-8 JSON (see below)
    16+M    B     blob: parameters back to back as little-endian float64

The manifest is a JSON object::

    {"format_version": 1,
     "config": {...},                          # GeneratorConfig.to_dict()
     "wavelet_channel_order": ["LL", "HL", "LH", "HH"],
     "blob_length": B,
     "entries": [{"name": ..., "shape": [...], "offset": ..., "nbytes": ...}, ...]}

Entry offsets are relative to the start of the blob and entries are stored
in graph order.
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .config import GeneratorConfig
from .tensor import make_rng
from .wavelet import SUBBANDS

MAGIC = b"MSGW"
FORMAT_VERSION = 1
_BLOB_DTYPE = np.dtype("<f8")


class WeightContainer:
    """Ordered mapping of parameter name -> float64 array, tied to a config."""

    def __init__(self, config: GeneratorConfig, params: dict):
        self.config = config
        self.params = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in params.items()}

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    @property
    def num_scalars(self) -> int:
        return sum(v.size for v in self.params.values())

    def copy(self, config: GeneratorConfig | None = None) -> "WeightContainer":
        return WeightContainer(config or self.config, {k: v.copy() for k, v in self.params.items()})

    def equals(self, other: "WeightContainer") -> bool:
        """Bitwise equality of config and every parameter."""
        if self.config != other.config or list(self.params) != list(other.params):
            return False
        return all(a.shape == b.shape and a.tobytes() == b.tobytes()
                   for a, b in zip(self.params.values(), other.params.values()))

    # serialization -------------------------------------------------------

    def to_bytes(self) -> bytes:
        entries, chunks, offset = [], [], 0
        for name, arr in self.params.items():
            raw = arr.astype(_BLOB_DTYPE, copy=False).tobytes()
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            chunks.append(raw)
            offset += len(raw)
        manifest = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "wavelet_channel_order": list(SUBBANDS),
            "blob_length": offset,
            "entries": entries,
        }
        header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightContainer":
        if len(data) < 16 or data[:4] != MAGIC:
            raise ValueError("not a weight container (bad magic)")
        version, mlen = struct.unpack_from("<IQ", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported container version {version}")
        if 16 + mlen > len(data):
            raise ValueError("truncated container: manifest runs past end of file")
        try:
            manifest = json.loads(data[16:16 + mlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValueError(f"corrupt manifest: {e}") from None
        if manifest.get("wavelet_channel_order") != list(SUBBANDS):
            raise ValueError(f"unsupported wavelet channel order {manifest.get('wavelet_channel_order')}")
        blob = data[16 + mlen:]
        expected = sum(e["nbytes"] for e in manifest["entries"])
        if len(blob) != manifest["blob_length"] or len(blob) != expected:
            raise ValueError(f"blob length {len(blob)} does not match manifest "
                             f"({manifest['blob_length']} declared, {expected} from entries)")
        params, seen = {}, set()
        for e in manifest["entries"]:
            name, shape = e["name"], tuple(e["shape"])
            if name in seen:
                raise ValueError(f"duplicate parameter {name!r} in manifest")
            seen.add(name)
            if e["nbytes"] != math.prod(shape) * _BLOB_DTYPE.itemsize:
                raise ValueError(f"entry {name!r}: nbytes does not match shape {shape}")
            if e["offset"] < 0 or e["offset"] + e["nbytes"] > len(blob):
                raise ValueError(f"entry {name!r} points outside the blob")
            arr = np.frombuffer(blob, dtype=_BLOB_DTYPE, count=math.prod(shape), offset=e["offset"])
            params[name] = arr.reshape(shape).astype(np.float64)
        return cls(GeneratorConfig.from_dict(manifest["config"]), params)


def save_weights(container: WeightContainer, path) -> None:
    Path(path).write_bytes(container.to_bytes())


def load_weights(path) -> WeightContainer:
    return WeightContainer.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Graph parameter layout
# ---------------------------------------------------------------------------

def _ds_conv_layout(prefix, cin, cout, style_dim, demod_mode, noise=True):
    out = [
        (f"{prefix}.affine.weight", (cin, style_dim), "fan_in"),
        (f"{prefix}.affine.bias", (cin,), "one"),
        (f"{prefix}.dw", (cin, 1, 3, 3), "fan_in"),
        (f"{prefix}.pw", (cout, cin, 1, 1), "fan_in"),
        (f"{prefix}.bias", (cout,), "zero"),
    ]
    if demod_mode == "trainable":
        out.append((f"{prefix}.p_demod", (cin,), "one"))
    if noise:
        out.append((f"{prefix}.noise_strength", (1,), "noise"))
    return out


def _dense_conv_layout(prefix, cin, cout, k, style_dim, noise=True):
    out = [
        (f"{prefix}.affine.weight", (cin, style_dim), "fan_in"),
        (f"{prefix}.affine.bias", (cin,), "one"),
        (f"{prefix}.weight", (cout, cin, k, k), "fan_in"),
        (f"{prefix}.bias", (cout,), "zero"),
    ]
    if noise:
        out.append((f"{prefix}.noise_strength", (1,), "noise"))
    return out


def parameter_layout(config: GeneratorConfig) -> list:
    """(name, shape, init-kind) for every parameter of the graph, in graph order."""
    sd = config.style_dim
    layout = []
    for i in range(config.mapping_layers):
        layout.append((f"mapping.{i}.weight", (sd, sd), "fan_in"))
        layout.append((f"mapping.{i}.bias", (sd,), "zero"))
    res = config.feature_resolutions
    ch = config.channels
    layout.append(("synthesis.const", (1, ch[res[0]], res[0], res[0]), "normal"))
    for b, r in enumerate(res):
        p = f"synthesis.b{r}"
        if config.variant == "mobile":
            if b > 0:
                layout += _ds_conv_layout(f"{p}.conv_post_idwt", ch[res[b - 1]] // 4, ch[r], sd,
                                          config.demod_mode)
            layout += _ds_conv_layout(f"{p}.conv_main", ch[r], ch[r], sd, config.demod_mode)
            layout += _ds_conv_layout(f"{p}.head", ch[r], 12, sd, "none", noise=False)
        else:
            if b > 0:
                layout += _dense_conv_layout(f"{p}.conv0", ch[res[b - 1]], ch[r], 3, sd)
            layout += _dense_conv_layout(f"{p}.conv1", ch[r], ch[r], 3, sd)
            layout += _dense_conv_layout(f"{p}.torgb", ch[r], 3, 1, sd, noise=False)
    return layout


def activated_layers(config: GeneratorConfig) -> list:
    """Prefixes of layers followed by a leaky-relu (where a gain node may sit)."""
    names = [f"mapping.{i}" for i in range(config.mapping_layers)]
    for b, r in enumerate(config.feature_resolutions):
        p = f"synthesis.b{r}"
        if config.variant == "mobile":
            names += ([f"{p}.conv_post_idwt"] if b else []) + [f"{p}.conv_main"]
        else:
            names += ([f"{p}.conv0"] if b else []) + [f"{p}.conv1"]
    return names


NOISE_STRENGTH_INIT = 0.1


def init_random(config: GeneratorConfig, seed: int = 0, act_gain: float | None = None) -> WeightContainer:
    """Random weights for ``config``.

    Conv/linear weights ~ N(0, 1/fan_in) (std 1/sqrt(fan_in)), biases 0,
    style-affine biases 1, p_demod 1, noise strengths 0.1, constant input
    ~ N(0, 1). Equalized-learning-rate scaling is considered already folded
    in. Passing ``act_gain`` (e.g. sqrt(2)) additionally emits an unfolded
    post-activation gain node on every activated layer, the way a graph
    looks before export-time folding.
    """
    if config.demod_mode == "fused":
        raise ValueError("cannot initialise a fused graph directly; fuse a trainable one")
    rng = make_rng(seed)
    params = {}
    for name, shape, kind in parameter_layout(config):
        if kind == "fan_in":
            fan_in = math.prod(shape[1:])
            params[name] = rng.standard_normal(shape) / math.sqrt(fan_in)
        elif kind == "normal":
            params[name] = rng.standard_normal(shape)
        elif kind == "one":
            params[name] = np.ones(shape)
        elif kind == "noise":
            params[name] = np.full(shape, NOISE_STRENGTH_INIT)
        else:
            params[name] = np.zeros(shape)
    if act_gain is not None:
        for prefix in activated_layers(config):
            params[f"{prefix}.act_gain"] = np.array([float(act_gain)])
    return WeightContainer(config, params)
