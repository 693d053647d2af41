"""Parameter and multiply-accumulate accounting for generator configs.

One MAC is one multiply(-accumulate); additions on their own are free, so
the IDWT upscale, nearest upsampling and skip additions cost nothing.
Counts are per generated image.

Per-layer conventions (``k`` kernel size, ``H x W`` output size):

==============  ==========================  ===========================
kind            params                      MACs
==============  ==========================  ===========================
dense           Cout*Cin*k^2 (+Cout bias)   Cout*Cin*k^2*H*W
depthwise       C*k^2                       C*k^2*H*W
pointwise       Cout*Cin (+Cout bias)       Cout*Cin*H*W
linear          Cout*Cin (+Cout bias)       Cout*Cin
modulation      0                           Cin*H*W
demodulation    0                           Cout*H*W
demod_coeffs    0                           Cout*Cin*k^2
compose         0                           Cout*Cin*k^2
noise           1 (strength)                H*W
idwt            0                           0
const           C*H*W                       0
vector          Cin (e.g. p_demod)          0
==============  ==========================  ===========================

The graph walk mirrors :class:`mobilestyle.synthesis.Generator` and is
checked against both the weight container size and the runtime op counter.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .config import GeneratorConfig


def count_layer(kind: str, cin: int, cout: int, k: int = 1, h_out: int = 1, w_out: int = 1,
                bias: bool = True) -> tuple:
    """(params, macs) of a single layer."""
    hw = h_out * w_out
    b = cout if bias else 0
    if kind == "dense":
        return cout * cin * k * k + b, cout * cin * k * k * hw
    if kind == "depthwise":
        return cin * k * k, cin * k * k * hw
    if kind == "pointwise":
        return cout * cin + b, cout * cin * hw
    if kind == "linear":
        return cout * cin + b, cout * cin
    if kind == "modulation":
        return 0, cin * hw
    if kind == "demodulation":
        return 0, cout * hw
    if kind in ("demod_coeffs", "compose"):
        return 0, cout * cin * k * k
    if kind == "noise":
        return 1, hw
    if kind == "idwt":
        return 0, 0
    if kind == "const":
        return cin * hw, 0
    if kind == "vector":
        return cin, 0
    raise ValueError(f"unknown layer kind {kind!r}")


@dataclass
class LayerCount:
    name: str
    params: int
    macs: int


@dataclass
class ComplexityReport:
    name: str
    per_layer: list = field(default_factory=list)
    include_mapping: bool = False
    count_modulation: bool = True

    @property
    def total_params(self) -> int:
        return sum(l.params for l in self.per_layer)

    @property
    def total_macs(self) -> int:
        return sum(l.macs for l in self.per_layer)

    def add(self, name, counts):
        params, macs = counts
        self.per_layer.append(LayerCount(name, params, macs))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "include_mapping": self.include_mapping,
            "count_modulation": self.count_modulation,
            "total_params": self.total_params,
            "total_macs": self.total_macs,
            "per_layer": [vars(l) for l in self.per_layer],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self, per_layer: bool = False) -> str:
        lines = []
        if per_layer:
            width = max([len(l.name) for l in self.per_layer] + [5])
            lines.append(f"{'layer':<{width}}  {'params':>12}  {'MACs':>16}")
            lines += [f"{l.name:<{width}}  {l.params:>12,}  {l.macs:>16,}" for l in self.per_layer]
            lines.append("")
        lines.append(_table_rows([self]))
        return "\n".join(lines)


@dataclass
class Comparison:
    a: ComplexityReport
    b: ComplexityReport

    @property
    def ratio_params(self) -> float:
        return self.a.total_params / self.b.total_params

    @property
    def ratio_macs(self) -> float:
        return self.a.total_macs / self.b.total_macs

    def to_dict(self) -> dict:
        return {"a": self.a.to_dict(), "b": self.b.to_dict(),
                "ratio_params": self.ratio_params, "ratio_macs": self.ratio_macs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        return (_table_rows([self.a, self.b]) +
                f"\nratio (first/second): params x{self.ratio_params:.2f}, MACs x{self.ratio_macs:.2f}")


def _table_rows(reports) -> str:
    width = max(len(r.name) for r in reports + [ComplexityReport("Network")])
    rows = [f"| {'Network':<{width}} | {'MParams':>8} | {'GMACs':>8} |"]
    rows.append("|" + "-" * (width + 2) + "|" + "-" * 10 + "|" + "-" * 10 + "|")
    for r in reports:
        rows.append(f"| {r.name:<{width}} | {r.total_params / 1e6:>8.2f} | {r.total_macs / 1e9:>8.2f} |")
    return "\n".join(rows)


def _mod_overheads(rep, prefix, cin, cout, k, hw, style_dim, demod_mode, count_modulation, composed):
    rep.add(f"{prefix}.affine", count_layer("linear", style_dim, cin))
    if count_modulation:
        rep.add(f"{prefix}.modulate", count_layer("modulation", cin, cout, h_out=hw, w_out=1))
    if demod_mode in ("style", "trainable"):
        if count_modulation:
            if composed:
                rep.add(f"{prefix}.compose", count_layer("compose", cin, cout, k))
            rep.add(f"{prefix}.demod_coeffs", count_layer("demod_coeffs", cin, cout, k))
            rep.add(f"{prefix}.demodulate", count_layer("demodulation", cin, cout, h_out=hw, w_out=1))
        if demod_mode == "trainable":
            rep.add(f"{prefix}.p_demod", count_layer("vector", cin, 0))


def _ds_conv(rep, prefix, cin, cout, r, style_dim, demod_mode, count_modulation, noise=True):
    hw = r * r
    _mod_overheads(rep, prefix, cin, cout, 3, hw, style_dim, demod_mode, count_modulation, composed=True)
    rep.add(f"{prefix}.dw", count_layer("depthwise", cin, cin, 3, r, r))
    rep.add(f"{prefix}.pw", count_layer("pointwise", cin, cout, 1, r, r))
    if noise:
        rep.add(f"{prefix}.noise", count_layer("noise", cout, cout, 1, r, r))


def _dense_conv(rep, prefix, cin, cout, k, r, style_dim, demodulate, count_modulation, noise=True):
    _mod_overheads(rep, prefix, cin, cout, k, r * r, style_dim, "style" if demodulate else "none",
                   count_modulation, composed=False)
    rep.add(f"{prefix}.conv", count_layer("dense", cin, cout, k, r, r))
    if noise:
        rep.add(f"{prefix}.noise", count_layer("noise", cout, cout, 1, r, r))


def count_network(config: GeneratorConfig, include_mapping: bool = False,
                  count_modulation: bool = True, name: str | None = None) -> ComplexityReport:
    """Walk the generator graph for ``config`` and tally every layer.

    ``include_mapping`` adds the mapping MLP (off by default: the headline
    StyleGAN2 figure of 28.27M parameters matches the synthesis network
    alone). ``count_modulation`` toggles the modulation/demodulation
    multiplies; parameters of the style affines are always counted.
    """
    name = name or f"{config.variant}@{config.target_resolution}"
    rep = ComplexityReport(name, include_mapping=include_mapping, count_modulation=count_modulation)
    sd = config.style_dim
    if include_mapping:
        for i in range(config.mapping_layers):
            rep.add(f"mapping.{i}", count_layer("linear", sd, sd))
    res = config.feature_resolutions
    ch = config.channels
    rep.add("synthesis.const", count_layer("const", ch[res[0]], 0, 1, res[0], res[0]))
    mode = config.demod_mode
    for b, r in enumerate(res):
        p = f"synthesis.b{r}"
        if config.variant == "mobile":
            if b:
                rep.add(f"{p}.idwt", count_layer("idwt", ch[res[b - 1]], ch[res[b - 1]] // 4, 1, r, r))
                _ds_conv(rep, f"{p}.conv_post_idwt", ch[res[b - 1]] // 4, ch[r], r, sd, mode, count_modulation)
            _ds_conv(rep, f"{p}.conv_main", ch[r], ch[r], r, sd, mode, count_modulation)
            _ds_conv(rep, f"{p}.head", ch[r], 12, r, sd, "none", count_modulation, noise=False)
        else:
            if b:
                _dense_conv(rep, f"{p}.conv0", ch[res[b - 1]], ch[r], 3, r, sd, True, count_modulation)
            _dense_conv(rep, f"{p}.conv1", ch[r], ch[r], 3, r, sd, True, count_modulation)
            _dense_conv(rep, f"{p}.torgb", ch[r], 3, 1, r, sd, False, count_modulation, noise=False)
    if config.variant == "mobile":
        rep.add("output.idwt", count_layer("idwt", 12, 3, 1, 2 * res[-1], 2 * res[-1]))
    return rep


def compare(config_a: GeneratorConfig, config_b: GeneratorConfig, **flags) -> Comparison:
    """Side-by-side totals; ratios are a / b."""
    return Comparison(count_network(config_a, **flags), count_network(config_b, **flags))
