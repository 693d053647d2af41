"""Inference-time rewrites of a weight container.

``fuse_demodulation``
    With trainable demodulation the coefficients depend only on weights,
    so they are computed once and multiplied into the rows of the pointwise
    weights; ``p_demod`` disappears from the graph. Style demodulation
    depends on the input and is rejected.

``fold_constants``
    Merges leftover constant nodes: a post-activation gain ``g > 0`` passes
    through leaky-relu (``g*lrelu(y) == lrelu(g*y)``) and lands in the
    preceding layer's weights, bias and noise strength; per-channel output
    scales go into the pointwise rows. Where the preceding layer still
    recomputes demodulation from its weights, folding into the weights would
    change that computation, so chained scales are only collapsed into one.

``verify_equivalence``
    Runs two graphs on the same seeded (z, noise) draws and measures how far
    their images drift apart.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .modconv import compute_demod_trainable
from .synthesis import Generator
from .tensor import count_ops
from .weights import WeightContainer, activated_layers

DEFAULT_TOL = 1e-9
DEFAULT_SAMPLES = 16


class NotFoldableError(ValueError):
    pass


@dataclass
class OptimizationReport:
    passes_applied: list = field(default_factory=list)
    params_folded: int = 0
    nodes_removed: int = 0
    max_abs_divergence: float | None = None
    max_rel_divergence: float | None = None
    verified_samples: int = 0
    tol: float | None = None
    passed: bool | None = None
    macs_before: int | None = None
    macs_after: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _conv_prefixes(weights: WeightContainer) -> list:
    """Synthesis layers whose pointwise weights may receive folded constants."""
    return [p for p in activated_layers(weights.config) if p.startswith("synthesis.")]


def fuse_demodulation(weights: WeightContainer, report: OptimizationReport | None = None) -> WeightContainer:
    """Fold trainable demodulation into the pointwise weights.

    Already-fused containers come back unchanged, so the pass is idempotent.
    """
    cfg = weights.config
    if cfg.demod_mode == "style":
        raise NotFoldableError("demodulation depends on the style in this graph "
                               "(demod_mode=style); it is not foldable")
    if cfg.demod_mode == "fused":
        out = weights.copy()
        if report is not None:
            report.passes_applied.append("fuse_demodulation")
        return out
    nodes_before = len(Generator(weights).runtime_nodes())
    params = dict(weights.params)
    folded = 0
    for p in _conv_prefixes(weights):
        demod = compute_demod_trainable(params[f"{p}.dw"], params[f"{p}.pw"], params[f"{p}.p_demod"])
        params[f"{p}.pw"] = params[f"{p}.pw"] * demod[:, None, None, None]
        del params[f"{p}.p_demod"]
        folded += demod.size
    out = WeightContainer(cfg.replace(demod_mode="fused"), params)
    if report is not None:
        report.passes_applied.append("fuse_demodulation")
        report.params_folded += folded
        report.nodes_removed += nodes_before - len(Generator(out).runtime_nodes())
    return out


def fold_constants(weights: WeightContainer, report: OptimizationReport | None = None) -> WeightContainer:
    """Merge gain and scale nodes into neighbouring weights where exact."""
    cfg = weights.config
    params = dict(weights.params)
    folded = 0

    for i in range(cfg.mapping_layers):
        key = f"mapping.{i}.act_gain"
        g = float(params[key][0]) if key in params else None
        if g is not None and g > 0:
            params[f"mapping.{i}.weight"] = params[f"mapping.{i}.weight"] * g
            params[f"mapping.{i}.bias"] = params[f"mapping.{i}.bias"] * g
            del params[key]
            folded += 1

    # demod recomputed from weights at runtime -> weights cannot absorb scales
    weights_are_final = cfg.variant == "mobile" and cfg.demod_mode == "fused"
    for p in _conv_prefixes(weights):
        gain_key, scale_key = f"{p}.act_gain", f"{p}.out_scale"
        g = float(params[gain_key][0]) if gain_key in params else None
        if g is not None and g > 0 and (weights_are_final or scale_key in params):
            # g * lrelu(scale*y + b + ns*noise) == lrelu(g*scale*y + g*b + g*ns*noise)
            if scale_key in params:
                params[scale_key] = params[scale_key] * g
            else:
                params[scale_key] = np.full(params[f"{p}.bias"].shape, g)
            params[f"{p}.bias"] = params[f"{p}.bias"] * g
            if f"{p}.noise_strength" in params:
                params[f"{p}.noise_strength"] = params[f"{p}.noise_strength"] * g
            del params[gain_key]
            folded += 1
        if weights_are_final and scale_key in params:
            params[f"{p}.pw"] = params[f"{p}.pw"] * params[scale_key][:, None, None, None]
            folded += params[scale_key].size
            del params[scale_key]

    out = WeightContainer(cfg, params) if folded else weights.copy()
    if report is not None:
        report.passes_applied.append("fold_constants")
        report.params_folded += folded
        report.nodes_removed += (len(Generator(weights).runtime_nodes()) -
                                 len(Generator(out).runtime_nodes()))
    return out


def _as_generator(g) -> Generator:
    return g if isinstance(g, Generator) else Generator(g)


def verify_equivalence(g_a, g_b, n_samples: int = DEFAULT_SAMPLES, tol: float = DEFAULT_TOL,
                       seed: int = 0, report: OptimizationReport | None = None) -> OptimizationReport:
    """Compare final images of two graphs over ``n_samples`` shared seeded inputs."""
    a, b = _as_generator(g_a), _as_generator(g_b)
    if a.config.structure() != b.config.structure():
        raise ValueError(f"graphs have different structure: {a.config.structure()} vs {b.config.structure()}")
    report = report if report is not None else OptimizationReport()
    max_abs, max_rel = 0.0, 0.0
    for i in range(n_samples):
        z, noises = a.sample_inputs(seed + i)
        img_a = a(z, noises)
        img_b = b(z, noises)
        diff = float(np.max(np.abs(img_a - img_b)))
        scale = float(np.max(np.abs(img_a)))
        max_abs = max(max_abs, diff)
        max_rel = max(max_rel, diff / scale if scale > 0 else (0.0 if diff == 0 else np.inf))
    report.max_abs_divergence = max_abs
    report.max_rel_divergence = max_rel
    report.verified_samples = n_samples
    report.tol = tol
    report.passed = bool(max_abs <= tol)
    return report


def runtime_macs(weights: WeightContainer, seed: int = 0) -> int:
    """MACs actually executed by one single-image forward pass."""
    g = Generator(weights)
    z, noises = g.sample_inputs(seed)
    with count_ops() as counter:
        g(z, noises)
    return counter.total


def optimize(weights: WeightContainer, n_samples: int = DEFAULT_SAMPLES, tol: float = DEFAULT_TOL,
             seed: int = 0):
    """Fuse demodulation, fold constants, verify. Returns (container, report)."""
    report = OptimizationReport()
    out = fold_constants(fuse_demodulation(weights, report), report)
    verify_equivalence(weights, out, n_samples, tol, seed, report)
    report.macs_before = runtime_macs(weights, seed)
    report.macs_after = runtime_macs(out, seed)
    return out, report
