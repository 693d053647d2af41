"""Command-line front end: ``mobilestyle <command> ...``.

Machine-readable output (reports, tables) goes to stdout; logs and
diagnostics go to stderr. Exit status is 0 only on full success.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .complexity import compare, count_network
from .config import load_config
from .optimize import DEFAULT_SAMPLES, DEFAULT_TOL, NotFoldableError, optimize
from .png import encode_png, to_uint8
from .synthesis import Generator
from .verify import SUITES, run_suites
from .weights import init_random, load_weights, save_weights

log = logging.getLogger("mobilestyle")


class CLIError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    argv: list
    config_path: str | None = None
    weights_path: str | None = None
    seed: int | None = None
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    tool_version: str = __version__
    extra: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        log.info("manifest written to %s", path)


def machine_id() -> str:
    return f"{platform.node()} / {platform.processor() or platform.machine()} / {platform.system()}"


def _load(path):
    if path is None:
        raise CLIError("--weights is required")
    try:
        return load_weights(path)
    except FileNotFoundError:
        raise CLIError(f"weight container not found: {path}") from None
    except (ValueError, KeyError, TypeError) as e:
        raise CLIError(f"invalid weight container {path}: {e}") from None


# ---------------------------------------------------------------------------
# init
# ---------------------------------------------------------------------------

def cmd_init(args) -> int:
    cfg = load_config(args.config)
    w = init_random(cfg, args.seed, act_gain=2 ** 0.5 if args.unfolded_gains else None)
    save_weights(w, args.out)
    manifest = RunManifest("init", args.argv, config_path=args.config, weights_path=args.out,
                           seed=args.seed, outputs=[args.out],
                           extra={"num_parameters": w.num_scalars})
    manifest.write(args.manifest or f"{args.out}.manifest.json")
    return 0


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

_worker_gen = None


def _worker_init(weights_path):
    global _worker_gen
    _worker_gen = Generator(load_weights(weights_path))


def _render(seed, pyramid, gen=None):
    gen = gen or _worker_gen
    with threadpool_limits(1):
        z, noises = gen.sample_inputs(seed)
        style = gen.mapping_forward(z)
        if pyramid:
            pyr = gen.synthesis_forward(style, noises, mode="pyramid")
            final = pyr.levels[-1].pixels
            levels = [(lvl.resolution, encode_png(to_uint8(lvl.pixels))) for lvl in pyr.levels]
        else:
            final = gen.synthesis_forward(style, noises)
            levels = []
    return seed, encode_png(to_uint8(final)), levels


def cmd_generate(args) -> int:
    weights = _load(args.weights)
    if args.config:
        cfg = load_config(args.config)
        if cfg != weights.config:
            raise CLIError(f"config {args.config} does not match the config stored in {args.weights}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = list(range(args.seed, args.seed + args.count))
    t0 = time.perf_counter()
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers, initializer=_worker_init, initargs=(args.weights,)) as ex:
            results = list(ex.map(_render, seeds, [args.pyramid] * len(seeds)))
    else:
        gen = Generator(weights)
        results = [_render(s, args.pyramid, gen) for s in seeds]
    elapsed = time.perf_counter() - t0
    outputs = []
    for seed, png, levels in results:
        path = out_dir / f"seed{seed:06d}.png"
        path.write_bytes(png)
        outputs.append(str(path))
        for res, lvl_png in levels:
            lpath = out_dir / f"seed{seed:06d}_level{res}.png"
            lpath.write_bytes(lvl_png)
            outputs.append(str(lpath))
    manifest = RunManifest("generate", args.argv, config_path=args.config, weights_path=args.weights,
                           seed=args.seed, outputs=outputs,
                           timings={"total_s": elapsed, "per_image_s": elapsed / len(seeds)},
                           extra={"count": args.count, "workers": args.workers, "pyramid": args.pyramid})
    manifest.write(args.manifest or out_dir / "manifest.json")
    for p in outputs:
        print(p)
    return 0


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

def cmd_optimize(args) -> int:
    weights = _load(args.weights_in)
    t0 = time.perf_counter()
    try:
        out, report = optimize(weights, n_samples=args.verify_samples, tol=args.tol, seed=args.seed)
    except NotFoldableError as e:
        raise CLIError(f"not foldable: {e}") from None
    elapsed = time.perf_counter() - t0
    print(report.to_json())
    if not report.passed:
        raise CLIError(f"verification failed: max divergence {report.max_abs_divergence:.3e} > tol {args.tol:g}; "
                       f"refusing to write {args.weights_out}")
    save_weights(out, args.weights_out)
    manifest = RunManifest("optimize", args.argv, weights_path=args.weights_in, seed=args.seed,
                           outputs=[args.weights_out], timings={"optimize_s": elapsed},
                           extra={"report": report.to_dict()})
    manifest.write(args.manifest or f"{args.weights_out}.manifest.json")
    return 0


# ---------------------------------------------------------------------------
# count
# ---------------------------------------------------------------------------

def cmd_count(args) -> int:
    flags = {"include_mapping": args.include_mapping, "count_modulation": not args.no_modulation}
    cfg = load_config(args.config)
    if args.compare:
        result = compare(cfg, load_config(args.compare), **flags)
        text = result.to_json() if args.json else result.table()
    else:
        result = count_network(cfg, **flags)
        text = result.to_json() if args.json else result.table(per_layer=args.per_layer)
    print(text)
    if args.manifest:
        RunManifest("count", args.argv, config_path=args.config, extra={"report": result.to_dict()}
                    ).write(args.manifest)
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def bench_generators(gens: dict, iters: int, warmup: int = 2, seed: int = 0) -> dict:
    """Median single-image wall time per generator; runs are interleaved."""
    samples = {name: [] for name in gens}
    inputs = {name: g.sample_inputs(seed) for name, g in gens.items()}
    for i in range(warmup + iters):
        for name, g in gens.items():
            z, noises = inputs[name]
            t0 = time.perf_counter()
            g(z, noises)
            dt = time.perf_counter() - t0
            if i >= warmup:
                samples[name].append(dt)
    return {name: {"median_s": statistics.median(v), "min_s": min(v), "iters": len(v)}
            for name, v in samples.items()}


def cmd_bench(args) -> int:
    weights = _load(args.weights)
    gens = {"unfused": Generator(weights)}
    if args.fused_vs_unfused:
        try:
            fused, _ = optimize(weights, n_samples=2)
        except NotFoldableError as e:
            raise CLIError(f"not foldable: {e}") from None
        gens["fused"] = Generator(fused)
    with threadpool_limits(args.threads):
        results = bench_generators(gens, args.iters, warmup=args.warmup)
    mid = machine_id()
    print(f"| Network | Engine | Time (sec.) |  # {mid}, {args.threads} thread(s)")
    for name, r in results.items():
        print(f"| {weights.config.variant}@{weights.config.target_resolution} | numpy ({name}) "
              f"| {r['median_s']:.4f} |")
    extra = {"machine": mid, "threads": args.threads}
    if "fused" in results:
        extra["speedup"] = results["unfused"]["median_s"] / results["fused"]["median_s"]
        print(f"speedup fused vs unfused: x{extra['speedup']:.3f}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    RunManifest("bench", args.argv, weights_path=args.weights, timings=results, extra=extra
                ).write(args.manifest or out / "bench.manifest.json")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    weights = _load(args.weights) if args.weights else None
    fused = _load(args.fused) if args.fused else None
    if fused is not None and weights is None:
        raise CLIError("--fused needs --weights (the unfused original)")
    checks = run_suites(names, weights, fused)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if args.manifest:
        RunManifest("verify", args.argv, weights_path=args.weights,
                    extra={"checks": [asdict(c) for c in checks]}).write(args.manifest)
    return 1 if failed else 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobilestyle", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="write randomly initialised weights for a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--unfolded-gains", action="store_true",
                   help="emit sqrt(2) activation-gain nodes (as before export-time folding)")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("generate", help="render images to PNG")
    s.add_argument("--weights", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--pyramid", action="store_true", help="also write every head's reconstruction")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("optimize", help="fuse demodulation, fold constants, verify")
    s.add_argument("--weights-in", required=True)
    s.add_argument("--weights-out", required=True)
    s.add_argument("--verify-samples", type=int, default=DEFAULT_SAMPLES)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("count", help="parameter / MAC accounting")
    s.add_argument("--config", required=True)
    s.add_argument("--compare")
    s.add_argument("--json", action="store_true", help="machine-readable report")
    s.add_argument("--per-layer", action="store_true")
    s.add_argument("--include-mapping", action="store_true")
    s.add_argument("--no-modulation", action="store_true", help="do not count (de)modulation multiplies")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_count)

    s = sub.add_parser("bench", help="median single-image inference time")
    s.add_argument("--weights", required=True)
    s.add_argument("--iters", type=int, default=20)
    s.add_argument("--warmup", type=int, default=2)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--fused-vs-unfused", action="store_true")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("verify", help="run self-check suites")
    s.add_argument("--suite", choices=SUITES + ("all",), default="all")
    s.add_argument("--weights", help="unfused container for the fusion suite")
    s.add_argument("--fused", help="pre-fused container to check against --weights")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
