"""Command line interface.

Subcommands: gen (write the synthetic suite to disk), run (one target),
eval (whole suite with a metric table), viz (flow -> color PNG), bench
(kernel backend comparison).

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .core import DataError, InvariantError, UsageError
from .flowio import (
    encode_occlusion,
    flo_read,
    flo_write,
    flow_to_png,
    save_image,
    write_scene_dataset,
)
from .metrics import format_partitioned
from .pipeline import PipelineConfig, PipelineOutputs, evaluate_suite, run_pipeline
from .scenes import render, standard_suite, suite_scene


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of pipeline settings")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable; wins over --config)",
    )


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    pairs = {}
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        pairs[key.strip()] = value.strip()
    return cfg.with_overrides(pairs) if pairs else cfg.validate()


def _metrics_doc(out: PipelineOutputs) -> dict:
    doc: dict = {
        "report": out.report,
        "timings": {k: round(v, 6) for k, v in out.timings.items()},
        "config": out.config.to_dict(),
    }
    if out.metrics is not None:
        m = {}
        for key, value in out.metrics.items():
            if hasattr(value, "as_dict"):
                m[key] = value.as_dict()
            else:
                m[key] = value
        doc["metrics"] = m
    return doc


def cmd_gen(args) -> int:
    out_dir = Path(args.out)
    specs = standard_suite(args.seed)
    if args.scene:
        specs = [suite_scene(args.scene, args.seed)]
    for spec in specs:
        scene_dir = out_dir / spec.name
        write_scene_dataset(render(spec), scene_dir)
        print(f"wrote {scene_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    target = args.target
    if not Path(target).exists():
        # allow naming a suite scene directly
        names = [s.name for s in standard_suite(cfg.seed)]
        if args.target not in names:
            raise DataError(
                f"{args.target}: not an existing directory and not a suite scene "
                f"(scenes: {', '.join(names)})"
            )
        target = render(suite_scene(args.target, cfg.seed))
    out = run_pipeline(cfg, target)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    flo_write(out_dir / "flow0.flo", out.flow0)
    flo_write(out_dir / "refined.flo", out.refined)
    save_image(out_dir / "occlusion.png", encode_occlusion(out.loopback.occlusion))
    save_image(out_dir / "occ_in.png", encode_occlusion(out.occ_in_flags.astype(np.uint8)))
    save_image(out_dir / "flow0_viz.png", flow_to_png(out.flow0))
    save_image(out_dir / "refined_viz.png", flow_to_png(out.refined))
    (out_dir / "metrics.json").write_text(json.dumps(_metrics_doc(out), indent=2) + "\n")
    print(f"wrote {out_dir}")
    if out.metrics is not None and "refined" in out.metrics:
        print(format_partitioned(out.metrics["refined"], title="refined"))
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    t0 = time.perf_counter()
    res = evaluate_suite(cfg, seed=args.seed, scene_names=args.scene or None)
    wall = time.perf_counter() - t0
    doc: dict = {"scenes": {}, "pooled_occlusion": res["pooled_occlusion"],
                 "total_global_matches": res["total_global_matches"],
                 "wall_seconds": round(wall, 3)}
    for name, out in res["scenes"].items():
        doc["scenes"][name] = _metrics_doc(out)
        m = out.metrics
        print(f"== {name} (global matches: {out.report['global_match_count']}) ==")
        print(format_partitioned(m["flow0"], title="flow0"))
        print(format_partitioned(m["refined"], title="refined"))
        occ = m["occlusion"]
        print(f"occlusion  P={_fmt(occ['precision'])} R={_fmt(occ['recall'])} F1={_fmt(occ['f1'])}")
        print()
    pooled = res["pooled_occlusion"]
    print(f"pooled occlusion: P={_fmt(pooled['precision'])} R={_fmt(pooled['recall'])} "
          f"F1={_fmt(pooled['f1'])} (tp={pooled['tp']} fp={pooled['fp']} fn={pooled['fn']})")
    print(f"total global matches: {res['total_global_matches']}")
    print(f"wall time: {wall:.2f}s")
    if args.json:
        Path(args.json).write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {args.json}")
    return 0


def _fmt(v) -> str:
    return "undefined" if v is None else f"{v:.4f}"


def cmd_viz(args) -> int:
    flow = flo_read(args.flow)
    save_image(args.out, flow_to_png(flow, max_norm=args.max_norm))
    print(f"wrote {args.out}")
    return 0


def cmd_bench(args) -> int:
    from .kernels import active_backend, get_backend

    rng = np.random.default_rng(0)
    n = args.size * args.size
    d = 64
    feats0 = rng.standard_normal((n, d)).astype(np.float32)
    feats1 = rng.standard_normal((n, d)).astype(np.float32)
    coords = rng.uniform(-1, args.size, size=(n, 2)).astype(np.float32)
    field = rng.standard_normal((args.size, args.size, 2)).astype(np.float32)
    pt = rng.integers(0, n, size=(args.size, args.size)).astype(np.int32)
    obj = rng.integers(0, 4, size=(args.size, args.size)).astype(np.int16)
    flow = rng.uniform(-2, 2, size=(args.size, args.size, 2)).astype(np.float32)
    dense0 = rng.standard_normal((args.size, args.size, d)).astype(np.float32)
    dense1 = rng.standard_normal((args.size, args.size, d)).astype(np.float32)
    qn = min(n, 4096)

    cases = {
        "bilinear_sample": lambda k: k.bilinear_sample(field, coords, True),
        "corr_indexed": lambda k: k.corr_indexed(
            pt.reshape(-1)[:qn], obj.reshape(-1)[:qn],
            pt.reshape(-1)[:qn], obj.reshape(-1)[:qn], 0.9, 0.435,
        ),
        "cost_volume_dense": lambda k: k.cost_volume_dense(dense0, dense1, flow, args.radius),
        "cost_volume_indexed": lambda k: k.cost_volume_indexed(
            pt, obj, pt, obj, flow, args.radius, 0.9, 0.435,
        ),
    }
    backends = ["numpy"]
    try:
        get_backend("native")
        backends.append("native")
    except (ImportError, UsageError):
        print("native backend unavailable; benchmarking numpy only")
    print(f"active backend: {active_backend()}  grid {args.size}x{args.size}, repeats {args.repeats}")
    results: dict[str, dict[str, float]] = {}
    for name, fn in cases.items():
        results[name] = {}
        for backend in backends:
            mod = get_backend(backend)
            fn(mod)  # warm up
            t0 = time.perf_counter()
            for _ in range(args.repeats):
                fn(mod)
            results[name][backend] = (time.perf_counter() - t0) / args.repeats
    width = max(len(k) for k in cases)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{b:>10}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for name in cases:
        row = f"{name:<{width}}  " + "  ".join(f"{results[name][b]*1e3:9.3f}ms" for b in backends)
        if len(backends) == 2:
            row += f"  {results[name]['numpy'] / results[name]['native']:7.2f}x"
        print(row)

    scene = render(suite_scene("rotor_plate", 0))
    out = run_pipeline(PipelineConfig(), scene)
    print(f"pipeline on rotor_plate: global matches = {out.report['global_match_count']} "
          f"(bidirectional-consistency baseline would need {out.report['bidirectional_equivalent_count']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loopflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render the synthetic suite to scene datasets")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--scene", help="only this suite scene")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gen)

    r = sub.add_parser("run", help="run the pipeline on one target")
    r.add_argument("target", help="scene dataset dir, Sintel-layout dir, or suite scene name")
    r.add_argument("--out", required=True, help="output directory")
    _add_config_flags(r)
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("eval", help="evaluate the synthetic suite")
    e.add_argument("--scene", action="append", help="restrict to these scenes (repeatable)")
    e.add_argument("--seed", type=int, default=None, help="suite seed (default: config seed)")
    e.add_argument("--json", help="also write machine-readable results here")
    _add_config_flags(e)
    e.set_defaults(fn=cmd_eval)

    v = sub.add_parser("viz", help="render a .flo file to a color PNG")
    v.add_argument("flow", help=".flo input")
    v.add_argument("--out", required=True, help=".png output")
    v.add_argument("--max-norm", type=float, default=None, help="saturation norm (default: field max)")
    v.set_defaults(fn=cmd_viz)

    b = sub.add_parser("bench", help="compare kernel backends")
    b.add_argument("--size", type=int, default=128, help="square grid side")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--radius", type=int, default=3)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses exit code 2 for usage problems; our contract says 1
        return 0 if e.code in (0, None) else 1
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (InvariantError, AssertionError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
