"""End-to-end pipeline and suite evaluation.

Stages: feature provider -> global matching (initial flow) -> loopback
(occlusion + references) -> rigid fits and distance field -> occ_in
classification -> strategy refinement -> metrics. Exactly two global
correlations are spent per run, counted and reported.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .core import (
    DataError,
    EST_OCC,
    GridDims,
    NOC,
    OCC_IN,
    Padding,
    UsageError,
    init_coord,
    sample_bilinear,
)
from .features import (
    FeatureBundle,
    IdentityConfig,
    census_features,
    dense_bundle,
    identity_features,
    patch_features,
    same_source_mask,
)
from .loopback import LoopbackResult, run_loopback
from .matching import (
    ARGMAX,
    MatchCounter,
    SOFTARGMAX,
    cost_volume,
    global_correlation,
    match_flow,
    matching_cost_report,
)
from .metrics import PartitionedAEPE, RegionScore, aepe_partitioned, endpoint_error, occlusion_prf
from .refine import (
    KEEP,
    LOCAL_CORRECT,
    NOC_MODES,
    RefineStrategy,
    RefinementInputs,
    STRATEGY_KINDS,
    SimilarityPair,
    classify_occ_in,
    refine,
    similarity_pair,
)
from .rotation import DISTANCE_MODES, LITERAL, RADIAL, UNIFORM_LAW, distance_field, fit_at_anchors
from .scenes import SceneRender, SceneSpec, render, standard_suite

IDENTITY = "identity"
CENSUS = "census"
PATCH = "patch"
PROVIDERS = (IDENTITY, CENSUS, PATCH)


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the pipeline, JSON-serializable, flat for overrides."""

    provider: str = IDENTITY
    point_weight: float = 0.9
    object_weight: float = 0.435
    inject_cover_ids: bool = False
    descriptor_window: int = 5
    match_mode: str = ARGMAX
    softargmax_temperature: float = 0.25
    temperature: float | None = None
    block_rows: int = 4096
    tau_occ: float = 0.5
    distance_mode: str = UNIFORM_LAW
    distance_variant: str = LITERAL
    fit_window_k: int = 5
    theta_min: float = 1e-3
    membership_threshold: float = 0.4
    strategy: str = "rigid_model"
    noc_handling: str = KEEP
    fit_tol: float = 0.5
    d_max: float = 64.0
    g_hi: float = 0.8
    l_lo: float = 0.3
    cost_radius: int = 3
    downsample: int = 1
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        if self.provider not in PROVIDERS:
            raise UsageError(f"unknown provider {self.provider!r}, expected one of {PROVIDERS}")
        if self.match_mode not in (ARGMAX, SOFTARGMAX):
            raise UsageError(f"unknown match mode {self.match_mode!r}")
        if self.distance_mode not in DISTANCE_MODES:
            raise UsageError(f"unknown distance mode {self.distance_mode!r}")
        if self.distance_variant not in (LITERAL, RADIAL):
            raise UsageError(f"unknown distance variant {self.distance_variant!r}")
        if self.strategy not in STRATEGY_KINDS:
            raise UsageError(f"unknown strategy {self.strategy!r}")
        if self.noc_handling not in NOC_MODES:
            raise UsageError(f"unknown noc handling {self.noc_handling!r}")
        if self.downsample < 1:
            raise UsageError(f"downsample must be >= 1, got {self.downsample}")
        if self.provider == IDENTITY and self.downsample != 1:
            raise UsageError("identity features are exact per pixel; downsample needs census/patch")
        return self

    def refine_strategy(self) -> RefineStrategy:
        return RefineStrategy(
            kind=self.strategy, noc=self.noc_handling, fit_tol=self.fit_tol, d_max=self.d_max
        ).validate()

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return PipelineConfig(**d).validate()

    @staticmethod
    def from_json(path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise DataError(f"missing config file {path}")
        except json.JSONDecodeError as e:
            raise DataError(f"invalid JSON in {path}: {e}")
        if not isinstance(doc, dict):
            raise DataError(f"config root must be an object, got {type(doc).__name__}")
        return PipelineConfig.from_dict(doc)

    def with_overrides(self, overrides: dict[str, str]) -> "PipelineConfig":
        """Apply key=value string overrides (CLI flags win over JSON)."""
        typed: dict[str, Any] = {}
        by_name = {f.name: f for f in fields(self)}
        for key, raw in overrides.items():
            if key not in by_name:
                raise UsageError(f"unknown config key {key!r}")
            typed[key] = _coerce(raw, getattr(self, key), key)
        return replace(self, **typed).validate()


def _coerce(raw: str, current: Any, key: str) -> Any:
    if isinstance(raw, (bool, int, float)) or raw is None:
        return raw
    text = str(raw).strip()
    if key == "temperature" and text.lower() in ("none", "auto"):
        return None
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            return int(text)
        except ValueError:
            raise UsageError(f"{key}: expected an integer, got {raw!r}")
    if isinstance(current, float) or current is None:
        try:
            return float(text)
        except ValueError:
            raise UsageError(f"{key}: expected a number, got {raw!r}")
    return text


@dataclass
class PipelineOutputs:
    flow0: np.ndarray
    refined: np.ndarray
    loopback: LoopbackResult
    occ_in_flags: np.ndarray
    sims: SimilarityPair
    distance: np.ndarray
    fits: dict
    report: dict
    timings: dict
    metrics: dict | None
    config: PipelineConfig


def _scene_bundle(scene: SceneRender, cfg: PipelineConfig) -> FeatureBundle:
    if cfg.provider == IDENTITY:
        return identity_features(
            scene,
            IdentityConfig(
                point_weight=cfg.point_weight,
                object_weight=cfg.object_weight,
                inject_cover_ids=cfg.inject_cover_ids,
            ),
        )
    return _image_bundle(scene.frame0, scene.frame1, cfg)


def _image_bundle(frame0: np.ndarray, frame1: np.ndarray, cfg: PipelineConfig) -> FeatureBundle:
    build = census_features if cfg.provider == CENSUS else patch_features
    return dense_bundle(build(frame0, cfg.descriptor_window), build(frame1, cfg.descriptor_window))


def average_pool(image: np.ndarray, factor: int) -> np.ndarray:
    """Average-pool a (H, W) image; trailing rows/cols that do not fill a
    cell are dropped."""
    if factor == 1:
        return image
    h, w = image.shape
    hh, ww = h // factor, w // factor
    if hh < 1 or ww < 1:
        raise UsageError(f"downsample {factor} exceeds image size {image.shape}")
    trimmed = image[: hh * factor, : ww * factor]
    return trimmed.reshape(hh, factor, ww, factor).mean(axis=(1, 3)).astype(np.float32)


def majority_pool_labels(labels: np.ndarray, factor: int) -> np.ndarray:
    """Label-majority pooling for masks; ties resolve to the smallest label."""
    if factor == 1:
        return labels
    h, w = labels.shape
    hh, ww = h // factor, w // factor
    cells = labels[: hh * factor, : ww * factor].reshape(hh, factor, ww, factor)
    cells = cells.transpose(0, 2, 1, 3).reshape(hh, ww, factor * factor)
    out = np.zeros((hh, ww), dtype=labels.dtype)
    best = np.full((hh, ww), -1, dtype=np.int64)
    for value in np.unique(cells):
        count = (cells == value).sum(axis=2)
        better = count > best
        out[better] = value
        best[better] = count[better]
    return out


def upsample_flow(flow: np.ndarray, dims: GridDims, factor: int) -> np.ndarray:
    """Bilinear flow upsampling: resample on the fine grid and scale the
    vectors by the factor."""
    if factor == 1:
        return flow
    coords = (init_coord(dims) + 0.5) / np.float32(factor) - 0.5
    up = sample_bilinear(flow, coords, Padding.CLAMP)
    return (up * np.float32(factor)).astype(np.float32)


def _upsample_nearest(field: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(field, factor, axis=0), factor, axis=1)


def run_bundle(
    bundle: FeatureBundle,
    cfg: PipelineConfig,
    gt_flow: np.ndarray | None = None,
    gt_labels: np.ndarray | None = None,
    gt_occlusion: np.ndarray | None = None,
) -> PipelineOutputs:
    """Drive the pipeline over prepared feature maps (full resolution)."""
    counter = MatchCounter()
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    corr = global_correlation(
        bundle.global0, bundle.global1, temperature=cfg.temperature, counter=counter,
        block_rows=cfg.block_rows,
    )
    flow0 = match_flow(corr, mode=cfg.match_mode, softargmax_temperature=cfg.softargmax_temperature)
    del corr
    timings["matching"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    loop = run_loopback(
        bundle.global0,
        bundle.global1,
        flow0,
        tau_occ=cfg.tau_occ,
        temperature=cfg.temperature,
        counter=counter,
        block_rows=cfg.block_rows,
    )
    timings["loopback"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sims = similarity_pair(bundle.local0, bundle.local1, bundle.global0, bundle.global1, flow0)
    flags = classify_occ_in(sims, loop.occlusion, g_hi=cfg.g_hi, l_lo=cfg.l_lo)
    timings["occ_in"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    occ = loop.occ_mask
    anchors = np.rint(loop.pairs[occ]).astype(np.int64).reshape(-1, 2)
    fits = {}
    if cfg.distance_mode == UNIFORM_LAW or cfg.strategy == "rigid_model":
        fits = fit_at_anchors(
            flow0,
            anchors,
            window_k=cfg.fit_window_k,
            theta_min=cfg.theta_min,
            exclude=occ,
            include_for=lambda a: same_source_mask(bundle.local0, a, cfg.membership_threshold),
        )
    distance = distance_field(
        loop.pairs,
        flow0,
        mode=cfg.distance_mode,
        window_k=cfg.fit_window_k,
        theta_min=cfg.theta_min,
        exclude=occ,
        variant=cfg.distance_variant,
        fits=fits if cfg.distance_mode == UNIFORM_LAW else None,
    )
    timings["distance"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    volume = None
    if cfg.noc_handling == LOCAL_CORRECT:
        volume = cost_volume(bundle.local0, bundle.local1, flow0, radius=cfg.cost_radius)
    inputs = RefinementInputs(
        flow0=flow0,
        loopback=loop,
        distances=distance,
        distance_mode=cfg.distance_mode,
        occ_in=flags,
        cost_volume=volume,
        sims=sims,
        fits=fits,
    )
    result = refine(inputs, cfg.refine_strategy())
    timings["refine"] = time.perf_counter() - t0

    metrics = _evaluate(flow0, result.flow, loop, flags, gt_flow, gt_labels, gt_occlusion)
    return PipelineOutputs(
        flow0=flow0,
        refined=result.flow,
        loopback=loop,
        occ_in_flags=flags,
        sims=sims,
        distance=distance,
        fits=fits,
        report=matching_cost_report(counter),
        timings=timings,
        metrics=metrics,
        config=cfg,
    )


def _evaluate(flow0, refined, loop, flags, gt_flow, gt_labels, gt_occlusion) -> dict | None:
    if gt_flow is None and gt_labels is None and gt_occlusion is None:
        return None
    out: dict[str, Any] = {}
    if gt_flow is not None and gt_labels is not None:
        out["flow0"] = aepe_partitioned(flow0, gt_flow, gt_labels)
        out["refined"] = aepe_partitioned(refined, gt_flow, gt_labels)
    elif gt_flow is not None:
        occ_bin = gt_occlusion if gt_occlusion is not None else None
        out["flow0"] = _binary_partition(flow0, gt_flow, occ_bin)
        out["refined"] = _binary_partition(refined, gt_flow, occ_bin)
    occ_ref = gt_labels if gt_labels is not None else gt_occlusion
    if occ_ref is not None:
        out["occlusion"] = occlusion_prf(loop.occlusion, occ_ref)
    if gt_labels is not None:
        out["occ_in_flags"] = occlusion_prf(flags, np.asarray(gt_labels) == OCC_IN)
        out["flags_on_loopback_noc"] = int((flags & ~loop.occ_mask).sum())
    return out


def _binary_partition(pred, gt_flow, occ_bin) -> PartitionedAEPE:
    """Partitioned AEPE when only a binary occlusion mask is available:
    occ_in/occ_out stay undefined."""
    err = endpoint_error(pred, gt_flow)
    all_score = RegionScore(aepe=float(err.mean()), count=int(err.size))
    empty = RegionScore(aepe=None, count=0)
    if occ_bin is None:
        return PartitionedAEPE(all=all_score, noc=empty, occ=empty, occ_in=empty, occ_out=empty)
    occ_arr = np.asarray(occ_bin)
    occ = occ_arr if occ_arr.dtype == bool else occ_arr == EST_OCC

    def region(mask):
        n = int(mask.sum())
        return RegionScore(aepe=float(err[mask].mean()) if n else None, count=n)

    return PartitionedAEPE(
        all=all_score, noc=region(~occ), occ=region(occ), occ_in=empty, occ_out=empty
    )


def run_on_scene(scene: SceneRender | SceneSpec, config: PipelineConfig | None = None) -> PipelineOutputs:
    cfg = (config or PipelineConfig()).validate()
    if isinstance(scene, SceneSpec):
        scene = render(scene)
    bundle = _scene_bundle(scene, cfg)
    return run_bundle(bundle, cfg, gt_flow=scene.flow, gt_labels=scene.labels)


def run_on_images(
    frame0: np.ndarray,
    frame1: np.ndarray,
    config: PipelineConfig | None = None,
    gt_flow: np.ndarray | None = None,
    gt_occlusion: np.ndarray | None = None,
) -> PipelineOutputs:
    """External frame pairs; identity features are unavailable here."""
    cfg = (config or PipelineConfig()).validate()
    if cfg.provider == IDENTITY:
        raise UsageError("identity features need a rendered scene; use census or patch")
    if frame0.shape != frame1.shape or np.asarray(frame0).ndim != 2:
        raise UsageError(f"expected matching (H, W) frames, got {frame0.shape} and {frame1.shape}")
    k = cfg.downsample
    f0 = average_pool(np.asarray(frame0, dtype=np.float32), k)
    f1 = average_pool(np.asarray(frame1, dtype=np.float32), k)
    bundle = _image_bundle(f0, f1, cfg)
    out = run_bundle(bundle, cfg)
    if k != 1:
        h, w = frame0.shape
        dims = GridDims(h, w)
        out.flow0 = upsample_flow(out.flow0, dims, k)[: h, : w]
        out.refined = upsample_flow(out.refined, dims, k)[: h, : w]
        occ_full = _upsample_nearest(out.loopback.occlusion, k)[:h, :w]
        out.loopback = replace(out.loopback, occlusion=occ_full)
    out.metrics = _evaluate(
        out.flow0, out.refined, out.loopback, None, gt_flow, None, gt_occlusion
    ) if (gt_flow is not None or gt_occlusion is not None) else out.metrics
    return out


def run_pipeline(config: PipelineConfig, target) -> PipelineOutputs:
    """Dispatch on the target: a SceneSpec/SceneRender, a scene dataset
    directory, or a Sintel-layout directory."""
    from .flowio import read_scene_dataset, read_sintel_pair

    if isinstance(target, (SceneRender, SceneSpec)):
        return run_on_scene(target, config)
    path = Path(target)
    if (path / "scene.json").exists():
        return run_on_scene(read_scene_dataset(path), config)
    if (path / "frame_0001.png").exists():
        data = read_sintel_pair(path)
        return run_on_images(
            data["frame0"],
            data["frame1"],
            config,
            gt_flow=data["gt_flow"],
            gt_occlusion=data["gt_occlusion"],
        )
    raise DataError(f"{path}: neither a scene dataset nor a Sintel-layout directory")


def evaluate_suite(
    config: PipelineConfig | None = None,
    seed: int | None = None,
    scene_names: list[str] | None = None,
    parallel: bool = True,
) -> dict:
    """Run the pipeline over the standard suite; per-scene outputs plus
    pooled occlusion counts. Scene evaluations are independent and run in a
    thread pool; output ordering is fixed by the suite order."""
    cfg = (config or PipelineConfig()).validate()
    specs = standard_suite(cfg.seed if seed is None else seed)
    if scene_names is not None:
        chosen = {name: False for name in scene_names}
        keep = []
        for s in specs:
            if s.name in chosen:
                chosen[s.name] = True
                keep.append(s)
        missing = [n for n, seen in chosen.items() if not seen]
        if missing:
            raise UsageError(f"unknown suite scenes {missing}; have {[s.name for s in specs]}")
        specs = keep

    renders = [render(s) for s in specs]
    if parallel and len(renders) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(renders))) as pool:
            outputs = list(pool.map(lambda r: run_on_scene(r, cfg), renders))
    else:
        outputs = [run_on_scene(r, cfg) for r in renders]

    scenes_out: dict[str, PipelineOutputs] = {}
    tp = fp = fn = tn = 0
    total_matches = 0
    for spec, out in zip(specs, outputs):
        scenes_out[spec.name] = out
        occ = out.metrics["occlusion"]
        tp += occ["tp"]
        fp += occ["fp"]
        fn += occ["fn"]
        tn += occ["tn"]
        total_matches += out.report["global_match_count"]
    pooled_precision = tp / (tp + fp) if tp + fp else None
    pooled_recall = tp / (tp + fn) if tp + fn else None
    pooled_f1 = None
    if pooled_precision is not None and pooled_recall is not None and pooled_precision + pooled_recall > 0:
        pooled_f1 = 2 * pooled_precision * pooled_recall / (pooled_precision + pooled_recall)
    return {
        "scenes": scenes_out,
        "pooled_occlusion": {
            "precision": pooled_precision,
            "recall": pooled_recall,
            "f1": pooled_f1,
            "tp": tp,
            "fp": fp,
            "fn": fn,
            "tn": tn,
        },
        "total_global_matches": total_matches,
    }
