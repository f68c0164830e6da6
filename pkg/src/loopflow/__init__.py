"""Occlusion-aware optical flow by loopback matching.

A correlation-based flow pipeline for piecewise-rigid scenes: one global
match gives an initial flow, a second match from the landed features back
to frame 0 detects occlusions and hands every occluded pixel a visible
same-surface reference, and a rotation-aware refinement extrapolates the
reference motion instead of copying it.
"""
from .core import (
    DataError,
    EST_NOC,
    EST_OCC,
    GridDims,
    InvariantError,
    NOC,
    OCC_IN,
    OCC_OUT,
    Padding,
    UsageError,
    init_coord,
    sample_bilinear,
    target_coords,
    warp_backward,
)
from .features import (
    DenseFeatureMap,
    FeatureBundle,
    IdentityConfig,
    IndexedFeatureMap,
    census_features,
    dense_bundle,
    identity_features,
    patch_features,
    same_source_mask,
)
from .flowio import flo_read, flo_write, flow_to_png, read_scene_dataset, write_scene_dataset
from .loopback import LoopbackResult, run_loopback
from .matching import (
    ARGMAX,
    GlobalCorrelation,
    LocalCostVolume,
    MatchCounter,
    SOFTARGMAX,
    cost_volume,
    global_correlation,
    local_flow_correction,
    match_flow,
)
from .metrics import PartitionedAEPE, RegionScore, aepe_partitioned, endpoint_error, occlusion_prf
from .pipeline import (
    PipelineConfig,
    PipelineOutputs,
    evaluate_suite,
    run_on_images,
    run_on_scene,
    run_pipeline,
)
from .refine import (
    RefineResult,
    RefineStrategy,
    RefinementInputs,
    SimilarityPair,
    classify_occ_in,
    fuse,
    refine,
    similarity_pair,
)
from .rotation import (
    RigidMotionFit,
    distance_field,
    euclidean_distance,
    fit_rigid_motion,
    uniform_law_distance,
)
from .scenes import ObjectSpec, RigidMotion, SceneRender, SceneSpec, rect, render, standard_suite, suite_scene

__version__ = "0.1.0"

__all__ = [
    "ARGMAX",
    "DataError",
    "DenseFeatureMap",
    "EST_NOC",
    "EST_OCC",
    "FeatureBundle",
    "GlobalCorrelation",
    "GridDims",
    "IdentityConfig",
    "IndexedFeatureMap",
    "InvariantError",
    "LocalCostVolume",
    "LoopbackResult",
    "MatchCounter",
    "NOC",
    "OCC_IN",
    "OCC_OUT",
    "ObjectSpec",
    "Padding",
    "PartitionedAEPE",
    "PipelineConfig",
    "PipelineOutputs",
    "RefineResult",
    "RefineStrategy",
    "RefinementInputs",
    "RegionScore",
    "RigidMotion",
    "RigidMotionFit",
    "SceneRender",
    "SceneSpec",
    "SimilarityPair",
    "SOFTARGMAX",
    "UsageError",
    "aepe_partitioned",
    "census_features",
    "classify_occ_in",
    "cost_volume",
    "dense_bundle",
    "distance_field",
    "endpoint_error",
    "euclidean_distance",
    "evaluate_suite",
    "fit_rigid_motion",
    "flo_read",
    "flo_write",
    "flow_to_png",
    "fuse",
    "global_correlation",
    "identity_features",
    "init_coord",
    "local_flow_correction",
    "match_flow",
    "occlusion_prf",
    "patch_features",
    "read_scene_dataset",
    "rect",
    "refine",
    "render",
    "run_loopback",
    "run_on_images",
    "run_on_scene",
    "run_pipeline",
    "same_source_mask",
    "sample_bilinear",
    "similarity_pair",
    "standard_suite",
    "suite_scene",
    "target_coords",
    "uniform_law_distance",
    "warp_backward",
    "write_scene_dataset",
]
