"""Loopback judgment: occlusion detection and reference assignment.

Given an initial flow, each source pixel p is carried to its target
p1 = p + flow0(p). The target frame's descriptors are resampled at those
positions and matched globally *back* onto the source frame. A pixel whose
return match is itself (within tau_occ) is visible in both frames; any
other return displacement means p's descriptor was not found where it
landed, i.e. p is occluded. The return match doubles as a reference point:
it is the source pixel best supported by the features found at p's
landing, so its flow is evidence for refining p.

Cost: one global correlation here plus one for the initial flow — two per
pipeline run. An explicit forward/backward consistency check would spend
three (forward field, backward field, and re-matching backward targets to
source pixels to build references).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EST_NOC, EST_OCC, Padding, UsageError, init_coord, sample_bilinear, target_coords
from .features import DenseFeatureMap, FeatureMap, gather_integer
from .matching import ARGMAX, GlobalCorrelation, MatchCounter, global_correlation, match_flow


@dataclass
class LoopbackResult:
    """Outputs of the loopback pass, all on frame0's grid.

    flow_ref: displacement from each pixel to its return match.
    occlusion: uint8, 0 = NOC (round trip closed), 1 = OCC.
    pairs: coordinates of the return match (the reference point).
    ref_flow: flow0 resampled at pairs (clamped bilinear).
    """

    flow_ref: np.ndarray
    occlusion: np.ndarray
    pairs: np.ndarray
    ref_flow: np.ndarray

    @property
    def occ_mask(self) -> np.ndarray:
        return self.occlusion == EST_OCC


def resample_features(feat1: FeatureMap, coords: np.ndarray) -> FeatureMap:
    """Feature map at continuous target coordinates, null/zero out of frame.

    Integer coordinate grids (the argmax case) gather ids directly and stay
    in the indexed representation; fractional grids densify and blend.
    """
    c = np.asarray(coords, dtype=np.float32)
    if np.array_equal(c, np.rint(c)):
        return gather_integer(feat1, c)
    data = sample_bilinear(feat1.dense(), c, Padding.ZERO)
    return DenseFeatureMap(data=data, normalized=False)


def run_loopback(
    feat0: FeatureMap,
    feat1: FeatureMap,
    flow0: np.ndarray,
    tau_occ: float = 0.5,
    temperature: float | None = None,
    counter: MatchCounter | None = None,
    block_rows: int = 4096,
) -> LoopbackResult:
    """One loopback pass. Exactly one global correlation is spent.

    tau_occ bounds the return displacement norm for a pixel to count as
    non-occluded; 0.5 px accepts only an exact return under argmax
    matching. All-null query rows (pixels that landed out of frame with no
    surviving descriptor) resolve to raster index 0 like any tied argmax;
    they sit far from their source and classify as occluded.
    """
    if tau_occ < 0:
        raise UsageError(f"tau_occ must be >= 0, got {tau_occ}")
    h, w = feat0.dims
    f = np.ascontiguousarray(flow0, dtype=np.float32)
    if f.shape != (h, w, 2):
        raise UsageError(f"flow shape {flow0.shape} does not match features {feat0.dims}")

    landed = resample_features(feat1, target_coords(f))
    corr = loopback_correlation(landed, feat0, temperature, counter, block_rows)
    flow_ref = match_flow(corr, mode=ARGMAX)

    norm = np.linalg.norm(flow_ref.astype(np.float64), axis=-1)
    occlusion = np.where(norm <= tau_occ, np.uint8(EST_NOC), np.uint8(EST_OCC))
    pairs = init_coord(feat0.dims) + flow_ref
    ref_flow = sample_bilinear(f, pairs, Padding.CLAMP)
    return LoopbackResult(flow_ref=flow_ref, occlusion=occlusion, pairs=pairs, ref_flow=ref_flow)


def loopback_correlation(
    landed: FeatureMap,
    feat0: FeatureMap,
    temperature: float | None = None,
    counter: MatchCounter | None = None,
    block_rows: int = 4096,
) -> GlobalCorrelation:
    """Correlate landed target features (queries) against the source frame
    (keys). Split out for tests that inspect the return-match matrix."""
    return global_correlation(
        landed, feat0, temperature=temperature, counter=counter, block_rows=block_rows
    )
