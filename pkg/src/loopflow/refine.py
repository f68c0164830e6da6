"""occ_in identification and the one-shot flow refinement.

A pixel covered by another surface can still score a high global match:
the matcher locks onto the occluder. Such pixels show high global
similarity but low local (appearance) similarity along the matched flow,
and that gap is the occ_in flag. Flagged pixels keep their initial flow
(weight 0) since the match they found, while not their own motion, is the
most accurate statement available about them.

Occluded pixels (from loopback) get weight 1 and a residual flow proposed
by a strategy:

* copy_reference: take the reference point's flow verbatim.
* rigid_model: evaluate the rigid motion fitted around the reference at
  the pixel's own coordinate; falls back to copying when the fit is
  degenerate, when its residual exceeds fit_tol, when the pixel's distance
  to its reference exceeds d_max, or when no distance signal is available
  at all (distance mode "none") — extrapolating a fitted rotation without
  a trust radius is exactly the failure the distance exists to prevent.
* disabled: weight stays 0 everywhere; the output is the initial flow.

Non-occluded pixels keep their flow ("keep") or take the best local cost
volume offset ("local_correct"). The final field is fused per-pixel:
(1 - weight) * flow0 + weight * residual, with exact endpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import UsageError, as_flow, init_coord
from .features import FeatureMap
from .loopback import LoopbackResult
from .matching import LocalCostVolume, cost_volume, local_flow_correction
from .rotation import DISTANCE_MODES, NONE, RigidMotionFit, UNIFORM_LAW

COPY_REFERENCE = "copy_reference"
RIGID_MODEL = "rigid_model"
DISABLED = "disabled"
STRATEGY_KINDS = (COPY_REFERENCE, RIGID_MODEL, DISABLED)

KEEP = "keep"
LOCAL_CORRECT = "local_correct"
NOC_MODES = (KEEP, LOCAL_CORRECT)


@dataclass
class SimilarityPair:
    """Per-pixel descriptor dot products along the initial flow."""

    global_sim: np.ndarray
    local_sim: np.ndarray


def similarity_pair(
    local0: FeatureMap,
    local1: FeatureMap,
    global0: FeatureMap,
    global1: FeatureMap,
    flow0: np.ndarray,
) -> SimilarityPair:
    """Dot products <f0(p), f1(p + flow0)> for the local and global
    descriptor families, bilinear with zero padding (out-of-frame targets
    score 0). Requires unit-normalized maps."""
    for name, fmap in (("local0", local0), ("local1", local1), ("global0", global0), ("global1", global1)):
        if not fmap.normalized:
            raise UsageError(f"similarity_pair requires normalized features, {name} is not")
    g = cost_volume(global0, global1, flow0, radius=0).values[..., 0]
    l = cost_volume(local0, local1, flow0, radius=0).values[..., 0]
    return SimilarityPair(global_sim=g, local_sim=l)


def classify_occ_in(
    sims: SimilarityPair,
    occ_estimate: np.ndarray | None = None,
    g_hi: float = 0.8,
    l_lo: float = 0.3,
) -> np.ndarray:
    """Flag pixels whose global similarity is at least g_hi while local
    similarity is at most l_lo. occ_estimate is accepted for signature
    symmetry and diagnostics; the flag itself is purely the two-threshold
    rule (flags may overlap the loopback-NOC set by construction: an
    occluded pixel locked onto its occluder loops back as matched)."""
    if not (-1.0 < g_hi < 1.0 and -1.0 < l_lo < 1.0):
        raise UsageError(f"thresholds must lie in (-1, 1), got g_hi={g_hi}, l_lo={l_lo}")
    if g_hi <= l_lo:
        raise UsageError(f"need g_hi > l_lo, got g_hi={g_hi}, l_lo={l_lo}")
    return (sims.global_sim >= np.float32(g_hi)) & (sims.local_sim <= np.float32(l_lo))


def fuse(flow0: np.ndarray, weight: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """Per-pixel convex combination (1 - weight) * flow0 + weight * residual.

    Evaluated as flow0 + weight * (residual - flow0) with an exact branch at
    weight == 1, so both endpoints reproduce their input bit-exactly (the
    naive two-product form loses that: (1 - w) + w need not round to 1).
    """
    f = as_flow(flow0)
    r = as_flow(residual)
    if r.shape != f.shape:
        raise UsageError(f"residual shape {residual.shape} != flow shape {f.shape}")
    w = np.asarray(weight, dtype=np.float32)
    if w.shape == f.shape[:2]:
        w = w[..., None]
    if w.shape != f.shape[:2] + (1,):
        raise UsageError(f"weight shape {weight.shape} does not match flow {f.shape}")
    if w.min() < 0.0 or w.max() > 1.0:
        raise UsageError(f"weights must lie in [0, 1], got [{w.min()}, {w.max()}]")
    return np.where(w == np.float32(1.0), r, f + w * (r - f)).astype(np.float32)


@dataclass(frozen=True)
class RefineStrategy:
    kind: str = RIGID_MODEL
    noc: str = KEEP
    fit_tol: float = 0.5
    d_max: float = 64.0

    def validate(self) -> "RefineStrategy":
        if self.kind not in STRATEGY_KINDS:
            raise UsageError(f"unknown strategy kind {self.kind!r}")
        if self.noc not in NOC_MODES:
            raise UsageError(f"unknown noc handling {self.noc!r}")
        if self.fit_tol < 0 or self.d_max < 0:
            raise UsageError("fit_tol and d_max must be >= 0")
        return self


@dataclass
class RefinementInputs:
    """Everything the strategies may consume, all on frame0's grid."""

    flow0: np.ndarray
    loopback: LoopbackResult
    distances: np.ndarray | None = None
    distance_mode: str = UNIFORM_LAW
    occ_in: np.ndarray | None = None
    cost_volume: LocalCostVolume | None = None
    sims: SimilarityPair | None = None
    fits: dict[tuple[int, int], RigidMotionFit] = field(default_factory=dict)

    def validate(self) -> "RefinementInputs":
        if self.distance_mode not in DISTANCE_MODES:
            raise UsageError(f"unknown distance mode {self.distance_mode!r}")
        return self


@dataclass
class RefineResult:
    flow: np.ndarray
    weight: np.ndarray
    residual: np.ndarray


def refine(inputs: RefinementInputs, strategy: RefineStrategy | None = None) -> RefineResult:
    """Build weight and residual fields per strategy rules and fuse.

    Rules: occluded pixels take weight 1 with the strategy's residual;
    non-occluded pixels take weight 0 (keep) or a local cost volume
    correction (local_correct); occ_in flags override everything to weight
    0 last, so flagged pixels emerge bit-identical to flow0.
    """
    strat = (strategy or RefineStrategy()).validate()
    inputs.validate()
    flow0 = as_flow(inputs.flow0)
    h, w = flow0.shape[:2]
    occ = inputs.loopback.occ_mask
    if occ.shape != (h, w):
        raise UsageError(f"loopback grid {occ.shape} does not match flow {flow0.shape}")

    weight = np.zeros((h, w), dtype=np.float32)
    residual = flow0.copy()

    if strat.kind != DISABLED:
        weight[occ] = 1.0
        residual[occ] = inputs.loopback.ref_flow[occ]
        if strat.kind == RIGID_MODEL and inputs.distance_mode != NONE:
            residual = _rigid_residual(inputs, strat, occ, residual)
        if strat.noc == LOCAL_CORRECT:
            if inputs.cost_volume is None:
                raise UsageError("noc=local_correct requires a cost volume")
            noc = ~occ
            weight[noc] = 1.0
            correction = local_flow_correction(inputs.cost_volume)
            residual[noc] = flow0[noc] + correction[noc]

    if inputs.occ_in is not None:
        flags = np.asarray(inputs.occ_in, dtype=bool)
        weight[flags] = 0.0
        residual[flags] = flow0[flags]

    return RefineResult(flow=fuse(flow0, weight, residual), weight=weight, residual=residual)


def _rigid_residual(
    inputs: RefinementInputs,
    strat: RefineStrategy,
    occ: np.ndarray,
    residual: np.ndarray,
) -> np.ndarray:
    """Replace copied reference flow with the fitted rigid prediction where
    the fit and the distance gate allow it."""
    h, w = residual.shape[:2]
    coords = init_coord((h, w)).astype(np.float64)
    anchors = np.rint(inputs.loopback.pairs).astype(np.int64)
    dist = inputs.distances
    out = residual
    occ_flat = occ.reshape(-1)
    akeys = (anchors[..., 0] + anchors[..., 1] * np.int64(w)).reshape(-1)
    for (ax, ay), fit in inputs.fits.items():
        if fit.degenerate or fit.residual > strat.fit_tol:
            continue
        sel = occ_flat & (akeys == ax + ay * w)
        if dist is not None:
            sel = sel & (dist.reshape(-1) <= strat.d_max)
        if not sel.any():
            continue
        sel2 = sel.reshape(h, w)
        out[sel2] = fit.predicted_flow(coords[sel2]).astype(np.float32)
    return out
