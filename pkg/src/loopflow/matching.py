"""Global matching: all-pairs correlation, flow extraction, cost volumes.

Global correlation always materializes the full (Nq, Nk) similarity matrix
(scaled by 1/temperature). Every call increments a match counter so tests
and reports can state exactly how many all-pairs matches a pipeline spends.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import GridDims, UsageError
from .features import DenseFeatureMap, FeatureMap, IndexedFeatureMap

ARGMAX = "argmax"
SOFTARGMAX = "softargmax"

# All-pairs matches an explicit forward/backward consistency check would
# spend: forward field, backward field, and the re-match that turns the
# backward field into per-pixel references.
BIDIRECTIONAL_EQUIVALENT = 3


class MatchCounter:
    """Thread-safe counter of global correlation invocations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._count = 0

    def increment(self) -> None:
        with self._lock:
            self._count += 1

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    @property
    def count(self) -> int:
        with self._lock:
            return self._count


DEFAULT_COUNTER = MatchCounter()


def matching_cost_report(counter: MatchCounter) -> dict:
    return {
        "global_match_count": counter.count,
        "bidirectional_equivalent_count": BIDIRECTIONAL_EQUIVALENT,
    }


@dataclass
class GlobalCorrelation:
    """Temperature-scaled all-pairs similarities, (Nq, Nk) float32.

    Row i corresponds to query pixel (i % Wq, i // Wq); column j to key
    pixel (j % Wk, j // Wk).
    """

    matrix: np.ndarray
    query_dims: GridDims
    key_dims: GridDims
    temperature: float


def _resolve_temperature(temperature: float | None, queries: FeatureMap) -> float:
    if temperature is None:
        return math.sqrt(queries.descriptor_dim)
    if temperature <= 0:
        raise UsageError(f"temperature must be positive, got {temperature}")
    return float(temperature)


def global_correlation(
    queries: FeatureMap,
    keys: FeatureMap,
    temperature: float | None = None,
    counter: MatchCounter | None = None,
    block_rows: int = 4096,
) -> GlobalCorrelation:
    """All-pairs descriptor similarity divided by temperature.

    temperature=None resolves to 1/sqrt(D). Indexed maps with a shared
    table use exact integer comparison; anything else goes through dense
    descriptors in row blocks of block_rows.
    """
    if block_rows < 1:
        raise UsageError(f"block_rows must be >= 1, got {block_rows}")
    tau = _resolve_temperature(temperature, queries)
    (counter if counter is not None else DEFAULT_COUNTER).increment()

    qdims, kdims = queries.dims, keys.dims
    nq, nk = qdims.n_pixels, kdims.n_pixels
    out = np.empty((nq, nk), dtype=np.float32)
    inv = 1.0 / tau

    if isinstance(queries, IndexedFeatureMap) and isinstance(keys, IndexedFeatureMap):
        if not queries.compatible(keys):
            raise UsageError("indexed feature maps built from different tables")
        ptq = queries.point_idx.reshape(nq)
        obq = queries.object_idx.reshape(nq)
        ptk = keys.point_idx.reshape(nk)
        obk = keys.object_idx.reshape(nk)
        for lo in range(0, nq, block_rows):
            hi = min(lo + block_rows, nq)
            out[lo:hi] = kernels.corr_indexed(
                ptq[lo:hi], obq[lo:hi], ptk, obk, queries.point_sim * inv, queries.object_sim * inv
            )
    else:
        if queries.descriptor_dim != keys.descriptor_dim:
            raise UsageError(
                f"descriptor dims differ: {queries.descriptor_dim} vs {keys.descriptor_dim}"
            )
        fq = queries.dense().reshape(nq, -1)
        fk = keys.dense().reshape(nk, -1)
        fkt = np.ascontiguousarray(fk.T)
        for lo in range(0, nq, block_rows):
            hi = min(lo + block_rows, nq)
            np.matmul(fq[lo:hi], fkt, out=out[lo:hi])
        out *= np.float32(inv)

    return GlobalCorrelation(matrix=out, query_dims=qdims, key_dims=kdims, temperature=tau)


def _key_coords(kdims: GridDims) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(kdims.n_pixels, dtype=np.int64)
    return (idx % kdims.width).astype(np.float32), (idx // kdims.width).astype(np.float32)


def match_flow(
    corr: GlobalCorrelation,
    mode: str = ARGMAX,
    softargmax_temperature: float = 0.25,
) -> np.ndarray:
    """Extract a flow field from a correlation matrix.

    argmax: hard best match; ties resolve to the lowest raster index.
    softargmax: matrix rows are softened with softargmax_temperature and
    the flow targets the probability-weighted mean key coordinate.
    """
    h, w = corr.query_dims
    kx, ky = _key_coords(corr.key_dims)
    qidx = np.arange(corr.query_dims.n_pixels, dtype=np.int64)
    qx = (qidx % w).astype(np.float32)
    qy = (qidx // w).astype(np.float32)
    if mode == ARGMAX:
        best = corr.matrix.argmax(axis=1)
        tx, ty = kx[best], ky[best]
    elif mode == SOFTARGMAX:
        if softargmax_temperature <= 0:
            raise UsageError(f"softargmax temperature must be positive, got {softargmax_temperature}")
        logits = corr.matrix.astype(np.float64) / softargmax_temperature
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        tx = (probs @ kx.astype(np.float64)).astype(np.float32)
        ty = (probs @ ky.astype(np.float64)).astype(np.float32)
    else:
        raise UsageError(f"unknown match mode {mode!r}")
    flow = np.stack([tx - qx, ty - qy], axis=1).astype(np.float32)
    return flow.reshape(h, w, 2)


@dataclass
class LocalCostVolume:
    """Per-pixel similarities over a (2r+1)^2 offset window around the
    current flow target. Channel (dy+r)*(2r+1)+(dx+r) is offset (dx, dy)."""

    values: np.ndarray
    radius: int

    @property
    def window(self) -> int:
        return 2 * self.radius + 1

    def offset_of(self, channel: int) -> tuple[int, int]:
        k = self.window
        if not (0 <= channel < k * k):
            raise UsageError(f"channel {channel} outside {k * k} offsets")
        return channel % k - self.radius, channel // k - self.radius


def cost_volume(
    feat0: FeatureMap, feat1: FeatureMap, flow: np.ndarray, radius: int = 3
) -> LocalCostVolume:
    """Similarity of each source descriptor against target descriptors
    bilinearly sampled around p + flow, zero padded outside the frame."""
    if radius < 0:
        raise UsageError(f"radius must be >= 0, got {radius}")
    if feat0.dims != feat1.dims:
        raise UsageError(f"feature dims differ: {feat0.dims} vs {feat1.dims}")
    h, w = feat0.dims
    f = np.ascontiguousarray(flow, dtype=np.float32)
    if f.shape != (h, w, 2):
        raise UsageError(f"flow shape {flow.shape} does not match features {feat0.dims}")
    if isinstance(feat0, IndexedFeatureMap) and isinstance(feat1, IndexedFeatureMap):
        if not feat0.compatible(feat1):
            raise UsageError("indexed feature maps built from different tables")
        vals = kernels.cost_volume_indexed(
            feat0.point_idx,
            feat0.object_idx,
            feat1.point_idx,
            feat1.object_idx,
            f,
            radius,
            feat0.point_sim,
            feat0.object_sim,
        )
    elif isinstance(feat0, DenseFeatureMap) and isinstance(feat1, DenseFeatureMap):
        if feat0.descriptor_dim != feat1.descriptor_dim:
            raise UsageError(
                f"descriptor dims differ: {feat0.descriptor_dim} vs {feat1.descriptor_dim}"
            )
        vals = kernels.cost_volume_dense(feat0.data, feat1.data, f, radius)
    else:
        raise UsageError("cost volume needs two maps of the same representation")
    return LocalCostVolume(values=vals, radius=radius)


def local_flow_correction(volume: LocalCostVolume) -> np.ndarray:
    """Best offset per pixel as a float32 (H, W, 2) flow delta; ties pick
    the smallest channel, i.e. raster order over the offset grid."""
    k = volume.window
    best = volume.values.argmax(axis=2)
    dx = (best % k - volume.radius).astype(np.float32)
    dy = (best // k - volume.radius).astype(np.float32)
    return np.stack([dx, dy], axis=-1)
