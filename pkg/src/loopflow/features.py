"""Feature providers: descriptor maps the matcher consumes.

Two map representations share one interface:

* DenseFeatureMap: explicit float32 (H, W, D) descriptors (census, patch).
* IndexedFeatureMap: structured descriptors for rendered scenes. Each
  pixel's descriptor is the concatenation of a one-hot point code (weight
  w_p) and a one-hot object code (weight w_o), L2-normalized. Pairwise
  similarity is then exactly

      1                      if same point (implies same object),
      w_o^2 / (w_p^2+w_o^2)  if same object, different point,
      0                      otherwise,

  so correlation reduces to integer id comparisons and never needs the
  dense table.

The identity provider derives two descriptor families from a rendered
scene's material identity maps: a "global" family dominated by the point
code (w_p > w_o: distinct points are far apart, same-object points share a
small floor) and a "local" family with the weights swapped (appearance is
dominated by the surface, point texture is secondary). Dense providers use
one family for both roles.

The identity provider can optionally corrupt the frame-0 global map at
ground-truth covered pixels, replacing their ids with the ids visible at
their landing pixel in frame 1. This simulates a matcher that locks onto
the occluder surface, the failure mode the similarity-pair classifier is
designed to flag. It is off by default; enable it only to study that
classifier (see inject_cover_ids).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import GridDims, OCC_IN, UsageError, init_coord
from .scenes import SceneRender


@dataclass
class DenseFeatureMap:
    """Explicit descriptors, float32 (H, W, D)."""

    data: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        if self.data.ndim != 3:
            raise UsageError(f"dense features must be (H, W, D), got {self.data.shape}")
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)

    @property
    def dims(self) -> GridDims:
        return GridDims(self.data.shape[0], self.data.shape[1])

    @property
    def descriptor_dim(self) -> int:
        return self.data.shape[2]

    def dense(self) -> np.ndarray:
        return self.data


@dataclass
class IndexedFeatureMap:
    """Structured two-block one-hot descriptors stored as integer ids.

    point_idx: int32 (H, W), row into a point-code table, -1 for null.
    object_idx: int16 (H, W), object code, -1 for null.
    Null pixels have the all-zero descriptor (they match nothing).
    """

    point_idx: np.ndarray
    object_idx: np.ndarray
    point_weight: float
    object_weight: float
    table_size: int
    n_objects: int
    normalized: bool = True

    def __post_init__(self):
        if self.point_idx.shape != self.object_idx.shape or self.point_idx.ndim != 2:
            raise UsageError("point_idx and object_idx must be equal-shape (H, W)")
        if not (self.point_weight > 0 and self.object_weight > 0):
            raise UsageError("descriptor block weights must be positive")
        self.point_idx = np.ascontiguousarray(self.point_idx, dtype=np.int32)
        self.object_idx = np.ascontiguousarray(self.object_idx, dtype=np.int16)

    @property
    def dims(self) -> GridDims:
        return GridDims(self.point_idx.shape[0], self.point_idx.shape[1])

    @property
    def descriptor_dim(self) -> int:
        return self.table_size + self.n_objects

    @property
    def point_sim(self) -> float:
        """Similarity contribution of a point-id match."""
        pw2, ow2 = self.point_weight**2, self.object_weight**2
        return pw2 / (pw2 + ow2)

    @property
    def object_sim(self) -> float:
        """Similarity contribution of an object-id match."""
        pw2, ow2 = self.point_weight**2, self.object_weight**2
        return ow2 / (pw2 + ow2)

    def compatible(self, other: "IndexedFeatureMap") -> bool:
        return (
            self.table_size == other.table_size
            and self.n_objects == other.n_objects
            and self.point_weight == other.point_weight
            and self.object_weight == other.object_weight
        )

    def dense(self) -> np.ndarray:
        """Materialize (H, W, D) float32 descriptors. Meant for small grids
        and equivalence tests; D grows with the scene's id table."""
        h, w = self.dims
        n = h * w
        d = self.descriptor_dim
        norm = float(np.hypot(self.point_weight, self.object_weight))
        out = np.zeros((n, d), dtype=np.float32)
        pt = self.point_idx.reshape(n)
        ob = self.object_idx.reshape(n)
        rows = np.arange(n)
        ok = pt >= 0
        out[rows[ok], pt[ok]] = np.float32(self.point_weight / norm)
        ok = ob >= 0
        out[rows[ok], self.table_size + ob[ok]] = np.float32(self.object_weight / norm)
        return out.reshape(h, w, d)


FeatureMap = DenseFeatureMap | IndexedFeatureMap


@dataclass
class FeatureBundle:
    """Descriptor maps for one frame pair, in both matcher roles."""

    global0: FeatureMap
    global1: FeatureMap
    local0: FeatureMap
    local1: FeatureMap


def gather_integer(fmap: FeatureMap, coords: np.ndarray) -> FeatureMap:
    """Resample a feature map at integer pixel coords (..., 2) -> (x, y).

    Out-of-frame coordinates produce null descriptors. Returns a map of the
    same representation shaped like the coordinate grid.
    """
    c = np.asarray(coords)
    if c.shape[-1] != 2 or c.ndim != 3:
        raise UsageError(f"coords must be (H, W, 2), got {c.shape}")
    ci = np.rint(c).astype(np.int64)
    if not np.array_equal(ci, np.asarray(c, dtype=np.float64)):
        raise UsageError("gather_integer requires integer-valued coordinates")
    h, w = fmap.dims
    ok = (ci[..., 0] >= 0) & (ci[..., 0] <= w - 1) & (ci[..., 1] >= 0) & (ci[..., 1] <= h - 1)
    x = np.clip(ci[..., 0], 0, w - 1)
    y = np.clip(ci[..., 1], 0, h - 1)
    if isinstance(fmap, IndexedFeatureMap):
        pt = fmap.point_idx[y, x]
        ob = fmap.object_idx[y, x]
        pt = np.where(ok, pt, np.int32(-1)).astype(np.int32)
        ob = np.where(ok, ob, np.int16(-1)).astype(np.int16)
        return replace(
            fmap, point_idx=pt, object_idx=ob, normalized=fmap.normalized and bool(ok.all())
        )
    data = fmap.data[y, x]
    data = np.where(ok[..., None], data, np.float32(0.0))
    return DenseFeatureMap(data=data, normalized=fmap.normalized and bool(ok.all()))


def _window_offsets(window: int) -> tuple[np.ndarray, np.ndarray]:
    r = window // 2
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    return dx.ravel(), dy.ravel()


def _check_window(window: int, dims: GridDims) -> None:
    if window < 3 or window % 2 == 0:
        raise UsageError(f"window must be odd and >= 3, got {window}")
    if window > min(dims.height, dims.width):
        raise UsageError(f"window {window} exceeds image side {min(dims)}")


def census_features(image: np.ndarray, window: int = 5) -> DenseFeatureMap:
    """Census transform: sign of neighbor minus center over the window,
    out-of-frame comparisons contribute zero, rows L2-normalized."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise UsageError(f"census expects a grayscale (H, W) image, got {img.shape}")
    h, w = img.shape
    _check_window(window, GridDims(h, w))
    dxs, dys = _window_offsets(window)
    keep = ~((dxs == 0) & (dys == 0))
    dxs, dys = dxs[keep], dys[keep]
    gx, gy = np.meshgrid(np.arange(w), np.arange(h))
    out = np.zeros((h, w, len(dxs)), dtype=np.float32)
    for ch, (dx, dy) in enumerate(zip(dxs, dys)):
        nx = gx + dx
        ny = gy + dy
        ok = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        vals = img[np.clip(ny, 0, h - 1), np.clip(nx, 0, w - 1)]
        sign = np.where(vals > img, np.float32(1.0), np.float32(-1.0))
        out[..., ch] = np.where(ok, sign, np.float32(0.0))
    return DenseFeatureMap(data=_l2_normalize(out))


def patch_features(image: np.ndarray, window: int = 5) -> DenseFeatureMap:
    """Mean-subtracted raw patch descriptors, zero padded, L2-normalized."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise UsageError(f"patch expects a grayscale (H, W) image, got {img.shape}")
    h, w = img.shape
    _check_window(window, GridDims(h, w))
    dxs, dys = _window_offsets(window)
    gx, gy = np.meshgrid(np.arange(w), np.arange(h))
    out = np.zeros((h, w, len(dxs)), dtype=np.float32)
    valid = np.zeros((h, w, len(dxs)), dtype=bool)
    for ch, (dx, dy) in enumerate(zip(dxs, dys)):
        nx = gx + dx
        ny = gy + dy
        ok = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        vals = img[np.clip(ny, 0, h - 1), np.clip(nx, 0, w - 1)]
        out[..., ch] = np.where(ok, vals, np.float32(0.0))
        valid[..., ch] = ok
    mean = out.sum(axis=2) / valid.sum(axis=2)
    out = np.where(valid, out - mean[..., None].astype(np.float32), np.float32(0.0))
    return DenseFeatureMap(data=_l2_normalize(out))


def _l2_normalize(data: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norm = np.sqrt((data.astype(np.float64) ** 2).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    return (data / norm).astype(np.float32)


@dataclass(frozen=True)
class IdentityConfig:
    """Identity-provider knobs.

    point_weight / object_weight set the two descriptor blocks; the default
    ratio puts same-object similarity at ~0.19 for the global family and
    ~0.81 for the local family.

    inject_cover_ids corrupts the frame-0 global map at ground-truth
    covered pixels with the occluder's ids (see module docstring). Leave
    False for any evaluation of matching or occlusion quality; the switch
    exists to reproduce the occluder-lock failure mode on demand.
    """

    point_weight: float = 0.9
    object_weight: float = 0.435
    inject_cover_ids: bool = False

    def validate(self) -> "IdentityConfig":
        if not (self.point_weight > self.object_weight > 0):
            raise UsageError(
                "need point_weight > object_weight > 0, got "
                f"{self.point_weight}, {self.object_weight}"
            )
        return self


def identity_features(render: SceneRender, config: IdentityConfig | None = None) -> FeatureBundle:
    """Build global and local indexed descriptor maps from a rendered scene.

    One point-code table is shared by both frames and both families: a row
    per distinct (object slot, material x, material y) visible in either
    frame. Object codes are the object slots.
    """
    cfg = (config or IdentityConfig()).validate()
    h, w = render.dims
    n = h * w

    def keys_of(obj_id, pt_id):
        return np.stack(
            [
                obj_id.reshape(n).astype(np.int64),
                pt_id.reshape(n, 2)[:, 0].astype(np.int64),
                pt_id.reshape(n, 2)[:, 1].astype(np.int64),
            ],
            axis=1,
        )

    k0 = keys_of(render.obj_id0, render.pt_id0)
    k1 = keys_of(render.obj_id1, render.pt_id1)
    table, inverse = np.unique(np.concatenate([k0, k1]), axis=0, return_inverse=True)
    pt0 = inverse[:n].astype(np.int32).reshape(h, w)
    pt1 = inverse[n:].astype(np.int32).reshape(h, w)
    ob0 = render.obj_id0.astype(np.int16)
    ob1 = render.obj_id1.astype(np.int16)

    gpt0, gob0 = pt0, ob0
    if cfg.inject_cover_ids:
        covered = render.labels == OCC_IN
        # Same float32 landing arithmetic as the label construction.
        land = np.rint(init_coord(render.dims) + render.flow).astype(np.int64)
        ly = np.clip(land[..., 1], 0, h - 1)
        lx = np.clip(land[..., 0], 0, w - 1)
        gpt0 = np.where(covered, pt1[ly, lx], pt0).astype(np.int32)
        gob0 = np.where(covered, ob1[ly, lx], ob0).astype(np.int16)

    def build(pt, ob, pw, ow):
        return IndexedFeatureMap(
            point_idx=pt,
            object_idx=ob,
            point_weight=pw,
            object_weight=ow,
            table_size=len(table),
            n_objects=render.n_slots,
        )

    pw, ow = cfg.point_weight, cfg.object_weight
    return FeatureBundle(
        global0=build(gpt0, gob0, pw, ow),
        global1=build(pt1, ob1, pw, ow),
        local0=build(pt0, ob0, ow, pw),
        local1=build(pt1, ob1, ow, pw),
    )


def dense_bundle(map0: DenseFeatureMap, map1: DenseFeatureMap) -> FeatureBundle:
    """Use one descriptor family for both matcher roles (dense providers
    have no global/local split)."""
    return FeatureBundle(global0=map0, global1=map1, local0=map0, local1=map1)


def same_source_mask(fmap: FeatureMap, anchor: tuple[int, int], threshold: float = 0.5) -> np.ndarray:
    """Pixels whose descriptor is at least `threshold`-similar to the
    descriptor at `anchor` = (x, y). Exact same-object membership for
    indexed maps when threshold sits below the same-object similarity."""
    ax, ay = int(anchor[0]), int(anchor[1])
    h, w = fmap.dims
    if not (0 <= ax <= w - 1 and 0 <= ay <= h - 1):
        raise UsageError(f"anchor {anchor} outside {fmap.dims}")
    if isinstance(fmap, IndexedFeatureMap):
        sim = np.zeros((h, w), dtype=np.float32)
        ob = fmap.object_idx[ay, ax]
        pt = fmap.point_idx[ay, ax]
        if ob >= 0:
            sim += np.float32(fmap.object_sim) * (fmap.object_idx == ob)
        if pt >= 0:
            sim += np.float32(fmap.point_sim) * (fmap.point_idx == pt)
        return sim >= threshold
    ref = fmap.data[ay, ax]
    return fmap.data @ ref >= threshold