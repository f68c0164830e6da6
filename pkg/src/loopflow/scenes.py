"""Analytic synthetic scenes with exact flow and occlusion ground truth.

A scene is a background plus rigid polygonal objects, each moving by a
rotation about a center composed with a translation. Every pixel of an
object carries a persistent material identity: the integer coordinate of
the point in frame 0's object coordinates (which coincide with frame 0
pixel coordinates, since frame 0 is the reference pose). Frame 1 identity
is built by forward mapping:

* each integer material point inside the object's polygon (possibly off
  frame for oversized polygons) lands at its transformed position,
* the landing rounds to a pixel; among materials rounding to the same
  pixel the one closest to the pixel center wins (ties by raster order of
  the material), and objects are composited back-to-front by z order.

Ground truth per frame 0 pixel p with analytic flow f(p):
* OCC_OUT if rint(p + f(p)) falls outside the frame,
* NOC if the landing pixel carries exactly p's identity in frame 1,
* OCC_IN otherwise (covered by another surface or lost the rounding race).

Landing positions are computed through float32 exactly as consumers will
(p + float32 flow), so labels, identity maps and the emitted flow field are
mutually consistent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GridDims, NOC, OCC_IN, OCC_OUT, UsageError, init_coord

BACKGROUND_SLOT = 0


_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int (mod 2**64)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over uint64 arrays (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def hash_texture(seed: int, slot: int, mx: np.ndarray, my: np.ndarray) -> np.ndarray:
    """Deterministic per-material grayscale values in [0, 1), float32."""
    base = _mix64((int(seed) & _MASK64) ^ (int(slot) << 32))
    mxu = np.asarray(mx, dtype=np.int64).view(np.uint64)
    myu = np.asarray(my, dtype=np.int64).view(np.uint64)
    h = _splitmix64(np.uint64(base) ^ mxu)
    h = _splitmix64(h ^ myu)
    return ((h >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)).astype(np.float32)


@dataclass(frozen=True)
class RigidMotion:
    """Rotation by theta about a center, followed by a translation.

    p' = R(theta) @ (p - center) + center + translation
    """

    theta: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    translation: tuple[float, float] = (0.0, 0.0)

    def validate(self) -> "RigidMotion":
        if not (-math.pi < self.theta <= math.pi):
            raise UsageError(f"theta must lie in (-pi, pi], got {self.theta}")
        return self

    @property
    def is_identity(self) -> bool:
        return self.theta == 0.0 and self.translation == (0.0, 0.0)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 2) points in float64."""
        p = np.asarray(points, dtype=np.float64)
        c = np.array(self.center, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64)
        cos, sin = math.cos(self.theta), math.sin(self.theta)
        rel = p - c
        out = np.empty_like(rel)
        out[..., 0] = cos * rel[..., 0] - sin * rel[..., 1]
        out[..., 1] = sin * rel[..., 0] + cos * rel[..., 1]
        return out + c + t

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "center": list(self.center),
            "translation": list(self.translation),
        }

    @staticmethod
    def from_dict(d: dict) -> "RigidMotion":
        return RigidMotion(
            theta=float(d.get("theta", 0.0)),
            center=tuple(d.get("center", (0.0, 0.0))),
            translation=tuple(d.get("translation", (0.0, 0.0))),
        ).validate()


@dataclass(frozen=True)
class ObjectSpec:
    """A rigid polygonal object.

    Polygon vertices are continuous (x, y) coordinates in frame 0. Using
    half-integer vertices keeps pixel centers strictly inside or outside.
    Higher z_order is closer to the camera; z_order must be >= 1 (0 is the
    background).
    """

    name: str
    polygon: tuple[tuple[float, float], ...]
    z_order: int
    motion: RigidMotion = field(default_factory=RigidMotion)

    def validate(self) -> "ObjectSpec":
        if not self.name:
            raise UsageError("object name must be non-empty")
        if len(self.polygon) < 3:
            raise UsageError(f"polygon needs >= 3 vertices, got {len(self.polygon)}")
        if self.z_order < 1:
            raise UsageError(f"z_order must be >= 1, got {self.z_order}")
        self.motion.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "polygon": [list(v) for v in self.polygon],
            "z_order": self.z_order,
            "motion": self.motion.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "ObjectSpec":
        return ObjectSpec(
            name=str(d["name"]),
            polygon=tuple(tuple(float(c) for c in v) for v in d["polygon"]),
            z_order=int(d["z_order"]),
            motion=RigidMotion.from_dict(d.get("motion", {})),
        ).validate()


def rect(x0: float, y0: float, x1: float, y1: float) -> tuple[tuple[float, float], ...]:
    """Axis-aligned rectangle polygon covering [x0, x1] x [y0, y1]."""
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


@dataclass(frozen=True)
class SceneSpec:
    name: str
    height: int
    width: int
    seed: int
    objects: tuple[ObjectSpec, ...] = ()

    @property
    def dims(self) -> GridDims:
        return GridDims(self.height, self.width)

    def validate(self) -> "SceneSpec":
        self.dims.validate()
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise UsageError(f"object names must be distinct, got {names}")
        zs = [o.z_order for o in self.objects]
        if len(set(zs)) != len(zs):
            raise UsageError(f"z_orders must be distinct, got {zs}")
        for o in self.objects:
            o.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "height": self.height,
            "width": self.width,
            "seed": self.seed,
            "objects": [o.to_dict() for o in self.objects],
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        return SceneSpec(
            name=str(d["name"]),
            height=int(d["height"]),
            width=int(d["width"]),
            seed=int(d["seed"]),
            objects=tuple(ObjectSpec.from_dict(o) for o in d.get("objects", [])),
        ).validate()


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorized over (N, 2) points."""
    pts = np.asarray(points, dtype=np.float64)
    poly = np.asarray(polygon, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    m = len(poly)
    for i in range(m):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % m]
        if y1 == y2:
            continue
        crosses = (y1 > y) != (y2 > y)
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _interior_grid_points(polygon: np.ndarray) -> np.ndarray:
    """Integer lattice points inside the polygon, (K, 2) int64, raster order."""
    poly = np.asarray(polygon, dtype=np.float64)
    x0 = math.floor(poly[:, 0].min())
    x1 = math.ceil(poly[:, 0].max())
    y0 = math.floor(poly[:, 1].min())
    y1 = math.ceil(poly[:, 1].max())
    xs = np.arange(x0, x1 + 1, dtype=np.int64)
    ys = np.arange(y0, y1 + 1, dtype=np.int64)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return pts[points_in_polygon(pts, poly)]


@dataclass
class SceneRender:
    """Rendered scene: frames, identity maps, analytic flow, exact labels.

    obj_id maps use slot 0 for the background and 1 + index into
    spec.objects otherwise. pt_id maps hold the material coordinate
    (mx, my) of the surface point visible at each pixel.
    """

    spec: SceneSpec
    frame0: np.ndarray
    frame1: np.ndarray
    flow: np.ndarray
    labels: np.ndarray
    obj_id0: np.ndarray
    obj_id1: np.ndarray
    pt_id0: np.ndarray
    pt_id1: np.ndarray

    @property
    def dims(self) -> GridDims:
        return self.spec.dims

    @property
    def n_slots(self) -> int:
        return len(self.spec.objects) + 1

    def motion_of_slot(self, slot: int) -> RigidMotion:
        if slot == BACKGROUND_SLOT:
            return RigidMotion()
        return self.spec.objects[slot - 1].motion


def _landing(motion: RigidMotion, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """float32 flow and float32 landing for integer points, on the exact
    arithmetic path consumers use (float32 point + float32 flow)."""
    p64 = np.asarray(points, dtype=np.float64)
    flow32 = (motion.apply(p64) - p64).astype(np.float32)
    land32 = p64.astype(np.float32) + flow32
    return flow32, land32


def render(spec: SceneSpec) -> SceneRender:
    spec.validate()
    h, w = spec.dims
    n = h * w
    order = sorted(range(len(spec.objects)), key=lambda i: spec.objects[i].z_order)

    coords = init_coord(spec.dims).reshape(n, 2)
    ix = coords[:, 0].astype(np.int64)
    iy = coords[:, 1].astype(np.int64)

    # Frame 0 composite: background everywhere, then objects back to front.
    obj_id0 = np.full(n, BACKGROUND_SLOT, dtype=np.int16)
    for i in order:
        inside = points_in_polygon(np.stack([ix, iy], axis=1), np.asarray(spec.objects[i].polygon))
        obj_id0[inside] = i + 1
    pt_id0 = np.stack([ix, iy], axis=1).astype(np.int32)

    # Analytic flow of the visible surface.
    flow = np.zeros((n, 2), dtype=np.float32)
    for i in order:
        vis = obj_id0 == i + 1
        if vis.any():
            flow[vis] = _landing(spec.objects[i].motion, pt_id0[vis])[0]

    # Frame 1 identity by forward winner assignment, composited by z.
    obj_id1 = np.full(n, BACKGROUND_SLOT, dtype=np.int16)
    pt_id1 = np.stack([ix, iy], axis=1).astype(np.int32)
    for i in order:
        mats = _interior_grid_points(np.asarray(spec.objects[i].polygon))
        if len(mats) == 0:
            continue
        _, land = _landing(spec.objects[i].motion, mats)
        q = np.rint(land).astype(np.int64)
        ok = (q[:, 0] >= 0) & (q[:, 0] <= w - 1) & (q[:, 1] >= 0) & (q[:, 1] <= h - 1)
        mats, land, q = mats[ok], land[ok], q[ok]
        if len(mats) == 0:
            continue
        qidx = q[:, 1] * w + q[:, 0]
        dist = np.linalg.norm(land.astype(np.float64) - q, axis=1)
        # Winner per landing pixel: closest to center, ties by material raster order.
        rank = np.lexsort((mats[:, 0], mats[:, 1], dist, qidx))
        qs, first = np.unique(qidx[rank], return_index=True)
        winners = rank[first]
        obj_id1[qs] = i + 1
        pt_id1[qs] = mats[winners].astype(np.int32)

    # Labels from the same float32 landing path.
    land_all = coords + flow
    q_all = np.rint(land_all).astype(np.int64)
    in_frame = (
        (q_all[:, 0] >= 0) & (q_all[:, 0] <= w - 1) & (q_all[:, 1] >= 0) & (q_all[:, 1] <= h - 1)
    )
    labels = np.full(n, OCC_IN, dtype=np.uint8)
    labels[~in_frame] = OCC_OUT
    qi = np.where(in_frame, q_all[:, 1] * w + q_all[:, 0], 0)
    same = (
        in_frame
        & (obj_id1[qi] == obj_id0)
        & (pt_id1[qi, 0] == pt_id0[:, 0])
        & (pt_id1[qi, 1] == pt_id0[:, 1])
    )
    labels[same] = NOC

    frame0 = _shade(spec.seed, obj_id0, pt_id0)
    frame1 = _shade(spec.seed, obj_id1, pt_id1)

    return SceneRender(
        spec=spec,
        frame0=frame0.reshape(h, w),
        frame1=frame1.reshape(h, w),
        flow=flow.reshape(h, w, 2),
        labels=labels.reshape(h, w),
        obj_id0=obj_id0.reshape(h, w),
        obj_id1=obj_id1.reshape(h, w),
        pt_id0=pt_id0.reshape(h, w, 2),
        pt_id1=pt_id1.reshape(h, w, 2),
    )


def _shade(seed: int, obj_id: np.ndarray, pt_id: np.ndarray) -> np.ndarray:
    """Grayscale texture keyed by (object slot, material point)."""
    vals = np.empty(obj_id.shape[0], dtype=np.float32)
    for slot in np.unique(obj_id):
        m = obj_id == slot
        vals[m] = hash_texture(seed, int(slot), pt_id[m, 0], pt_id[m, 1])
    return vals


def standard_suite(seed: int = 0) -> list[SceneSpec]:
    """Deterministic 64x64 evaluation suite covering the label taxonomy:
    static, fully visible translation, exit, covering, rotations with and
    without translation, a rotating L with a moving bar, and three movers.
    """
    s = int(seed)
    scenes = [
        SceneSpec(name="background_only", height=64, width=64, seed=s + 0),
        SceneSpec(
            name="slide_visible",
            height=64,
            width=64,
            seed=s + 1,
            objects=(
                ObjectSpec(
                    name="tile",
                    polygon=rect(19.5, 21.5, 31.5, 33.5),
                    z_order=1,
                    motion=RigidMotion(translation=(7.0, 5.0)),
                ),
            ),
        ),
        SceneSpec(
            name="slide_out",
            height=64,
            width=64,
            seed=s + 2,
            objects=(
                ObjectSpec(
                    name="runner",
                    polygon=rect(45.5, 19.5, 57.5, 31.5),
                    z_order=1,
                    motion=RigidMotion(translation=(12.0, 0.0)),
                ),
            ),
        ),
        SceneSpec(
            name="cover",
            height=64,
            width=64,
            seed=s + 3,
            objects=(
                ObjectSpec(
                    name="anvil",
                    polygon=rect(9.5, 19.5, 25.5, 35.5),
                    z_order=1,
                ),
                ObjectSpec(
                    name="slider",
                    polygon=rect(33.5, 19.5, 49.5, 35.5),
                    z_order=2,
                    motion=RigidMotion(translation=(-12.0, 0.0)),
                ),
            ),
        ),
        SceneSpec(
            name="rotor_plate",
            height=64,
            width=64,
            seed=s + 4,
            objects=(
                ObjectSpec(
                    name="sheet",
                    polygon=rect(-16.5, -16.5, 79.5, 79.5),
                    z_order=1,
                    motion=RigidMotion(theta=0.15, center=(26.0, 8.0)),
                ),
                ObjectSpec(
                    name="plate",
                    polygon=rect(-0.5, -0.5, 29.5, 12.5),
                    z_order=2,
                ),
            ),
        ),
        SceneSpec(
            name="rotor_slide",
            height=64,
            width=64,
            seed=s + 5,
            objects=(
                ObjectSpec(
                    name="sheet",
                    polygon=rect(-16.5, -16.5, 79.5, 79.5),
                    z_order=1,
                    motion=RigidMotion(theta=0.1, center=(20.0, 10.0), translation=(2.0, 3.0)),
                ),
                ObjectSpec(
                    name="plate",
                    polygon=rect(-0.5, -0.5, 25.5, 10.5),
                    z_order=2,
                ),
            ),
        ),
        SceneSpec(
            name="swing_bar",
            height=64,
            width=64,
            seed=s + 6,
            objects=(
                ObjectSpec(
                    name="ell",
                    polygon=(
                        (13.5, 13.5),
                        (25.5, 13.5),
                        (25.5, 37.5),
                        (37.5, 37.5),
                        (37.5, 45.5),
                        (13.5, 45.5),
                    ),
                    z_order=2,
                    motion=RigidMotion(theta=0.12, center=(14.0, 45.0)),
                ),
                ObjectSpec(
                    name="bar",
                    polygon=rect(39.5, 17.5, 55.5, 25.5),
                    z_order=3,
                    motion=RigidMotion(translation=(-6.0, 4.0)),
                ),
            ),
        ),
        SceneSpec(
            name="three_movers",
            height=64,
            width=64,
            seed=s + 7,
            objects=(
                ObjectSpec(
                    name="east",
                    polygon=rect(51.5, 5.5, 61.5, 15.5),
                    z_order=1,
                    motion=RigidMotion(translation=(8.0, 0.0)),
                ),
                ObjectSpec(
                    name="block",
                    polygon=rect(13.5, 25.5, 23.5, 35.5),
                    z_order=2,
                ),
                ObjectSpec(
                    name="drop",
                    polygon=rect(13.5, 39.5, 23.5, 49.5),
                    z_order=3,
                    motion=RigidMotion(translation=(0.0, -8.0)),
                ),
            ),
        ),
    ]
    for sc in scenes:
        sc.validate()
    return scenes


def suite_scene(name: str, seed: int = 0) -> SceneSpec:
    for sc in standard_suite(seed):
        if sc.name == name:
            return sc
    raise UsageError(f"no suite scene named {name!r}")
