"""Rigid-motion fitting and rotation-aware distances.

Under rotation, the flow difference between two points of one object grows
with their separation, so the plain separation ``|p - ref|`` is a biased
proxy for how transferable the reference's motion is. Fitting the rigid
motion around the reference recovers the rotation center O, allowing the
distance ``| |AB| - |AO| |`` (A = reference, B = pixel), which discounts
separation along the circle through A around O. A "radial" variant
``| |BO| - |AO| |`` is selectable; both reduce to sensible values only
when the fit is non-degenerate, and callers must fall back to Euclidean
distance explicitly when it is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GridDims, UsageError, as_flow, init_coord

NONE = "none"
EUCLIDEAN = "euclidean"
UNIFORM_LAW = "uniform_law"
DISTANCE_MODES = (NONE, EUCLIDEAN, UNIFORM_LAW)

LITERAL = "literal"
RADIAL = "radial"


@dataclass
class RigidMotionFit:
    """Least-squares rigid motion q = R(theta) p + translation.

    center is the fixed point (I - R)^-1 t, defined only when |theta| is
    large enough for the solve to be well conditioned; otherwise the fit is
    degenerate (pure translation) and center is None.
    """

    theta: float
    translation: np.ndarray
    center: np.ndarray | None
    residual: float
    n_points: int

    @property
    def degenerate(self) -> bool:
        return self.center is None

    def rotation_matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]], dtype=np.float64)

    def predict(self, points: np.ndarray) -> np.ndarray:
        """Transformed coordinates of (..., 2) points, float64."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation_matrix().T + self.translation

    def predicted_flow(self, points: np.ndarray) -> np.ndarray:
        return self.predict(points) - np.asarray(points, dtype=np.float64)


def fit_rigid_motion(
    flow: np.ndarray,
    anchor: tuple[int, int],
    window_k: int = 5,
    theta_min: float = 1e-3,
    exclude: np.ndarray | None = None,
    include: np.ndarray | None = None,
) -> RigidMotionFit:
    """Fit a rigid motion to p -> p + flow(p) over a window around anchor.

    anchor is (x, y) and must be in frame. exclude masks pixels out of the
    fit (e.g. occlusion estimates, whose flow is unreliable); include
    restricts the fit to a membership mask (e.g. same-object pixels). If
    the masks empty the window, the full clipped window is used instead.
    Everything runs in float64; the 2D orthogonal Procrustes solution gives
    theta = atan2(sum cross, sum dot) over demeaned correspondences.
    """
    f = as_flow(flow)
    h, w = f.shape[:2]
    if window_k < 3 or window_k % 2 == 0:
        raise UsageError(f"window_k must be odd and >= 3, got {window_k}")
    ax, ay = int(anchor[0]), int(anchor[1])
    if not (0 <= ax <= w - 1 and 0 <= ay <= h - 1):
        raise UsageError(f"anchor {anchor} outside frame {GridDims(h, w)}")
    r = window_k // 2
    x0, x1 = max(0, ax - r), min(w - 1, ax + r)
    y0, y1 = max(0, ay - r), min(h - 1, ay + r)
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    keep = np.ones(gx.shape, dtype=bool)
    if exclude is not None:
        keep &= ~np.asarray(exclude, dtype=bool)[gy, gx]
    if include is not None:
        keep &= np.asarray(include, dtype=bool)[gy, gx]
    if not keep.any():
        keep = np.ones(gx.shape, dtype=bool)
    px = gx[keep].astype(np.float64)
    py = gy[keep].astype(np.float64)
    p = np.stack([px, py], axis=1)
    q = p + f[gy[keep], gx[keep]].astype(np.float64)

    pc = p - p.mean(axis=0)
    qc = q - q.mean(axis=0)
    dot = float((pc * qc).sum())
    cross = float((pc[:, 0] * qc[:, 1] - pc[:, 1] * qc[:, 0]).sum())
    theta = math.atan2(cross, dot) if (dot != 0.0 or cross != 0.0) else 0.0
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    translation = q.mean(axis=0) - rot @ p.mean(axis=0)
    resid = q - (p @ rot.T + translation)
    residual = float(np.sqrt((resid**2).sum(axis=1).mean()))

    center = None
    if abs(theta) >= theta_min:
        center = np.linalg.solve(np.eye(2) - rot, translation)
    return RigidMotionFit(
        theta=theta,
        translation=translation,
        center=center,
        residual=residual,
        n_points=len(p),
    )


def euclidean_distance(p_pre: np.ndarray, p_ref: np.ndarray) -> np.ndarray:
    """Plain L2 distance over trailing (x, y) axes."""
    a = np.asarray(p_pre, dtype=np.float64)
    b = np.asarray(p_ref, dtype=np.float64)
    return np.linalg.norm(a - b, axis=-1)


def uniform_law_distance(
    p_pre: np.ndarray,
    p_ref: np.ndarray,
    motion: RigidMotionFit,
    variant: str = LITERAL,
) -> np.ndarray:
    """Rotation-aware distance between pixels B = p_pre and references
    A = p_ref given the fitted rotation center O.

    literal: | |AB| - |AO| |. radial: | |BO| - |AO| |. The literal form is
    nonzero for B = A whenever A is off-center; the radial form measures
    the gap between the two circles through A and B around O.
    """
    if motion.degenerate:
        raise UsageError("uniform-law distance undefined for a degenerate fit; use Euclidean")
    a = np.asarray(p_ref, dtype=np.float64)
    b = np.asarray(p_pre, dtype=np.float64)
    ao = np.linalg.norm(a - motion.center, axis=-1)
    if variant == LITERAL:
        ab = np.linalg.norm(a - b, axis=-1)
        return np.abs(ab - ao)
    if variant == RADIAL:
        bo = np.linalg.norm(b - motion.center, axis=-1)
        return np.abs(bo - ao)
    raise UsageError(f"unknown uniform-law variant {variant!r}")


def fit_at_anchors(
    flow0: np.ndarray,
    anchors: np.ndarray,
    window_k: int = 5,
    theta_min: float = 1e-3,
    exclude: np.ndarray | None = None,
    include_for=None,
) -> dict[tuple[int, int], RigidMotionFit]:
    """Fit the rigid motion once per distinct anchor (x, y) row.

    include_for, if given, maps an anchor tuple to a membership mask for
    that anchor's fit (typically same-object pixels).
    """
    fits: dict[tuple[int, int], RigidMotionFit] = {}
    for ax, ay in np.unique(np.asarray(anchors, dtype=np.int64).reshape(-1, 2), axis=0):
        key = (int(ax), int(ay))
        include = include_for(key) if include_for is not None else None
        fits[key] = fit_rigid_motion(
            flow0, key, window_k=window_k, theta_min=theta_min, exclude=exclude, include=include
        )
    return fits


def distance_field(
    pairs: np.ndarray,
    flow0: np.ndarray,
    mode: str = UNIFORM_LAW,
    window_k: int = 5,
    theta_min: float = 1e-3,
    exclude: np.ndarray | None = None,
    include_for=None,
    variant: str = LITERAL,
    fits: dict[tuple[int, int], RigidMotionFit] | None = None,
) -> np.ndarray:
    """Per-pixel distance from p to its reference pairs(p), float32 (H, W).

    NONE gives a zero field. EUCLIDEAN gives |p - pairs(p)|. UNIFORM_LAW
    fits the rigid motion around each distinct reference (anchored at
    rint(pairs), where flow is reliable) and applies the uniform-law
    distance, falling back to Euclidean per pixel where the fit is
    degenerate. Precomputed fits may be passed to share work with
    refinement.
    """
    if mode not in DISTANCE_MODES:
        raise UsageError(f"unknown distance mode {mode!r}")
    f = as_flow(flow0)
    h, w = f.shape[:2]
    p_ref = np.asarray(pairs, dtype=np.float64)
    if p_ref.shape != (h, w, 2):
        raise UsageError(f"pairs shape {pairs.shape} does not match flow {f.shape}")
    if mode == NONE:
        return np.zeros((h, w), dtype=np.float32)
    coords = init_coord(GridDims(h, w)).astype(np.float64)
    euclid = euclidean_distance(coords, p_ref)
    if mode == EUCLIDEAN:
        return euclid.astype(np.float32)

    anchors = np.rint(p_ref).astype(np.int64).reshape(-1, 2)
    if fits is None:
        fits = fit_at_anchors(
            f, anchors, window_k=window_k, theta_min=theta_min, exclude=exclude, include_for=include_for
        )
    out = euclid.reshape(-1).copy()
    flat_ref = p_ref.reshape(-1, 2)
    flat_coords = coords.reshape(-1, 2)
    keys = anchors[:, 0] + anchors[:, 1] * np.int64(w)
    for (ax, ay), fit in fits.items():
        if fit.degenerate:
            continue
        sel = keys == (ax + ay * w)
        if sel.any():
            out[sel] = uniform_law_distance(flat_coords[sel], flat_ref[sel], fit, variant=variant)
    return out.reshape(h, w).astype(np.float32)
