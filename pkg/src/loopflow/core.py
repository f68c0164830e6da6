"""Shared conventions: grids, coordinates, flow fields, sampling.

Conventions used across the package:

* Images and fields are row-major numpy arrays of shape (H, W) or (H, W, C).
* A coordinate is (x, y) with x the column and y the row; the origin is the
  center of the top-left pixel. Coordinate arrays store x in channel 0 and
  y in channel 1.
* A flow field is float32 of shape (H, W, 2) holding (dx, dy) per pixel.
* Rounding to pixel centers uses numpy's rint (ties to even). A rounded
  coordinate is in frame iff 0 <= x <= W-1 and 0 <= y <= H-1.
* Ground-truth occlusion labels are uint8: 0 = NOC, 1 = OCC_IN, 2 = OCC_OUT.
  Estimated occlusion is binary uint8: 0 = NOC, 1 = OCC.
"""
from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

# Ground-truth label values.
NOC = 0
OCC_IN = 1
OCC_OUT = 2
# Estimated occlusion values (binary).
EST_NOC = 0
EST_OCC = 1


class UsageError(ValueError):
    """A caller violated an API contract (bad shapes, bad options)."""


class DataError(RuntimeError):
    """An input file or dataset is missing or malformed."""


class InvariantError(AssertionError):
    """An internal consistency check failed."""


class Padding(enum.Enum):
    """Out-of-frame policy for sampling."""

    ZERO = "zero"
    CLAMP = "clamp"


class GridDims(NamedTuple):
    """Height and width of a pixel grid."""

    height: int
    width: int

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def validate(self) -> "GridDims":
        if self.height < 1 or self.width < 1:
            raise UsageError(f"grid dims must be positive, got {self!r}")
        return self


def init_coord(dims: GridDims) -> np.ndarray:
    """Pixel-center coordinates of every pixel, float32 (H, W, 2) as (x, y)."""
    h, w = GridDims(*dims).validate()
    xs = np.arange(w, dtype=np.float32)
    ys = np.arange(h, dtype=np.float32)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def as_flow(arr: np.ndarray) -> np.ndarray:
    """Validate and convert an array to a float32 (H, W, 2) flow field."""
    a = np.asarray(arr)
    if a.ndim != 3 or a.shape[2] != 2:
        raise UsageError(f"flow field must have shape (H, W, 2), got {a.shape}")
    return np.ascontiguousarray(a, dtype=np.float32)


def target_coords(flow: np.ndarray, init: np.ndarray | None = None) -> np.ndarray:
    """Continuous landing coordinates init + flow, float32 (H, W, 2)."""
    f = as_flow(flow)
    if init is None:
        init = init_coord(GridDims(f.shape[0], f.shape[1]))
    elif init.shape != f.shape:
        raise UsageError(
            f"init coords shape {init.shape} does not match flow shape {f.shape}"
        )
    return init + f


def round_landings(coords: np.ndarray) -> np.ndarray:
    """Round continuous coordinates to integer pixel indices (ties to even)."""
    return np.rint(coords).astype(np.int64)


def in_frame_mask(coords: np.ndarray, dims: GridDims) -> np.ndarray:
    """Boolean mask of coordinates whose rounded landing lies inside the grid."""
    h, w = GridDims(*dims).validate()
    q = np.rint(np.asarray(coords, dtype=np.float32))
    return (q[..., 0] >= 0) & (q[..., 0] <= w - 1) & (q[..., 1] >= 0) & (q[..., 1] <= h - 1)


def sample_bilinear(
    field: np.ndarray, coords: np.ndarray, padding: Padding = Padding.ZERO
) -> np.ndarray:
    """Bilinearly sample a (H, W, C) float32 field at continuous (x, y) coords.

    With ZERO padding, taps outside the grid contribute zeros; with CLAMP,
    coordinates are clamped to the valid range before sampling. Sampling at
    integer in-frame coordinates reproduces stored values bit-exactly.

    coords may have any leading shape (..., 2); the result is (..., C).
    """
    from .kernels import bilinear_sample

    f = np.asarray(field)
    if f.ndim == 2:
        f = f[:, :, None]
    if f.ndim != 3:
        raise UsageError(f"field must have shape (H, W, C), got {field.shape}")
    c = np.asarray(coords)
    if c.shape[-1] != 2:
        raise UsageError(f"coords must have trailing dim 2, got {c.shape}")
    if not isinstance(padding, Padding):
        raise UsageError(f"padding must be a Padding, got {padding!r}")
    f = np.ascontiguousarray(f, dtype=np.float32)
    flat = np.ascontiguousarray(c.reshape(-1, 2), dtype=np.float32)
    out = bilinear_sample(f, flat, padding is Padding.ZERO)
    out = out.reshape(c.shape[:-1] + (f.shape[2],))
    if np.asarray(field).ndim == 2:
        out = out[..., 0]
    return out


def warp_backward(
    field: np.ndarray, flow: np.ndarray, padding: Padding = Padding.ZERO
) -> np.ndarray:
    """Sample `field` at init + flow: the classic backward warp."""
    return sample_bilinear(field, target_coords(flow), padding)
