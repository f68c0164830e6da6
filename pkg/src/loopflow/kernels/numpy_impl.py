"""Pure numpy implementations of the hot kernels.

These are the reference implementations; the optional Cython module in
_native.pyx mirrors the same signatures and must agree numerically.

Shared conventions:
* fields are float32 (H, W, C), coords are float32 (..., 2) as (x, y)
* indexed feature maps are int32 point ids and int16 object ids, -1 = null
* cost volume channels enumerate offsets row-major: dy outer, dx inner,
  both from -radius to +radius
"""
from __future__ import annotations

import numpy as np


def _flat_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.divmod(np.arange(h * w, dtype=np.int64), w)
    return xs.astype(np.float32), ys.astype(np.float32)


def bilinear_sample(field: np.ndarray, coords: np.ndarray, zero_pad: bool) -> np.ndarray:
    """Sample (H, W, C) float32 field at (N, 2) coords, returning (N, C).

    zero_pad=True: out-of-grid taps read zeros. zero_pad=False: coords are
    clamped into the grid first.
    """
    field = np.ascontiguousarray(field, dtype=np.float32)
    coords = np.ascontiguousarray(coords, dtype=np.float32)
    h, w, c = field.shape
    flat = field.reshape(h * w, c)
    x = coords[:, 0]
    y = coords[:, 1]
    if not zero_pad:
        x = np.clip(x, np.float32(0.0), np.float32(w - 1))
        y = np.clip(y, np.float32(0.0), np.float32(h - 1))
    x0f = np.floor(x)
    y0f = np.floor(y)
    wx = x - x0f
    wy = y - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    out = np.zeros((coords.shape[0], c), dtype=np.float32)
    taps = (
        (0, 0, (1 - wx) * (1 - wy)),
        (1, 0, wx * (1 - wy)),
        (0, 1, (1 - wx) * wy),
        (1, 1, wx * wy),
    )
    for dx, dy, wgt in taps:
        ix = x0 + dx
        iy = y0 + dy
        if zero_pad:
            ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
            vals = flat[np.where(ok, iy * w + ix, 0)]
            vals[~ok] = 0.0
        else:
            vals = flat[np.clip(iy, 0, h - 1) * w + np.clip(ix, 0, w - 1)]
        out += vals * wgt.astype(np.float32)[:, None]
    return out


def corr_indexed(
    pt_q: np.ndarray,
    obj_q: np.ndarray,
    pt_k: np.ndarray,
    obj_k: np.ndarray,
    w_pt: float,
    w_obj: float,
) -> np.ndarray:
    """All-pairs similarity between indexed descriptors, (Nq, Nk) float32.

    sim = w_pt * [point ids equal] + w_obj * [object ids equal]; null ids
    (negative) never match anything, matching the all-zero descriptor of a
    null pixel.
    """
    pt_q = np.asarray(pt_q).reshape(-1)
    obj_q = np.asarray(obj_q).reshape(-1)
    pt_k = np.asarray(pt_k).reshape(-1)
    obj_k = np.asarray(obj_k).reshape(-1)
    eq_pt = (pt_q[:, None] == pt_k[None, :]) & (pt_q >= 0)[:, None]
    eq_obj = (obj_q[:, None] == obj_k[None, :]) & (obj_q >= 0)[:, None]
    out = np.float32(w_pt) * eq_pt.astype(np.float32)
    out += np.float32(w_obj) * eq_obj.astype(np.float32)
    return out


def cost_volume_dense(
    feat0: np.ndarray, feat1: np.ndarray, flow: np.ndarray, radius: int
) -> np.ndarray:
    """Local cost volume (H, W, K*K) of feat0 against feat1 warped by flow.

    Channel (dy+r)*(2r+1) + (dx+r) holds <feat0[p], feat1 at p+flow+(dx,dy)>
    with zero padding outside the frame.
    """
    feat0 = np.ascontiguousarray(feat0, dtype=np.float32)
    feat1 = np.ascontiguousarray(feat1, dtype=np.float32)
    h, w, d = feat0.shape
    n = h * w
    k = 2 * radius + 1
    gx, gy = _flat_grid(h, w)
    flow = np.ascontiguousarray(flow, dtype=np.float32).reshape(n, 2)
    base = np.stack([gx + flow[:, 0], gy + flow[:, 1]], axis=1)
    f0 = feat0.reshape(n, d)
    out = np.empty((n, k * k), dtype=np.float32)
    ch = 0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            off = np.array([dx, dy], dtype=np.float32)
            sampled = bilinear_sample(feat1, base + off, True)
            out[:, ch] = np.einsum("nd,nd->n", f0, sampled)
            ch += 1
    return out.reshape(h, w, k * k)


def cost_volume_indexed(
    pt0: np.ndarray,
    obj0: np.ndarray,
    pt1: np.ndarray,
    obj1: np.ndarray,
    flow: np.ndarray,
    radius: int,
    w_pt: float,
    w_obj: float,
) -> np.ndarray:
    """Local cost volume over indexed maps, algebraically equal to the dense
    volume of the corresponding one-hot descriptors.

    Each tap of the bilinear blend contributes its weight times the integer
    id similarity, so no dense descriptors are materialized.
    """
    pt0 = np.asarray(pt0)
    h, w = pt0.shape
    n = h * w
    k = 2 * radius + 1
    pt0f = pt0.reshape(n)
    obj0f = np.asarray(obj0).reshape(n)
    pt1f = np.asarray(pt1).reshape(n)
    obj1f = np.asarray(obj1).reshape(n)
    gx, gy = _flat_grid(h, w)
    flow = np.ascontiguousarray(flow, dtype=np.float32).reshape(n, 2)
    bx = gx + flow[:, 0]
    by = gy + flow[:, 1]
    w_pt32 = np.float32(w_pt)
    w_obj32 = np.float32(w_obj)
    valid_pt = pt0f >= 0
    valid_obj = obj0f >= 0
    out = np.empty((n, k * k), dtype=np.float32)
    ch = 0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            x = bx + np.float32(dx)
            y = by + np.float32(dy)
            x0f = np.floor(x)
            y0f = np.floor(y)
            wx = x - x0f
            wy = y - y0f
            x0 = x0f.astype(np.int64)
            y0 = y0f.astype(np.int64)
            acc = np.zeros(n, dtype=np.float32)
            taps = (
                (0, 0, (1 - wx) * (1 - wy)),
                (1, 0, wx * (1 - wy)),
                (0, 1, (1 - wx) * wy),
                (1, 1, wx * wy),
            )
            for tx, ty, wgt in taps:
                ix = x0 + tx
                iy = y0 + ty
                ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
                idx = np.where(ok, iy * w + ix, 0)
                sim = w_pt32 * ((pt1f[idx] == pt0f) & valid_pt).astype(np.float32)
                sim += w_obj32 * ((obj1f[idx] == obj0f) & valid_obj).astype(np.float32)
                acc += np.where(ok, wgt.astype(np.float32) * sim, np.float32(0.0))
            out[:, ch] = acc
            ch += 1
    return out.reshape(h, w, k * k)
