# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled kernels. numpy_impl.py holds the reference semantics; the two
backends follow the same float32 tap ordering so results agree to rounding
(bit-exactly on the pure-comparison paths)."""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport floorf

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float32_t f32


def bilinear_sample(field, coords, bint zero_pad):
    """Sample (H, W, C) float32 field at (N, 2) coords, returning (N, C)."""
    field = np.ascontiguousarray(field, dtype=np.float32)
    coords = np.ascontiguousarray(coords, dtype=np.float32)
    cdef const f32[:, :, ::1] f = field
    cdef const f32[:, ::1] cc = coords
    cdef Py_ssize_t h = f.shape[0], w = f.shape[1], c = f.shape[2]
    cdef Py_ssize_t n = cc.shape[0]
    out_arr = np.zeros((n, c), dtype=np.float32)
    cdef f32[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, t, x0, y0, ix, iy
    cdef f32 x, y, wx, wy
    cdef f32 one = 1.0
    cdef f32 tw[4]
    cdef int tdx[4]
    cdef int tdy[4]
    tdx[0] = 0; tdy[0] = 0
    tdx[1] = 1; tdy[1] = 0
    tdx[2] = 0; tdy[2] = 1
    tdx[3] = 1; tdy[3] = 1
    for i in range(n):
        x = cc[i, 0]
        y = cc[i, 1]
        if not zero_pad:
            if x < 0.0:
                x = 0.0
            elif x > <f32>(w - 1):
                x = <f32>(w - 1)
            if y < 0.0:
                y = 0.0
            elif y > <f32>(h - 1):
                y = <f32>(h - 1)
        wx = x - floorf(x)
        wy = y - floorf(y)
        x0 = <Py_ssize_t>floorf(x)
        y0 = <Py_ssize_t>floorf(y)
        tw[0] = (one - wx) * (one - wy)
        tw[1] = wx * (one - wy)
        tw[2] = (one - wx) * wy
        tw[3] = wx * wy
        for t in range(4):
            ix = x0 + tdx[t]
            iy = y0 + tdy[t]
            if zero_pad:
                if ix < 0 or ix >= w or iy < 0 or iy >= h:
                    continue
            else:
                if ix < 0:
                    ix = 0
                elif ix >= w:
                    ix = w - 1
                if iy < 0:
                    iy = 0
                elif iy >= h:
                    iy = h - 1
            for j in range(c):
                out[i, j] += f[iy, ix, j] * tw[t]
    return out_arr


def corr_indexed(pt_q, obj_q, pt_k, obj_k, double w_pt, double w_obj):
    """All-pairs similarity between indexed descriptors, (Nq, Nk) float32."""
    pq_arr = np.ascontiguousarray(np.asarray(pt_q).reshape(-1), dtype=np.int64)
    oq_arr = np.ascontiguousarray(np.asarray(obj_q).reshape(-1), dtype=np.int64)
    pk_arr = np.ascontiguousarray(np.asarray(pt_k).reshape(-1), dtype=np.int64)
    ok_arr = np.ascontiguousarray(np.asarray(obj_k).reshape(-1), dtype=np.int64)
    cdef const i64[::1] pq = pq_arr
    cdef const i64[::1] oq = oq_arr
    cdef const i64[::1] pk = pk_arr
    cdef const i64[::1] ok = ok_arr
    cdef Py_ssize_t nq = pq.shape[0], nk = pk.shape[0]
    out_arr = np.empty((nq, nk), dtype=np.float32)
    cdef f32[:, ::1] out = out_arr
    cdef f32 wpt = <f32>w_pt, wobj = <f32>w_obj
    cdef Py_ssize_t i, j
    cdef i64 pqi, oqi
    cdef bint pv, ov
    cdef f32 v
    for i in range(nq):
        pqi = pq[i]
        oqi = oq[i]
        pv = pqi >= 0
        ov = oqi >= 0
        for j in range(nk):
            v = wpt if (pv and pk[j] == pqi) else 0.0
            if ov and ok[j] == oqi:
                v = v + wobj
            out[i, j] = v
    return out_arr


def cost_volume_dense(feat0, feat1, flow, int radius):
    """Local cost volume (H, W, K*K) of feat0 against warped feat1."""
    feat0 = np.ascontiguousarray(feat0, dtype=np.float32)
    feat1 = np.ascontiguousarray(feat1, dtype=np.float32)
    flow = np.ascontiguousarray(flow, dtype=np.float32)
    cdef const f32[:, :, ::1] f0 = feat0
    cdef const f32[:, :, ::1] f1 = feat1
    cdef const f32[:, :, ::1] fl = flow
    cdef Py_ssize_t h = f0.shape[0], w = f0.shape[1], d = f0.shape[2]
    cdef Py_ssize_t k = 2 * radius + 1
    out_arr = np.zeros((h, w, k * k), dtype=np.float32)
    cdef f32[:, :, ::1] out = out_arr
    cdef Py_ssize_t py, px, ch, t, j, x0, y0, ix, iy
    cdef int dy, dx
    cdef f32 bx, by, x, y, wx, wy, dot, s
    cdef f32 one = 1.0
    cdef f32 tw[4]
    cdef int tdx[4]
    cdef int tdy[4]
    tdx[0] = 0; tdy[0] = 0
    tdx[1] = 1; tdy[1] = 0
    tdx[2] = 0; tdy[2] = 1
    tdx[3] = 1; tdy[3] = 1
    for py in range(h):
        for px in range(w):
            bx = <f32>px + fl[py, px, 0]
            by = <f32>py + fl[py, px, 1]
            ch = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    x = bx + <f32>dx
                    y = by + <f32>dy
                    wx = x - floorf(x)
                    wy = y - floorf(y)
                    x0 = <Py_ssize_t>floorf(x)
                    y0 = <Py_ssize_t>floorf(y)
                    tw[0] = (one - wx) * (one - wy)
                    tw[1] = wx * (one - wy)
                    tw[2] = (one - wx) * wy
                    tw[3] = wx * wy
                    dot = 0.0
                    for j in range(d):
                        s = 0.0
                        for t in range(4):
                            ix = x0 + tdx[t]
                            iy = y0 + tdy[t]
                            if ix < 0 or ix >= w or iy < 0 or iy >= h:
                                continue
                            s = s + f1[iy, ix, j] * tw[t]
                        dot = dot + f0[py, px, j] * s
                    out[py, px, ch] = dot
                    ch += 1
    return out_arr


def cost_volume_indexed(pt0, obj0, pt1, obj1, flow, int radius,
                        double w_pt, double w_obj):
    """Local cost volume over indexed maps, matching the one-hot dense form."""
    pt0_arr = np.ascontiguousarray(pt0, dtype=np.int64)
    obj0_arr = np.ascontiguousarray(obj0, dtype=np.int64)
    pt1_arr = np.ascontiguousarray(pt1, dtype=np.int64)
    obj1_arr = np.ascontiguousarray(obj1, dtype=np.int64)
    flow = np.ascontiguousarray(flow, dtype=np.float32)
    cdef const i64[:, ::1] p0 = pt0_arr
    cdef const i64[:, ::1] o0 = obj0_arr
    cdef const i64[:, ::1] p1 = pt1_arr
    cdef const i64[:, ::1] o1 = obj1_arr
    cdef const f32[:, :, ::1] fl = flow
    cdef Py_ssize_t h = p0.shape[0], w = p0.shape[1]
    cdef Py_ssize_t k = 2 * radius + 1
    out_arr = np.zeros((h, w, k * k), dtype=np.float32)
    cdef f32[:, :, ::1] out = out_arr
    cdef f32 wpt = <f32>w_pt, wobj = <f32>w_obj
    cdef Py_ssize_t py, px, ch, t, x0, y0, ix, iy
    cdef int dy, dx
    cdef i64 ptc, obc
    cdef bint pv, ov
    cdef f32 bx, by, x, y, wx, wy, acc, sim
    cdef f32 one = 1.0
    cdef f32 tw[4]
    cdef int tdx[4]
    cdef int tdy[4]
    tdx[0] = 0; tdy[0] = 0
    tdx[1] = 1; tdy[1] = 0
    tdx[2] = 0; tdy[2] = 1
    tdx[3] = 1; tdy[3] = 1
    for py in range(h):
        for px in range(w):
            bx = <f32>px + fl[py, px, 0]
            by = <f32>py + fl[py, px, 1]
            ptc = p0[py, px]
            obc = o0[py, px]
            pv = ptc >= 0
            ov = obc >= 0
            ch = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    x = bx + <f32>dx
                    y = by + <f32>dy
                    wx = x - floorf(x)
                    wy = y - floorf(y)
                    x0 = <Py_ssize_t>floorf(x)
                    y0 = <Py_ssize_t>floorf(y)
                    tw[0] = (one - wx) * (one - wy)
                    tw[1] = wx * (one - wy)
                    tw[2] = (one - wx) * wy
                    tw[3] = wx * wy
                    acc = 0.0
                    for t in range(4):
                        ix = x0 + tdx[t]
                        iy = y0 + tdy[t]
                        if ix < 0 or ix >= w or iy < 0 or iy >= h:
                            continue
                        sim = wpt if (pv and p1[iy, ix] == ptc) else 0.0
                        if ov and o1[iy, ix] == obc:
                            sim = sim + wobj
                        acc = acc + tw[t] * sim
                    out[py, px, ch] = acc
                    ch += 1
    return out_arr
