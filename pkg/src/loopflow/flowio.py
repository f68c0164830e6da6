"""File formats: Middlebury .flo, PNG frames and masks, flow color wheel,
scene datasets on disk, and Sintel-layout ingestion.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .core import DataError, EST_NOC, EST_OCC, NOC, OCC_IN, OCC_OUT, UsageError, as_flow
from .scenes import SceneRender, SceneSpec

FLO_MAGIC = 202021.25

_GT_CODES = {OCC_OUT: 0, OCC_IN: 128, NOC: 255}
_EST_CODES = {EST_OCC: 0, EST_NOC: 255}


def flo_write(path, flow: np.ndarray) -> None:
    """Middlebury format: float32 magic 202021.25, int32 width, int32
    height, then row-major interleaved float32 (dx, dy) pairs."""
    f = as_flow(flow)
    if not np.isfinite(f).all():
        raise UsageError("refusing to write non-finite flow values")
    h, w = f.shape[:2]
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(f.astype("<f4").tobytes())


def flo_read(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise DataError(f"{path}: truncated header ({len(raw)} bytes)")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise DataError(f"{path}: invalid magic {magic!r} (expected {FLO_MAGIC})")
    w, h = (int(v) for v in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if w <= 0 or h <= 0:
        raise DataError(f"{path}: invalid dims {w}x{h}")
    expected = 12 + 8 * w * h
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes for {w}x{h}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=12)
    return data.reshape(h, w, 2).copy()


def flow_to_png(flow: np.ndarray, max_norm: float | None = None) -> np.ndarray:
    """Color-wheel rendering: hue = atan2(dy, dx), saturation =
    min(norm/max_norm, 1), value 1 — zero flow is white. Returns uint8
    (H, W, 3). max_norm=None scales by the field's own maximum."""
    f = as_flow(flow).astype(np.float64)
    norm = np.linalg.norm(f, axis=-1)
    if max_norm is None:
        max_norm = float(norm.max())
        if max_norm == 0.0:
            max_norm = 1.0
    if max_norm <= 0:
        raise UsageError(f"max_norm must be positive, got {max_norm}")
    hue = (np.arctan2(f[..., 1], f[..., 0]) / (2 * np.pi)) % 1.0
    sat = np.minimum(norm / max_norm, 1.0)
    return (_hsv_to_rgb(hue, sat, np.ones_like(sat)) * 255.0).round().astype(np.uint8)


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [v, q, p, p, t, v])
    g = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [t, v, v, q, p, p])
    b = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def save_image(path, array: np.ndarray) -> None:
    """Write uint8 grayscale/RGB, or a float image in [0, 1] as 8-bit."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        a = (np.clip(a, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(a).save(path)


def load_gray(path) -> np.ndarray:
    """8-bit grayscale image as float32 in [0, 1]."""
    try:
        img = Image.open(path)
    except FileNotFoundError:
        raise DataError(f"missing image {path}")
    except OSError as e:
        raise DataError(f"unreadable image {path}: {e}")
    return np.asarray(img.convert("L"), dtype=np.float32) / 255.0


def encode_gt_labels(labels: np.ndarray) -> np.ndarray:
    """Three-way labels to 8-bit gray: occ_out 0, occ_in 128, noc 255."""
    lab = np.asarray(labels)
    out = np.zeros(lab.shape, dtype=np.uint8)
    known = np.zeros(lab.shape, dtype=bool)
    for value, code in _GT_CODES.items():
        m = lab == value
        out[m] = code
        known |= m
    if not known.all():
        raise UsageError(f"unknown label values {np.unique(lab[~known])}")
    return out


def decode_gt_labels(img: np.ndarray) -> np.ndarray:
    inv = {code: value for value, code in _GT_CODES.items()}
    a = np.asarray(img)
    out = np.zeros(a.shape, dtype=np.uint8)
    known = np.zeros(a.shape, dtype=bool)
    for code, value in inv.items():
        m = a == code
        out[m] = value
        known |= m
    if not known.all():
        raise DataError(f"unknown mask codes {np.unique(a[~known])}")
    return out


def encode_occlusion(est: np.ndarray) -> np.ndarray:
    """Binary estimate to 8-bit gray: occ 0, noc 255."""
    e = np.asarray(est)
    return np.where(e == EST_OCC, np.uint8(0), np.uint8(255))


def decode_occlusion(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img)
    bad = ~np.isin(a, (0, 255))
    if bad.any():
        raise DataError(f"unknown occlusion codes {np.unique(a[bad])}")
    return np.where(a == 0, np.uint8(EST_OCC), np.uint8(EST_NOC))


def write_scene_dataset(render: SceneRender, out_dir) -> Path:
    """Persist a rendered scene: PNGs for humans, exact arrays for reload."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_image(d / "frame0.png", render.frame0)
    save_image(d / "frame1.png", render.frame1)
    save_image(d / "labels.png", encode_gt_labels(render.labels))
    flo_write(d / "flow.flo", render.flow)
    (d / "scene.json").write_text(json.dumps(render.spec.to_dict(), indent=2) + "\n")
    np.savez_compressed(
        d / "arrays.npz",
        frame0=render.frame0,
        frame1=render.frame1,
        labels=render.labels,
        obj_id0=render.obj_id0,
        obj_id1=render.obj_id1,
        pt_id0=render.pt_id0,
        pt_id1=render.pt_id1,
    )
    return d


def read_scene_dataset(path) -> SceneRender:
    d = Path(path)
    try:
        spec = SceneSpec.from_dict(json.loads((d / "scene.json").read_text()))
        arrays = np.load(d / "arrays.npz")
        flow = flo_read(d / "flow.flo")
    except FileNotFoundError as e:
        raise DataError(f"not a scene dataset: {d} ({e})")
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise DataError(f"corrupt scene dataset {d}: {e}")
    return SceneRender(
        spec=spec,
        frame0=arrays["frame0"],
        frame1=arrays["frame1"],
        flow=flow.astype(np.float32),
        labels=arrays["labels"],
        obj_id0=arrays["obj_id0"],
        obj_id1=arrays["obj_id1"],
        pt_id0=arrays["pt_id0"],
        pt_id1=arrays["pt_id1"],
    )


def read_sintel_pair(path) -> dict:
    """Sintel-layout directory: frame_0001.png, frame_0002.png, optional
    flow/frame_0001.flo, optional occlusions/frame_0001.png (0 = occluded).
    """
    d = Path(path)
    f0 = d / "frame_0001.png"
    f1 = d / "frame_0002.png"
    if not f0.exists() or not f1.exists():
        raise DataError(f"{d}: expected frame_0001.png and frame_0002.png")
    out = {
        "frame0": load_gray(f0),
        "frame1": load_gray(f1),
        "gt_flow": None,
        "gt_occlusion": None,
    }
    flo = d / "flow" / "frame_0001.flo"
    if flo.exists():
        out["gt_flow"] = flo_read(flo).astype(np.float32)
    occ = d / "occlusions" / "frame_0001.png"
    if occ.exists():
        mask = np.asarray(Image.open(occ).convert("L"))
        out["gt_occlusion"] = np.where(mask == 0, np.uint8(EST_OCC), np.uint8(EST_NOC))
    return out
