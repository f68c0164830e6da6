import json
import struct

import numpy as np
import pytest

from loopflow.core import DataError, EST_NOC, EST_OCC, NOC, OCC_IN, OCC_OUT, UsageError
from loopflow.flowio import (
    decode_gt_labels,
    decode_occlusion,
    encode_gt_labels,
    encode_occlusion,
    flo_read,
    flo_write,
    flow_to_png,
    load_gray,
    read_scene_dataset,
    read_sintel_pair,
    save_image,
    write_scene_dataset,
)
from loopflow.metrics import (
    PartitionedAEPE,
    RegionScore,
    aepe_partitioned,
    endpoint_error,
    format_partitioned,
    occlusion_prf,
    prf_as_dict,
)


def test_aepe_hand_case():
    pred = np.zeros((2, 2, 2), dtype=np.float32)
    gt = np.zeros((2, 2, 2), dtype=np.float32)
    gt[0, 0] = (3.0, 4.0)   # error 5
    gt[0, 1] = (1.0, 0.0)   # error 1
    labels = np.array([[NOC, OCC_IN], [OCC_OUT, NOC]], dtype=np.uint8)
    p = aepe_partitioned(pred, gt, labels)
    assert p.all.aepe == pytest.approx(6.0 / 4.0)
    assert p.noc.aepe == pytest.approx(5.0 / 2.0) and p.noc.count == 2
    assert p.occ.aepe == pytest.approx(1.0 / 2.0) and p.occ.count == 2
    assert p.occ_in.aepe == pytest.approx(1.0) and p.occ_in.count == 1
    assert p.occ_out.aepe == pytest.approx(0.0) and p.occ_out.count == 1


def test_aepe_decomposition_identity(rng):
    pred = rng.standard_normal((16, 16, 2)).astype(np.float32)
    gt = rng.standard_normal((16, 16, 2)).astype(np.float32)
    labels = rng.integers(0, 3, size=(16, 16)).astype(np.uint8)
    p = aepe_partitioned(pred, gt, labels)
    total = p.all.aepe * p.all.count
    assert total == pytest.approx(p.noc.aepe * p.noc.count + p.occ.aepe * p.occ.count, abs=1e-6)
    assert p.occ.aepe * p.occ.count == pytest.approx(
        p.occ_in.aepe * p.occ_in.count + p.occ_out.aepe * p.occ_out.count, abs=1e-6
    )
    assert p.all.count == p.noc.count + p.occ_in.count + p.occ_out.count


def test_empty_region_reports_undefined():
    pred = np.zeros((2, 2, 2), dtype=np.float32)
    labels = np.zeros((2, 2), dtype=np.uint8)  # all NOC
    p = aepe_partitioned(pred, pred, labels)
    assert p.occ.aepe is None and p.occ.count == 0
    assert p.occ.as_dict() == {"aepe": "undefined", "count": 0}
    doc = p.as_dict()
    assert doc["occ_in"]["aepe"] == "undefined"
    assert doc["noc"]["aepe"] == 0.0


def test_endpoint_error_shape_mismatch():
    with pytest.raises(UsageError):
        endpoint_error(np.zeros((2, 2, 2), np.float32), np.zeros((3, 2, 2), np.float32))
    with pytest.raises(UsageError):
        aepe_partitioned(
            np.zeros((2, 2, 2), np.float32),
            np.zeros((2, 2, 2), np.float32),
            np.zeros((4, 4), np.uint8),
        )


def test_occlusion_prf_hand_case():
    pred = np.array([[EST_OCC, EST_OCC], [EST_NOC, EST_NOC]], dtype=np.uint8)
    gt = np.array([[OCC_IN, NOC], [OCC_OUT, NOC]], dtype=np.uint8)
    s = occlusion_prf(pred, gt)
    assert (s["tp"], s["fp"], s["fn"], s["tn"]) == (1, 1, 1, 1)
    assert s["precision"] == pytest.approx(0.5)
    assert s["recall"] == pytest.approx(0.5)
    assert s["f1"] == pytest.approx(0.5)


def test_occlusion_prf_undefined_branches():
    noc = np.zeros((2, 2), dtype=np.uint8)
    occ = np.full((2, 2), EST_OCC, dtype=np.uint8)
    s = occlusion_prf(noc, noc)  # nothing predicted, nothing true
    assert s["precision"] is None and s["recall"] is None and s["f1"] is None
    s = occlusion_prf(noc, occ * OCC_IN)  # missed everything
    assert s["precision"] is None and s["recall"] == 0.0 and s["f1"] is None
    d = prf_as_dict(s)
    assert d["precision"] == "undefined" and d["recall"] == 0.0
    assert d["fn"] == 4


def test_occlusion_prf_accepts_bool_masks():
    pred = np.array([[True, False]])
    gt = np.array([[True, True]])
    s = occlusion_prf(pred, gt)
    assert s["recall"] == pytest.approx(0.5) and s["precision"] == 1.0


def test_format_partitioned_mentions_title_and_regions():
    p = aepe_partitioned(
        np.zeros((2, 2, 2), np.float32),
        np.zeros((2, 2, 2), np.float32),
        np.zeros((2, 2), np.uint8),
    )
    text = format_partitioned(p, title="demo")
    assert text.startswith("[demo]")
    for word in ("Noc", "Occ-in", "Occ-out", "All", "undefined"):
        assert word in text


def test_flo_exact_byte_layout(tmp_path):
    flow = np.array([[[1.5, -2.25]]], dtype=np.float32)
    path = tmp_path / "one.flo"
    flo_write(path, flow)
    raw = path.read_bytes()
    assert len(raw) == 20
    assert struct.unpack("<f", raw[0:4])[0] == pytest.approx(202021.25)
    assert struct.unpack("<ii", raw[4:12]) == (1, 1)
    assert struct.unpack("<ff", raw[12:20]) == (1.5, -2.25)


def test_flo_round_trip_bit_exact(tmp_path, rng):
    flow = rng.standard_normal((7, 5, 2)).astype(np.float32)
    path = tmp_path / "rt.flo"
    flo_write(path, flow)
    back = flo_read(path)
    assert back.dtype == np.float32
    assert np.array_equal(back.view(np.uint32), flow.view(np.uint32))


def test_flo_read_rejects_corruption(tmp_path):
    p = tmp_path / "bad.flo"
    p.write_bytes(b"\x00" * 8)
    with pytest.raises(DataError, match="truncated"):
        flo_read(p)
    p.write_bytes(struct.pack("<fii", 1.0, 2, 2) + b"\x00" * 32)
    with pytest.raises(DataError, match="magic"):
        flo_read(p)
    p.write_bytes(struct.pack("<fii", 202021.25, 0, 2) + b"\x00" * 32)
    with pytest.raises(DataError, match="dims"):
        flo_read(p)
    p.write_bytes(struct.pack("<fii", 202021.25, 2, 2) + b"\x00" * 8)
    with pytest.raises(DataError, match="expected"):
        flo_read(p)


def test_flo_write_refuses_non_finite(tmp_path):
    flow = np.zeros((2, 2, 2), dtype=np.float32)
    flow[0, 0, 0] = np.nan
    with pytest.raises(UsageError):
        flo_write(tmp_path / "nan.flo", flow)


def test_flow_to_png_zero_is_white_and_plus_x_is_red():
    flow = np.zeros((2, 2, 2), dtype=np.float32)
    flow[0, 1] = (2.0, 0.0)
    img = flow_to_png(flow)
    assert img.dtype == np.uint8 and img.shape == (2, 2, 3)
    assert img[0, 0].tolist() == [255, 255, 255]  # zero flow
    assert img[0, 1].tolist() == [255, 0, 0]      # +x at full saturation


def test_flow_to_png_max_norm_saturates():
    flow = np.zeros((1, 2, 2), dtype=np.float32)
    flow[0, 0] = (10.0, 0.0)
    flow[0, 1] = (0.5, 0.0)
    img = flow_to_png(flow, max_norm=1.0)
    assert img[0, 0].tolist() == [255, 0, 0]           # clipped to sat 1
    assert img[0, 1].tolist() == [255, 128, 128]       # half saturation
    with pytest.raises(UsageError):
        flow_to_png(flow, max_norm=0.0)


def test_gt_label_codes_round_trip():
    labels = np.array([[NOC, OCC_IN], [OCC_OUT, NOC]], dtype=np.uint8)
    img = encode_gt_labels(labels)
    assert img.tolist() == [[255, 128], [0, 255]]
    assert np.array_equal(decode_gt_labels(img), labels)
    with pytest.raises(UsageError):
        encode_gt_labels(np.array([[7]], dtype=np.uint8))
    with pytest.raises(DataError):
        decode_gt_labels(np.array([[42]], dtype=np.uint8))


def test_occlusion_codes_round_trip():
    est = np.array([[EST_OCC, EST_NOC]], dtype=np.uint8)
    img = encode_occlusion(est)
    assert img.tolist() == [[0, 255]]
    assert np.array_equal(decode_occlusion(img), est)
    with pytest.raises(DataError):
        decode_occlusion(np.array([[3]], dtype=np.uint8))


def test_scene_dataset_round_trip(tmp_path, cover_scene):
    d = write_scene_dataset(cover_scene, tmp_path / "cover")
    names = {p.name for p in d.iterdir()}
    assert {"frame0.png", "frame1.png", "labels.png", "flow.flo", "scene.json", "arrays.npz"} <= names
    back = read_scene_dataset(d)
    assert back.spec.to_dict() == cover_scene.spec.to_dict()
    assert np.array_equal(back.frame0, cover_scene.frame0)
    assert np.array_equal(back.frame1, cover_scene.frame1)
    assert np.array_equal(back.labels, cover_scene.labels)
    assert np.array_equal(back.flow.view(np.uint32), cover_scene.flow.view(np.uint32))
    assert np.array_equal(back.pt_id0, cover_scene.pt_id0)
    assert np.array_equal(back.obj_id1, cover_scene.obj_id1)


def test_read_scene_dataset_rejects_bad_dirs(tmp_path):
    with pytest.raises(DataError):
        read_scene_dataset(tmp_path)
    (tmp_path / "scene.json").write_text("not json {")
    with pytest.raises(DataError):
        read_scene_dataset(tmp_path)


def test_sintel_layout_and_occlusion_convention(tmp_path, cover_scene):
    d = tmp_path / "shot"
    (d / "flow").mkdir(parents=True)
    (d / "occlusions").mkdir()
    save_image(d / "frame_0001.png", cover_scene.frame0)
    save_image(d / "frame_0002.png", cover_scene.frame1)
    flo_write(d / "flow" / "frame_0001.flo", cover_scene.flow)
    occ_img = np.where(cover_scene.labels != NOC, np.uint8(0), np.uint8(255))
    save_image(d / "occlusions" / "frame_0001.png", occ_img)
    pair = read_sintel_pair(d)
    assert pair["frame0"].dtype == np.float32
    assert pair["frame0"].min() >= 0.0 and pair["frame0"].max() <= 1.0
    assert np.allclose(pair["gt_flow"], cover_scene.flow)
    # 0 in the PNG means occluded
    assert np.array_equal(pair["gt_occlusion"] == EST_OCC, cover_scene.labels != NOC)


def test_sintel_optional_files_may_be_absent(tmp_path, cover_scene):
    d = tmp_path / "bare"
    d.mkdir()
    save_image(d / "frame_0001.png", cover_scene.frame0)
    save_image(d / "frame_0002.png", cover_scene.frame1)
    pair = read_sintel_pair(d)
    assert pair["gt_flow"] is None and pair["gt_occlusion"] is None
    with pytest.raises(DataError):
        read_sintel_pair(tmp_path / "nowhere")


def test_load_gray_and_save_image(tmp_path):
    img = np.linspace(0.0, 1.0, 16, dtype=np.float32).reshape(4, 4)
    save_image(tmp_path / "g.png", img)
    back = load_gray(tmp_path / "g.png")
    assert back.shape == (4, 4) and back.dtype == np.float32
    assert np.abs(back - img).max() <= 1.0 / 255.0 + 1e-6
    with pytest.raises(DataError):
        load_gray(tmp_path / "missing.png")
