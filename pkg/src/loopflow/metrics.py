"""Flow and occlusion metrics with explicit undefined sentinels.

Empty regions report count 0 and an undefined error (None in Python,
the string "undefined" in JSON) — never a silent zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EST_OCC, NOC, OCC_IN, OCC_OUT, UsageError, as_flow

UNDEFINED = "undefined"


def _jsonify(value: float | None):
    return UNDEFINED if value is None else value


@dataclass(frozen=True)
class RegionScore:
    """Mean endpoint error over one pixel region."""

    aepe: float | None
    count: int

    def as_dict(self) -> dict:
        return {"aepe": _jsonify(self.aepe), "count": self.count}


@dataclass(frozen=True)
class PartitionedAEPE:
    all: RegionScore
    noc: RegionScore
    occ: RegionScore
    occ_in: RegionScore
    occ_out: RegionScore

    def as_dict(self) -> dict:
        return {
            "all": self.all.as_dict(),
            "noc": self.noc.as_dict(),
            "occ": self.occ.as_dict(),
            "occ_in": self.occ_in.as_dict(),
            "occ_out": self.occ_out.as_dict(),
        }


def endpoint_error(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-pixel L2 error, float64 (H, W)."""
    p = as_flow(pred).astype(np.float64)
    g = as_flow(gt).astype(np.float64)
    if p.shape != g.shape:
        raise UsageError(f"flow shapes differ: {p.shape} vs {g.shape}")
    return np.linalg.norm(p - g, axis=-1)


def _region(err: np.ndarray, mask: np.ndarray) -> RegionScore:
    count = int(mask.sum())
    if count == 0:
        return RegionScore(aepe=None, count=0)
    return RegionScore(aepe=float(err[mask].mean()), count=count)


def aepe_partitioned(pred: np.ndarray, gt: np.ndarray, labels: np.ndarray) -> PartitionedAEPE:
    """Mean endpoint error over all pixels and per ground-truth region."""
    err = endpoint_error(pred, gt)
    lab = np.asarray(labels)
    if lab.shape != err.shape:
        raise UsageError(f"labels shape {lab.shape} does not match flow grid {err.shape}")
    occ = lab != NOC
    return PartitionedAEPE(
        all=_region(err, np.ones_like(occ)),
        noc=_region(err, lab == NOC),
        occ=_region(err, occ),
        occ_in=_region(err, lab == OCC_IN),
        occ_out=_region(err, lab == OCC_OUT),
    )


def occlusion_prf(pred: np.ndarray, gt: np.ndarray) -> dict:
    """Precision/recall/f1 for the OCC class.

    pred is a binary estimate (0 = NOC, 1 = OCC); gt may be three-way
    labels (anything != NOC counts as OCC) or already binary.
    """
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise UsageError(f"occlusion shapes differ: {p.shape} vs {g.shape}")
    pp = p == EST_OCC if p.dtype != bool else p
    gp = g != NOC if g.dtype != bool else g
    tp = int((pp & gp).sum())
    fp = int((pp & ~gp).sum())
    fn = int((~pp & gp).sum())
    tn = int((~pp & ~gp).sum())
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
    }


def prf_as_dict(scores: dict) -> dict:
    out = dict(scores)
    for k in ("precision", "recall", "f1"):
        out[k] = _jsonify(out[k])
    return out


def format_partitioned(p: PartitionedAEPE, title: str | None = None) -> str:
    """Human-readable table, one row per region."""
    rows = [("Noc", p.noc), ("Occ", p.occ), ("Occ-in", p.occ_in), ("Occ-out", p.occ_out), ("All", p.all)]
    head = f"{'region':8s} {'aepe':>12s} {'pixels':>8s}"
    lines = [f"[{title}] {head}" if title else head]
    for name, r in rows:
        aepe = UNDEFINED if r.aepe is None else f"{r.aepe:.6f}"
        lines.append(f"{name:8s} {aepe:>12s} {r.count:>8d}")
    return "\n".join(lines)
