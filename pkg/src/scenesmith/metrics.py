"""Detection and pose metrics: IoU, all-point AP, Acc10 / MedErr, ablation tables."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import EmptyInput, InvalidParams, IoFailure, MissingCondition, ParseError
from .geometry import NUM_POSE_BINS, PixelBox, bin_center, quantize_yaw, wrap_angle

# ablation rows in the order the conditions are usually listed: each leave-one-out, then everything on
ABLATION_ORDER = ("LA + G + D", "T + G + D", "T + LA + D", "T + LA + G", "T + LA + D + G")


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    bbox: PixelBox
    category: str = "car"
    yaw_rad: float | None = None


@dataclass(frozen=True)
class Detection:
    image_id: int
    bbox: PixelBox
    score: float
    category: str = "car"
    yaw_rad: float | None = None
    pose_bin: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidParams(f"score {self.score} outside [0, 1]")
        if self.pose_bin is not None and not 0 <= self.pose_bin < NUM_POSE_BINS:
            raise InvalidParams(f"pose_bin {self.pose_bin} outside [0, {NUM_POSE_BINS})")


@dataclass(frozen=True)
class PosePair:
    gt_yaw: float
    yaw_rad: float | None = None
    pose_bin: int | None = None


@dataclass
class EvalReport:
    ap: dict  # threshold -> AP
    counts: dict  # threshold -> {"tp", "fp", "fn"}
    acc10: float | None = None
    med_err: float | None = None
    pose_pairs: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ap": {f"{t:g}": v for t, v in self.ap.items()},
            "counts": {f"{t:g}": c for t, c in self.counts.items()},
            "acc10": self.acc10,
            "med_err_deg": self.med_err,
            "pose_pairs": self.pose_pairs,
            **self.extra,
        }


def iou(a: PixelBox, b: PixelBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def _ranked(dets) -> list:
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].image_id, i))


def match_detections(dets, gts, threshold: float):
    """Greedy matching in rank order. Returns [(det index, gt index or -1)] in rank order.

    Each detection takes the highest-IoU still-unmatched ground truth of its image
    (lowest index on ties) when that IoU reaches ``threshold``; otherwise it is a false positive.
    """
    by_image: dict = {}
    for j, g in enumerate(gts):
        by_image.setdefault(g.image_id, []).append(j)
    taken = set()
    out = []
    for i in _ranked(dets):
        d = dets[i]
        best, best_iou = -1, -1.0
        for j in by_image.get(d.image_id, ()):
            if j in taken:
                continue
            v = iou(d.bbox, gts[j].bbox)
            if v > best_iou:
                best, best_iou = j, v
        if best >= 0 and best_iou >= threshold:
            taken.add(best)
            out.append((i, best))
        else:
            out.append((i, -1))
    return out


def average_precision_exact(dets, gts, threshold: float) -> Fraction:
    """All-point interpolated AP as an exact fraction."""
    if not gts:
        return Fraction(0)
    matches = match_detections(dets, gts, threshold)
    n_gt = len(gts)
    tp = 0
    recall, precision = [], []
    for k, (_, j) in enumerate(matches, start=1):
        tp += j >= 0
        recall.append(Fraction(tp, n_gt))
        precision.append(Fraction(tp, k))
    # precision envelope: running max from the right
    for k in range(len(precision) - 2, -1, -1):
        precision[k] = max(precision[k], precision[k + 1])
    ap, prev = Fraction(0), Fraction(0)
    for r, p in zip(recall, precision):
        ap += (r - prev) * p
        prev = r
    return ap


def average_precision(dets, gts, threshold: float) -> float:
    return float(average_precision_exact(dets, gts, threshold))


def angular_diff(a: float, b: float) -> float:
    """Unsigned wrapped difference in degrees, in [0, 180]."""
    d = abs(wrap_angle(a - b))
    return math.degrees(min(d, 2 * math.pi - d))


def pose_metrics(pairs, bin_centers: bool = False):
    """(Acc10, MedErr degrees) over matched pairs.

    Predictions given as a bin are scored at the bin center; with ``bin_centers``
    continuous predictions are snapped to their bin center too.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no matched pose pairs")
    hits, errs = 0, []
    for p in pairs:
        if p.pose_bin is None and p.yaw_rad is None:
            raise InvalidParams("pose pair needs yaw_rad or pose_bin")
        pred_bin = p.pose_bin if p.pose_bin is not None else quantize_yaw(p.yaw_rad)
        hits += pred_bin == quantize_yaw(p.gt_yaw)
        pred = bin_center(pred_bin) if (bin_centers or p.yaw_rad is None) else p.yaw_rad
        errs.append(angular_diff(pred, p.gt_yaw))
    return hits / len(pairs), float(np.median(errs))


def evaluate(dets, gts, thresholds=(0.5, 0.75), pose: bool = False, bin_centers: bool = False,
             pose_iou: float = 0.5) -> EvalReport:
    ap, counts = {}, {}
    for t in thresholds:
        m = match_detections(dets, gts, t)
        tp = sum(j >= 0 for _, j in m)
        ap[t] = average_precision(dets, gts, t)
        counts[t] = {"tp": tp, "fp": len(m) - tp, "fn": len(gts) - tp}
    report = EvalReport(ap, counts)
    if pose:
        pairs = [PosePair(gts[j].yaw_rad, dets[i].yaw_rad, dets[i].pose_bin)
                 for i, j in match_detections(dets, gts, pose_iou)
                 if j >= 0 and gts[j].yaw_rad is not None
                 and (dets[i].yaw_rad is not None or dets[i].pose_bin is not None)]
        if pairs:
            report.acc10, report.med_err = pose_metrics(pairs, bin_centers)
        report.pose_pairs = len(pairs)
    return report


def ablation_report(entries) -> list:
    """Rows ``{"condition", "ap50", "acc10"}`` for the five randomization conditions.

    ``entries`` is a sequence of ``(condition label, EvalReport)``.
    """
    entries = list(entries)
    labels = [c for c, _ in entries]
    unknown = sorted(set(labels) - set(ABLATION_ORDER))
    if unknown:
        raise InvalidParams(f"unknown condition(s): {unknown}")
    missing = [c for c in ABLATION_ORDER if c not in labels]
    if missing or len(labels) != len(set(labels)):
        dup = sorted({c for c in labels if labels.count(c) > 1})
        raise MissingCondition(f"missing condition(s) {missing}" + (f"; duplicated {dup}" if dup else ""))
    by_label = dict(entries)
    rows = []
    for c in ABLATION_ORDER:
        r = by_label[c]
        rows.append({"condition": c, "ap50": r.ap.get(0.5), "acc10": r.acc10})
    return rows


def format_ablation(rows) -> str:
    lines = [f"{'condition':<16} {'AP@0.5':>8} {'Acc10':>8}"]
    for r in rows:
        acc = "-" if r["acc10"] is None else f"{r['acc10']:.4f}"
        ap = "-" if r["ap50"] is None else f"{r['ap50']:.4f}"
        lines.append(f"{r['condition']:<16} {ap:>8} {acc:>8}")
    return "\n".join(lines)


# ---------------------------------------------------------------- files

_RECORD_FIELDS = {"image_id", "instance_id", "category", "bbox", "yaw_rad", "pose_bin", "visibility", "truncated",
                  "score"}


def _field_error(path, k, msg):
    return ParseError(f"{path}: annotation {k}: {msg}")


def _number(rec, name, path, k, kind=float):
    v = rec[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
        raise _field_error(path, k, f"field '{name}' must be {'an integer' if kind is int else 'a number'}, got {v!r}")
    return kind(v)


def load_records(path, predictions: bool = False, category: str | None = "car"):
    """Ground truth or detections from an annotation-shaped JSON file.

    Unknown or missing fields raise ParseError naming the field. ``category``
    keeps only that class (None keeps everything).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None
    recs = doc.get("annotations") if isinstance(doc, dict) else doc
    if not isinstance(recs, list):
        raise ParseError(f"{path}: expected a list or a document with an 'annotations' list")
    out = []
    for k, rec in enumerate(recs):
        if not isinstance(rec, dict):
            raise _field_error(path, k, "record must be an object")
        extra = sorted(set(rec) - _RECORD_FIELDS)
        if extra:
            raise _field_error(path, k, f"unknown field '{extra[0]}'")
        required = ("image_id", "bbox", "score") if predictions else ("image_id", "bbox")
        for name in required:
            if name not in rec:
                raise _field_error(path, k, f"missing field '{name}'")
        bbox = rec["bbox"]
        if not (isinstance(bbox, list) and len(bbox) == 4 and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in bbox)) \
                or bbox[2] < 0 or bbox[3] < 0:
            raise _field_error(path, k, f"field 'bbox' must be [x, y, w, h] with w, h >= 0, got {bbox!r}")
        image_id = _number(rec, "image_id", path, k, int)
        cat = rec.get("category", "car")
        if category is not None and cat != category:
            continue
        yaw = _number(rec, "yaw_rad", path, k) if rec.get("yaw_rad") is not None else None
        box = PixelBox(*(float(v) for v in bbox))
        try:
            if predictions:
                pb = _number(rec, "pose_bin", path, k, int) if rec.get("pose_bin") is not None else None
                out.append(Detection(image_id, box, _number(rec, "score", path, k), cat, yaw, pb))
            else:
                out.append(GroundTruth(image_id, box, cat, yaw))
        except InvalidParams as exc:
            raise _field_error(path, k, str(exc)) from None
    return out
