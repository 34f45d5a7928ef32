"""Per-object ground truth from rendered rasters, and the on-disk dataset layout."""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InconsistentInputs, InvalidRatio, IoFailure, NotPresent
from .geometry import MIN_DEPTH, NUM_POSE_BINS, CameraModel, PixelBox, quantize_yaw, yaw_in_camera
from .randomizer import SceneInstance
from .renderer import RenderContext, RenderFrame, RenderSettings, object_vertices
from .renderer.io import write_json, write_mask_png, write_pfm, write_rgb_png

MIN_VISIBILITY = 0.05
SPLITS = ("train", "val")


@dataclass(frozen=True)
class AnnotationRecord:
    frame_id: int
    instance_id: int
    category: str
    bbox: PixelBox
    yaw_rad: float
    pose_bin: int
    visibility: float
    truncated: bool

    def to_dict(self) -> dict:
        return {
            "image_id": self.frame_id,
            "instance_id": self.instance_id,
            "category": self.category,
            "bbox": [int(v) for v in self.bbox.as_list()],
            "yaw_rad": self.yaw_rad,
            "pose_bin": self.pose_bin,
            "visibility": self.visibility,
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class FrameAnnotations:
    records: tuple
    excluded: int  # objects below the visibility threshold (incl. fully hidden or out of view)
    dropped: int  # placements the sampler gave up on


def bbox_from_mask(instance: np.ndarray, instance_id: int) -> PixelBox:
    """Tight inclusive pixel box of ``instance == instance_id``."""
    rows = np.flatnonzero(np.any(instance == instance_id, axis=1))
    if len(rows) == 0:
        raise NotPresent(f"instance {instance_id} not in raster")
    cols = np.flatnonzero(np.any(instance[rows[0]:rows[-1] + 1] == instance_id, axis=0))
    x0, x1, y0, y1 = int(cols[0]), int(cols[-1]), int(rows[0]), int(rows[-1])
    return PixelBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def _hull_state(points: np.ndarray, cam: CameraModel):
    """(any vertex outside the image, hull may touch the image)."""
    pc = cam.to_camera(points)
    if np.any(pc[:, 2] <= MIN_DEPTH):
        return True, bool(np.any(pc[:, 2] > MIN_DEPTH))
    k = cam.intrinsics
    u = k.fx * pc[:, 0] / pc[:, 2] + k.cx
    v = k.fy * pc[:, 1] / pc[:, 2] + k.cy
    outside = bool(np.any((u < 0) | (u > cam.width) | (v < 0) | (v > cam.height)))
    touches = u.max() >= 0 and u.min() <= cam.width and v.max() >= 0 and v.min() <= cam.height
    return outside, bool(touches)


def annotate_frame(frame: RenderFrame, scene: SceneInstance, cam: CameraModel, ctx: RenderContext,
                   settings: RenderSettings | None = None, frame_id: int = 0,
                   min_visibility: float = MIN_VISIBILITY) -> FrameAnnotations:
    """Records for every sampled object whose visible fraction reaches ``min_visibility``.

    Visibility divides the object's pixels in ``frame`` by the pixels it covers
    when traced alone through the same camera.
    """
    h, w = frame.instance.shape
    settings = settings or RenderSettings(w, h)
    if (cam.width, cam.height) != (w, h):
        cam = cam.scaled(w, h)
    by_id = {o.instance_id: o for o in scene.objects}
    present = set(int(i) for i in np.unique(frame.instance)) - {0}
    unknown = present - set(by_id)
    if unknown:
        raise InconsistentInputs(f"instance id(s) {sorted(unknown)} in raster but not in scene")
    counts = np.bincount(frame.instance.ravel(), minlength=max(by_id, default=0) + 1)

    records, excluded = [], 0
    for obj in scene.objects:
        verts = object_vertices(obj, ctx.mesh_for(obj))
        truncated, touches = _hull_state(verts, cam)
        visible = int(counts[obj.instance_id])
        if visible == 0 and not touches:
            excluded += 1
            continue
        solo = ctx.solo_pixel_count(scene, obj, cam, settings)
        visibility = min(1.0, visible / solo) if solo else 0.0
        if visibility < min_visibility or visible == 0:
            excluded += 1
            continue
        yaw = yaw_in_camera(obj.rotation, cam)
        records.append(AnnotationRecord(frame_id, obj.instance_id, obj.cls, bbox_from_mask(frame.instance, obj.instance_id),
                                        yaw, quantize_yaw(yaw), visibility, truncated))
    return FrameAnnotations(tuple(records), excluded, scene.dropped)


# ---------------------------------------------------------------- splits


def parse_ratio(text) -> tuple:
    """'80:20' or (80, 20) -> (80, 20); both parts >= 0 and not both zero."""
    try:
        parts = tuple(float(p) for p in (text.split(":") if isinstance(text, str) else text))
    except (TypeError, ValueError):
        raise InvalidRatio(f"bad split ratio {text!r}") from None
    if len(parts) != 2 or min(parts) < 0 or sum(parts) <= 0 or not all(math.isfinite(p) for p in parts):
        raise InvalidRatio(f"split ratio must be two non-negative parts with a positive sum, got {text!r}")
    return parts


def split_key(master_seed: int, frame_id: int) -> bytes:
    return hashlib.sha256(struct.pack("<QQ", master_seed & (2**64 - 1), frame_id)).digest()


def assign_splits(frame_ids, ratio, master_seed: int) -> dict:
    """frame_id -> 'train' | 'val'. Frames are ranked by a seeded hash; the first round(n * a / (a + b)) train."""
    a, b = parse_ratio(ratio)
    ids = sorted(set(int(i) for i in frame_ids))
    n_train = int(round(len(ids) * a / (a + b)))
    ranked = sorted(ids, key=lambda i: split_key(master_seed, i))
    train = set(ranked[:n_train])
    return {i: ("train" if i in train else "val") for i in ids}


# ---------------------------------------------------------------- writer


def frame_name(frame_id: int) -> str:
    return f"img_{frame_id:06d}"


def frame_paths(frame_id: int, split: str) -> dict:
    name = frame_name(frame_id)
    return {
        "image": f"images/{split}/{name}.png",
        "mask": f"masks/{split}/{name}.png",
        "depth": f"depth/{split}/{name}.pfm",
    }


@dataclass
class DatasetWriter:
    """Single writer for one dataset directory.

    Every finished frame leaves a sidecar under ``.frames/`` (written after its
    rasters), so an interrupted run can resume; ``manifest.json`` is written last.
    """
    out_dir: Path
    splits: dict  # frame_id -> split
    config_digest: str
    width: int
    height: int
    _done: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        try:
            (self.out_dir / ".frames").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create {self.out_dir}: {exc}") from None

    def _sidecar(self, frame_id: int) -> Path:
        return self.out_dir / ".frames" / f"{frame_name(frame_id)}.json"

    def is_done(self, frame_id: int) -> bool:
        """True when the frame was completed earlier under the same config digest and split."""
        if frame_id in self._done:
            return True
        p = self._sidecar(frame_id)
        if not p.exists():
            return False
        try:
            doc = json.loads(p.read_text())
        except (OSError, ValueError):
            return False
        paths = frame_paths(frame_id, self.splits[frame_id])
        ok = (doc.get("config_digest") == self.config_digest and doc.get("split") == self.splits[frame_id]
              and all((self.out_dir / q).exists() for q in paths.values()))
        if ok:
            self._done[frame_id] = doc
        return ok

    def write_frame(self, frame_id: int, frame: RenderFrame, ann: FrameAnnotations, scene_summary: dict | None = None):
        split = self.splits[frame_id]
        paths = frame_paths(frame_id, split)
        try:
            write_rgb_png(self.out_dir / paths["image"], frame.rgb)
            write_mask_png(self.out_dir / paths["mask"], frame.instance)
            write_pfm(self.out_dir / paths["depth"], frame.depth)
            doc = {
                "config_digest": self.config_digest,
                "frame_id": frame_id,
                "split": split,
                "annotations": [r.to_dict() for r in ann.records],
                "excluded": ann.excluded,
                "dropped": ann.dropped,
                "scene": scene_summary,
            }
            write_json(self._sidecar(frame_id), doc)
        except OSError as exc:
            raise IoFailure(f"writing frame {frame_id}: {exc}") from None
        self._done[frame_id] = doc

    def finalize(self, extra: dict | None = None) -> dict:
        missing = [i for i in self.splits if not self.is_done(i)]
        if missing:
            raise IoFailure(f"{len(missing)} frame(s) not written, e.g. {missing[:5]}")
        docs = {s: {"images": [], "annotations": []} for s in SPLITS}
        frames = {}
        dropped = excluded = n_records = 0
        for i in sorted(self.splits):
            d = self._done[i]
            split = self.splits[i]
            paths = frame_paths(i, split)
            docs[split]["images"].append({"id": i, "file": paths["image"], "width": self.width, "height": self.height})
            docs[split]["annotations"].extend(d["annotations"])
            dropped += d["dropped"]
            excluded += d["excluded"]
            n_records += len(d["annotations"])
            frames[str(i)] = {"split": split, **paths, "scene": d["scene"]}
        try:
            for s in SPLITS:
                write_json(self.out_dir / f"annotations_{s}.json", docs[s])
            manifest = {
                **(extra or {}),
                "config_digest": self.config_digest,
                "image_count": len(self.splits),
                "resolution": [self.width, self.height],
                "num_pose_bins": NUM_POSE_BINS,
                "splits": {s: [i for i in sorted(self.splits) if self.splits[i] == s] for s in SPLITS},
                "annotation_count": n_records,
                "excluded_low_visibility": excluded,
                "dropped_objects": dropped,
                "frames": frames,
            }
            write_json(self.out_dir / "manifest.json", manifest)
        except OSError as exc:
            raise IoFailure(f"writing dataset index: {exc}") from None
        return manifest


def write_dataset(items, split_ratio, out_dir, master_seed: int = 0, config_digest: str = "",
                  extra: dict | None = None) -> dict:
    """Write ``(frame_id, RenderFrame, FrameAnnotations[, scene summary])`` items and return the manifest."""
    parse_ratio(split_ratio)
    items = list(items)
    if not items:
        raise IoFailure("no frames to write")
    splits = assign_splits([it[0] for it in items], split_ratio, master_seed)
    h, w = items[0][1].instance.shape
    writer = DatasetWriter(Path(out_dir), splits, config_digest, w, h)
    for it in items:
        writer.write_frame(it[0], it[1], it[2], it[3] if len(it) > 3 else None)
    return writer.finalize(extra)
