"""Burn a frame's annotations into its RGB image for visual inspection."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, PngImagePlugin

from .errors import IoFailure, ParseError, UnknownFrame
from .renderer.io import atomic_write, read_png

TINT_ALPHA = 0.45


def instance_color(instance_id: int) -> tuple:
    """Stable saturated color per instance id (golden-ratio hue walk)."""
    h = (instance_id * 0.618033988749895) % 1.0
    i, f = int(h * 6), (h * 6) % 1.0
    v, s = 1.0, 0.85
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i % 6]
    return tuple(int(round(255 * c)) for c in rgb)


def yaw_arrow(yaw: float, length: float):
    """Image-plane (du, dv) for a camera-relative heading: 0 points up the image, +90 deg to the left."""
    return -length * np.sin(yaw), -length * np.cos(yaw)


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None


def frame_records(dataset_dir, frame_id: int):
    """(frame entry from the manifest, annotation dicts of that frame)."""
    root = Path(dataset_dir)
    manifest = _load_json(root / "manifest.json")
    entry = manifest.get("frames", {}).get(str(frame_id))
    if entry is None:
        raise UnknownFrame(f"frame {frame_id} not in {root / 'manifest.json'}")
    if not manifest.get("rendered", True):
        raise UnknownFrame(f"frame {frame_id} was planned but never rendered")
    doc = _load_json(root / f"annotations_{entry['split']}.json")
    return entry, [a for a in doc.get("annotations", []) if a.get("image_id") == frame_id]


def draw_overlay(rgb: np.ndarray, mask: np.ndarray, records) -> np.ndarray:
    """Tinted masks, boxes and yaw arrows for ``records``; pixels are untouched when there are none."""
    out = rgb.astype(np.float64)
    for r in records:
        sel = mask == r["instance_id"]
        out[sel] = (1 - TINT_ALPHA) * out[sel] + TINT_ALPHA * np.array(instance_color(r["instance_id"]))
    img = Image.fromarray(np.round(out).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(img)
    for r in records:
        color = instance_color(r["instance_id"])
        x, y, w, h = r["bbox"]
        draw.rectangle([x, y, x + w - 1, y + h - 1], outline=color, width=2)
        cx, cy = x + w / 2, y + h / 2
        du, dv = yaw_arrow(r["yaw_rad"], 0.45 * min(w, h) + 4)
        tip = (cx + du, cy + dv)
        draw.line([(cx, cy), tip], fill=(255, 255, 255), width=2)
        n = np.hypot(du, dv)
        ux, uy = du / n, dv / n
        head = [(tip[0] - 6 * ux + 4 * uy, tip[1] - 6 * uy - 4 * ux), (tip[0] - 6 * ux - 4 * uy, tip[1] - 6 * uy + 4 * ux)]
        draw.polygon([tip, *head], fill=(255, 255, 255))
        draw.text((x + 2, y + 2), f"{r['instance_id']} b{r['pose_bin']}", fill=color)
    return np.array(img)


def render_overlay(dataset_dir, frame_id: int, out_path) -> Path:
    root = Path(dataset_dir)
    entry, records = frame_records(root, frame_id)
    try:
        rgb = read_png(root / entry["image"])
        mask = read_png(root / entry["mask"])
    except OSError as exc:
        raise IoFailure(f"cannot read frame {frame_id}: {exc}") from None
    img = Image.fromarray(draw_overlay(rgb, mask, records), mode="RGB")
    info = PngImagePlugin.PngInfo()
    info.add_text("scenesmith-overlay", json.dumps({"frame": frame_id, "annotations": len(records)}))
    out_path = Path(out_path)
    atomic_write(out_path, lambda fh: img.save(fh, format="PNG", pnginfo=info))
    return out_path
