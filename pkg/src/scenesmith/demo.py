"""A self-contained demo scene: a parking lot seen by a fixed surveillance camera.

The "real" scene is itself rendered, so the demo ships everything a user would
normally bring: a short clip with passing cars (for background extraction),
clicked 2D-3D correspondences and a scene config.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .calibration import Correspondence2D3D, write_correspondences
from .geometry import CameraIntrinsics, CameraModel, CameraPose, project_points
from .randomizer import RandomizationConfig, sample_scene
from .renderer import RenderContext, RenderSettings
from .renderer.io import write_rgb_png
from .scene import PlaneSpec, Texture, build_layout, default_assets, procedural_texture

PX_PER_UNIT = 16
GROUND = [(-25.0, -8.0, 0.0), (25.0, -8.0, 0.0), (25.0, 40.0, 0.0), (-25.0, 40.0, 0.0)]
BACK_WALL = [(-25.0, 40.0, 0.0), (25.0, 40.0, 0.0), (25.0, 40.0, 12.0), (-25.0, 40.0, 12.0)]
LEFT_WALL = [(-25.0, -8.0, 0.0), (-25.0, 40.0, 0.0), (-25.0, 40.0, 8.0), (-25.0, -8.0, 8.0)]
PLACEMENT = [(-14.0, 6.0), (14.0, 6.0), (14.0, 30.0), (-14.0, 30.0)]
STALL_XS = np.arange(-15.0, 15.1, 3.0)
STALL_ROWS = ((9.0, 14.0), (21.0, 26.0))
WINDOWS = [(x, z) for x in np.arange(-21.0, 22.0, 6.0) for z in (2.5, 7.0)]  # lower-left corners, 3 x 2.5


def true_camera(width: int, height: int) -> CameraModel:
    k = CameraIntrinsics.centered(0.9 * width, width, height)
    return CameraModel(k, CameraPose.look_at((4.0, -14.0, 10.0), (0.0, 18.0, 0.0)))


def _ground_texture() -> np.ndarray:
    w, h = 50 * PX_PER_UNIT, 48 * PX_PER_UNIT
    img = procedural_texture("perlin-noise", {"width": w, "height": h, "cells": 16, "octaves": 4,
                                              "colors": [[70, 72, 75], [112, 112, 110]]}, seed=11).data.copy()
    xs = (np.arange(w) + 0.5) / PX_PER_UNIT - 25.0
    ys = (np.arange(h) + 0.5) / PX_PER_UNIT - 8.0
    gx, gy = np.meshgrid(xs, ys)
    paint = np.zeros_like(gx, dtype=bool)
    for y0, y1 in STALL_ROWS:
        for x in STALL_XS:
            paint |= (np.abs(gx - x) < 0.08) & (gy >= y0) & (gy <= y1)
    paint |= (np.abs(gy - 17.5) < 0.1) & (np.abs(gx) < 16) & ((np.floor(gx) % 3) < 1.5)
    img[paint] = (228, 228, 220)
    return img


def _facade_texture(width_u: float, height_u: float, base, windows=()) -> np.ndarray:
    w, h = int(width_u * PX_PER_UNIT), int(height_u * PX_PER_UNIT)
    img = procedural_texture("stripes", {"width": w, "height": h, "period": 6, "duty": 0.8,
                                         "colors": [base, [int(c * 0.8) for c in base]]}, seed=3).data.copy()
    # texture rows run upward from the plane's first edge (the ground line)
    zs = (np.arange(h) + 0.5) / PX_PER_UNIT
    xs = (np.arange(w) + 0.5) / PX_PER_UNIT - width_u / 2
    gx, gz = np.meshgrid(xs, zs)
    for x, z in windows:
        img[(gx >= x) & (gx <= x + 3.0) & (gz >= z) & (gz <= z + 2.5)] = (38, 52, 70)
    return img


def world_layout():
    return build_layout([
        PlaneSpec(GROUND, Texture(_ground_texture(), "clamp"), "ground"),
        PlaneSpec(BACK_WALL, Texture(_facade_texture(50, 12, [150, 96, 80], WINDOWS), "clamp"), "wall"),
        PlaneSpec(LEFT_WALL, Texture(_facade_texture(48, 8, [170, 160, 140]), "clamp"), "wall"),
    ])


def landmarks() -> np.ndarray:
    """World points a user could click: stall-line ends on the ground and window corners on the facade."""
    pts = [(x, y, 0.0) for x in STALL_XS[::2] for y in (STALL_ROWS[0][0], STALL_ROWS[1][1])]
    for x, z in WINDOWS[::3]:
        pts += [(x, 40.0, z), (x + 3.0, 40.0, z + 2.5)]
    return np.array(pts)


def build_demo(out_dir, resolution=(1440, 810), n_frames: int = 7, noise_px: float = 0.0, seed: int = 0) -> Path:
    """Write frames/, correspondences.csv and scene.json into ``out_dir``; returns the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w, h = resolution
    cam = true_camera(w, h)
    layout = world_layout()
    assets = default_assets()
    ctx = RenderContext(layout, assets)
    traffic = RandomizationConfig(master_seed=seed + 1000, car_count=(2, 5), distractors=False,
                                  light_augmentation=False, placement_region=tuple(PLACEMENT))
    for i in range(n_frames):
        scene = sample_scene(traffic, layout, assets, i)
        write_rgb_png(out / "frames" / f"frame_{i:03d}.png", ctx.render(scene, cam, RenderSettings(w, h)).rgb)

    pts = landmarks()
    pix = project_points(pts, cam)
    if noise_px > 0:
        pix = pix + np.random.default_rng(seed).normal(0.0, noise_px, pix.shape)
    write_correspondences(out / "correspondences.csv", [Correspondence2D3D(tuple(p), tuple(q)) for p, q in zip(pix, pts)])

    doc = {
        "name": "demo_parking",
        "resolution": [w, h],
        "background": "frames",
        "correspondences": "correspondences.csv",
        "calibration": "calibration.json",
        "intrinsics": {"focal": 0.75 * w, "grid": True},
        "meters_per_unit": 1.0,
        "layout": [
            {"role": "ground", "corners": [list(c) for c in GROUND], "texture": "background", "texture_size": [800, 768]},
            {"role": "wall", "corners": [list(c) for c in BACK_WALL], "texture": "background", "texture_size": [800, 192]},
            {"role": "wall", "corners": [list(c) for c in LEFT_WALL], "texture": "background", "texture_size": [768, 128]},
        ],
        "randomization": {"preset": "full_dr", "placement_region": [list(p) for p in PLACEMENT]},
        "render": {"spp": 1, "shadows": True, "ambient": 0.15},
        "output": "dataset",
    }
    path = out / "scene.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path
