"""Glue from a scene config to a rendered, annotated dataset on disk."""
from __future__ import annotations

import multiprocessing as mp
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .annotator import DatasetWriter, annotate_frame, assign_splits, frame_paths, parse_ratio
from .calibration import (
    CalibrationResult,
    calibrate,
    extract_background,
    extract_plane_texture,
    grid_search_intrinsics,
    read_calibration,
    read_correspondences,
)
from .config import SceneConfig, randomization_from
from .errors import ConfigError
from .geometry import CameraIntrinsics, CameraModel, CameraPose, rodrigues
from .randomizer import CONDITION_LABELS, RandomizationConfig, placement_polygon, sample_scene
from .renderer import RenderContext, RenderSettings
from .renderer.io import read_png, write_json
from .scene import CAR_MODELS, PlaneSpec, SceneLayout, Texture, build_layout, default_assets, procedural_texture

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


# ---------------------------------------------------------------- camera and background


def load_background(path: Path) -> np.ndarray:
    """An RGB image, or the temporal median of every image in a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        return extract_background([read_png(p) for p in files])
    return read_png(path)


def _image_size(cfg: SceneConfig, background: np.ndarray | None):
    if background is not None:
        return background.shape[1], background.shape[0]
    return cfg.resolution


def initial_intrinsics(cfg: SceneConfig, width: int, height: int) -> tuple:
    """(CameraIntrinsics, grid flag) for the image the correspondences were clicked on."""
    d = dict(cfg.intrinsics or {"grid": True})
    focal = d.get("focal", float(max(width, height)))
    k = CameraIntrinsics(float(d.get("fx", focal)), float(d.get("fy", focal)), float(d.get("cx", width / 2)),
                         float(d.get("cy", height / 2)), int(width), int(height))
    return k, bool(d.get("grid", False))


def calibrate_scene(cfg: SceneConfig, correspondences=None, background=None) -> CalibrationResult:
    path = correspondences or cfg.correspondences
    if path is None:
        raise ConfigError("no correspondence file configured")
    corr = read_correspondences(path)
    if background is None and cfg.background is not None:
        background = load_background(cfg.background)
    w, h = _image_size(cfg, background)
    k, grid = initial_intrinsics(cfg, w, h)
    if grid:
        return grid_search_intrinsics(corr, k, meters_per_unit=cfg.meters_per_unit)
    return calibrate(corr, k, cfg.meters_per_unit)


def scene_camera(cfg: SceneConfig, background=None) -> CameraModel:
    """Calibrated camera: read from the calibration file when present, otherwise solved now."""
    if cfg.calibration is not None and cfg.calibration.exists():
        return read_calibration(cfg.calibration)
    return calibrate_scene(cfg, background=background).camera


def build_scene_layout(cfg: SceneConfig, cam: CameraModel, background=None) -> SceneLayout:
    planes = []
    for p in cfg.layout:
        if p.texture == "background":
            if background is None:
                raise ConfigError("background texture requested but no background image loaded")
            data = extract_plane_texture(background, p.corners, cam, p.texture_size)
            tex = Texture(data, "clamp")
        else:
            t = procedural_texture(p.texture["kind"], p.texture["params"], p.texture["seed"])
            tex = Texture(t.data, p.texture["address"])
        planes.append(PlaneSpec(p.corners, tex, p.role))
    return build_layout(planes)


def frame_camera(cam: CameraModel, jitter, target) -> CameraModel:
    """Orbit the camera about ``target``: azimuth about world up, elevation about the horizontal side axis."""
    d_el, d_az = jitter
    if d_el == 0.0 and d_az == 0.0:
        return cam
    target = np.asarray(target, dtype=float)
    center = cam.center
    rel = center - target
    r_az = rodrigues(np.array([0.0, 0.0, d_az]))
    side = np.cross(np.array([0.0, 0.0, 1.0]), rel)
    n = np.linalg.norm(side)
    r_el = rodrigues(-side / n * d_el) if n > 1e-12 else np.eye(3)
    rot = r_az @ r_el
    new_center = target + rot @ rel
    new_r = cam.pose.rotation @ rot.T
    return CameraModel(cam.intrinsics, CameraPose(new_r, -new_r @ new_center), cam.meters_per_unit)


# ---------------------------------------------------------------- generation


@dataclass
class GenerationPlan:
    cfg: SceneConfig
    rcfg: RandomizationConfig
    preset_name: str | None
    camera: CameraModel
    layout: SceneLayout
    settings: RenderSettings
    count: int
    ratio: tuple
    out_dir: Path

    def digest(self) -> str:
        return self.cfg.digest({"randomization": self.rcfg.to_dict(), "camera": self.camera.to_dict(),
                                "resolution": [self.settings.width, self.settings.height]})

    def manifest_extra(self) -> dict:
        assets = default_assets()
        return {
            "generator": f"scenesmith {__version__}",
            "scene": self.cfg.name,
            "preset": self.preset_name,
            "condition": CONDITION_LABELS.get(self.preset_name) if self.preset_name else None,
            "master_seed": self.rcfg.master_seed,
            "split_ratio": list(self.ratio),
            "texture_bank_size": len(assets.textures),
            "car_models": list(self.rcfg.car_models),
            "available_car_models": list(CAR_MODELS),
            "palette_size": len(assets.palette),
            "randomization": self.rcfg.to_dict(),
            "camera": self.camera.to_dict(),
        }


def prepare(cfg: SceneConfig, count: int, seed=None, split="80:20", preset_name=None, resolution=None,
            out_dir=None) -> GenerationPlan:
    if count < 1:
        raise ConfigError("count must be >= 1")
    ratio = parse_ratio(split)
    if preset_name is not None or seed is not None:
        value = dict(cfg.randomization_overrides)
        if cfg.preset_name is not None:
            value["preset"] = cfg.preset_name
        rcfg, pname = randomization_from(value, seed, preset_name)
    else:
        rcfg, pname = cfg.randomization, cfg.preset_name
    background = load_background(cfg.background) if cfg.background is not None else None
    cam = scene_camera(cfg, background)
    layout = build_scene_layout(cfg, cam, background)
    out = Path(out_dir) if out_dir is not None else cfg.output
    if out is None:
        raise ConfigError("no output directory given")
    return GenerationPlan(cfg, rcfg, pname, cam, layout, cfg.render_settings(resolution), int(count), ratio, out)


class FrameWorker:
    """Renders and annotates single frames; one per process."""

    def __init__(self, plan: GenerationPlan):
        self.plan = plan
        self.assets = default_assets().in_scene_units(plan.camera.meters_per_unit)
        self.ctx = RenderContext(plan.layout, self.assets)
        poly = placement_polygon(plan.rcfg, plan.layout)
        self.target = (float(np.mean([p[0] for p in poly])), float(np.mean([p[1] for p in poly])), 0.0)
        s = plan.settings
        self.camera = plan.camera.scaled(s.width, s.height)

    def __call__(self, frame_id: int):
        plan = self.plan
        scene = sample_scene(plan.rcfg, plan.layout, self.assets, frame_id)
        cam = frame_camera(self.camera, scene.camera_jitter, self.target)
        frame = self.ctx.render(scene, cam, plan.settings)
        ann = annotate_frame(frame, scene, cam, self.ctx, plan.settings, frame_id, plan.cfg.min_visibility)
        return frame_id, frame, ann, scene.summary()


_WORKER: FrameWorker | None = None


def _init_worker(plan):
    global _WORKER
    import warnings

    import numba

    warnings.filterwarnings("ignore", message="The TBB threading layer")
    numba.set_num_threads(1)
    _WORKER = FrameWorker(plan)


def _run(frame_id):
    return _WORKER(frame_id)


def pool_size() -> int:
    env = os.environ.get("SCENESMITH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"SCENESMITH_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("SCENESMITH_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def generate(plan: GenerationPlan, workers: int | None = None, progress=None) -> dict:
    """Render every missing frame, then write annotation files and the manifest."""
    t0 = time.perf_counter()
    ids = list(range(plan.count))
    splits = assign_splits(ids, plan.ratio, plan.rcfg.master_seed)
    writer = DatasetWriter(plan.out_dir, splits, plan.digest(), plan.settings.width, plan.settings.height)
    manifest_path = plan.out_dir / "manifest.json"
    todo = [i for i in ids if not writer.is_done(i)]
    if todo and manifest_path.exists():
        # the manifest marks a complete dataset; drop it while frames are being (re)written
        manifest_path.unlink()
    workers = min(workers or pool_size(), max(len(todo), 1))
    if workers <= 1:
        worker = FrameWorker(plan)
        results = map(worker, todo)
        pool = None
    else:
        pool = mp.get_context("spawn").Pool(workers, initializer=_init_worker, initargs=(plan,))
        results = pool.imap(_run, todo, chunksize=4)
    try:
        for n, (fid, frame, ann, summary) in enumerate(results, start=1):
            writer.write_frame(fid, frame, ann, summary)
            if progress:
                progress(n, len(todo))
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    extra = plan.manifest_extra()
    extra["rendered"] = True
    extra["frames_rendered_this_run"] = len(todo)
    extra["seconds_this_run"] = round(time.perf_counter() - t0, 3)
    return writer.finalize(extra)


def plan_manifest(plan: GenerationPlan) -> dict:
    """Manifest of the dataset ``generate`` would produce, with scenes sampled but nothing rendered."""
    ids = list(range(plan.count))
    splits = assign_splits(ids, plan.ratio, plan.rcfg.master_seed)
    assets = default_assets().in_scene_units(plan.camera.meters_per_unit)
    frames, dropped = {}, 0
    for i in ids:
        scene = sample_scene(plan.rcfg, plan.layout, assets, i)
        dropped += scene.dropped
        frames[str(i)] = {"split": splits[i], **frame_paths(i, splits[i]), "scene": scene.summary()}
    manifest = {
        **plan.manifest_extra(),
        "rendered": False,
        "config_digest": plan.digest(),
        "image_count": len(ids),
        "resolution": [plan.settings.width, plan.settings.height],
        "num_pose_bins": 36,
        "splits": {s: [i for i in ids if splits[i] == s] for s in ("train", "val")},
        "dropped_objects": dropped,
        "frames": frames,
    }
    write_json(plan.out_dir / "manifest.json", manifest)
    return manifest
