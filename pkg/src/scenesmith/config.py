"""Scene configuration file: one strict JSON document per surveillance scene.

Relative paths are resolved against the config file's directory. Unknown keys
are rejected at every level so typos cannot silently change a study.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .randomizer import PRESETS, RandomizationConfig, preset
from .renderer import RenderSettings
from .scene import PLANE_ROLES

TOP_KEYS = {"name", "resolution", "background", "correspondences", "calibration", "intrinsics", "meters_per_unit",
            "layout", "randomization", "render", "annotation", "output"}
PLANE_KEYS = {"role", "corners", "texture", "texture_size"}
INTRINSIC_KEYS = {"focal", "fx", "fy", "cx", "cy", "grid"}
RENDER_KEYS = {"spp", "shadows", "ambient"}
ANNOTATION_KEYS = {"min_visibility"}
TEXTURE_KEYS = {"kind", "params", "seed", "address"}


@dataclass(frozen=True)
class PlaneConfig:
    role: str
    corners: tuple
    texture: object  # "background" or a procedural texture dict
    texture_size: tuple = (256, 256)


@dataclass(frozen=True)
class SceneConfig:
    name: str
    resolution: tuple  # render (width, height)
    layout: tuple  # PlaneConfig
    randomization: RandomizationConfig
    preset_name: str | None = None
    randomization_overrides: dict = dataclasses.field(default_factory=dict)  # keys set on top of the preset
    background: Path | None = None  # image file, or a directory of frames for temporal median
    correspondences: Path | None = None
    calibration: Path | None = None
    intrinsics: dict | None = None  # fx, fy, cx, cy (pixels of the background image) and grid flag
    meters_per_unit: float = 1.0
    render: dict = dataclasses.field(default_factory=dict)
    min_visibility: float = 0.05
    output: Path | None = None
    source: Path | None = None

    def render_settings(self, resolution=None) -> RenderSettings:
        w, h = resolution or self.resolution
        return RenderSettings(int(w), int(h), **self.render)

    def digest(self, extra=None) -> str:
        """Stable hash of everything that influences generated pixels and labels."""
        doc = {
            "layout": [[p.role, [list(c) for c in p.corners], p.texture, list(p.texture_size)] for p in self.layout],
            "randomization": self.randomization.to_dict(),
            "render": self.render,
            "min_visibility": self.min_visibility,
            "meters_per_unit": self.meters_per_unit,
            "extra": extra,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _pair(v, where, cast=int):
    if isinstance(v, str) and "x" in v:
        v = v.lower().split("x")
    try:
        a, b = (cast(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a pair, got {v!r}") from None
    if a <= 0 or b <= 0:
        raise ConfigError(f"{where} must be positive, got {v!r}")
    return a, b


def parse_resolution(text) -> tuple:
    return _pair(text, "resolution")


# keys a preset decides; a preset chosen on the command line replaces them
PRESET_KEYS = ("textures", "light_augmentation", "geometric", "distractors", "distractor_kinds", "car_models")


def _split_randomization(value) -> tuple:
    if isinstance(value, str):
        return value, {}
    if isinstance(value, dict):
        overrides = dict(value)
        return overrides.pop("preset", None), overrides
    if value is None:
        return "full_dr", {}
    raise ConfigError("randomization must be a preset name or an object")


def randomization_from(value, seed=None, preset_name=None) -> tuple:
    """(RandomizationConfig, preset name or None) from a preset name, ``{"preset": ..., overrides}`` or a full dict.

    ``preset_name`` swaps the preset while keeping non-preset overrides such as
    the placement region; ``seed`` replaces the master seed.
    """
    name, overrides = _split_randomization(value)
    if preset_name is not None:
        name = preset_name
        overrides = {k: v for k, v in overrides.items() if k not in PRESET_KEYS}
    if seed is not None:
        overrides["master_seed"] = int(seed)
    if name is not None:
        if name not in PRESETS:
            preset(name)  # raises UnknownPreset with the list of names
        base = preset(name).to_dict()
        base.update(overrides)
        return RandomizationConfig.from_dict(base), name
    return RandomizationConfig.from_dict(overrides), None


def _texture(v, where):
    if v == "background":
        return v
    _check_keys(v, TEXTURE_KEYS, where)
    if "kind" not in v:
        raise ConfigError(f"{where} needs 'kind'")
    return {"kind": v["kind"], "params": dict(v.get("params", {})), "seed": int(v.get("seed", 0)),
            "address": v.get("address", "clamp")}


def _existing(base: Path, v, where, must_exist=True):
    if v is None:
        return None
    p = (base / v).resolve() if not Path(v).is_absolute() else Path(v)
    if must_exist and not p.exists():
        raise ConfigError(f"{where}: file not found: {p}")
    return p


def scene_config_from_dict(doc: dict, base: Path = Path("."), source: Path | None = None) -> SceneConfig:
    _check_keys(doc, TOP_KEYS, "scene config")
    for req in ("layout",):
        if req not in doc:
            raise ConfigError(f"scene config needs '{req}'")
    planes = []
    for i, p in enumerate(doc["layout"]):
        where = f"layout[{i}]"
        _check_keys(p, PLANE_KEYS, where)
        if p.get("role", "ground") not in PLANE_ROLES:
            raise ConfigError(f"{where}.role must be one of {PLANE_ROLES}")
        corners = p.get("corners")
        if not (isinstance(corners, list) and len(corners) == 4 and all(len(c) == 3 for c in corners)):
            raise ConfigError(f"{where}.corners must be 4 [x, y, z] points")
        planes.append(PlaneConfig(p.get("role", "ground"), tuple(tuple(float(x) for x in c) for c in corners),
                                  _texture(p.get("texture", "background"), f"{where}.texture"),
                                  _pair(p.get("texture_size", (256, 256)), f"{where}.texture_size")))
    intr = doc.get("intrinsics")
    if intr == "grid":
        intr = {"grid": True}
    if intr is not None:
        _check_keys(intr, INTRINSIC_KEYS, "intrinsics")
        for k in ("focal", "fx", "fy", "cx", "cy"):
            if k in intr and not (isinstance(intr[k], (int, float)) and intr[k] > 0):
                raise ConfigError(f"intrinsics.{k} must be a positive number")
    render = dict(doc.get("render", {}))
    _check_keys(render, RENDER_KEYS, "render")
    ann = dict(doc.get("annotation", {}))
    _check_keys(ann, ANNOTATION_KEYS, "annotation")
    min_vis = float(ann.get("min_visibility", 0.05))
    if not 0.0 <= min_vis <= 1.0:
        raise ConfigError("annotation.min_visibility must be in [0, 1]")
    mpu = float(doc.get("meters_per_unit", 1.0))
    if not mpu > 0:
        raise ConfigError("meters_per_unit must be positive")
    rcfg, pname = randomization_from(doc.get("randomization"))
    _, rover = _split_randomization(doc.get("randomization"))
    cfg = SceneConfig(
        name=str(doc.get("name", "scene")),
        resolution=_pair(doc.get("resolution", (1440, 810)), "resolution"),
        layout=tuple(planes),
        randomization=rcfg,
        preset_name=pname,
        randomization_overrides=rover,
        background=_existing(base, doc.get("background"), "background"),
        correspondences=_existing(base, doc.get("correspondences"), "correspondences"),
        calibration=_existing(base, doc.get("calibration"), "calibration", must_exist=False),
        intrinsics=intr,
        meters_per_unit=mpu,
        render=render,
        min_visibility=min_vis,
        output=_existing(base, doc.get("output"), "output", must_exist=False),
        source=source,
    )
    try:
        cfg.render_settings()
    except Exception as exc:
        raise ConfigError(f"render: {exc}") from None
    if any(p.texture == "background" for p in planes) and cfg.background is None:
        raise ConfigError("a plane uses the background texture but no 'background' is configured")
    return cfg


def load_scene_config(path) -> SceneConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scene config {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return scene_config_from_dict(doc, path.resolve().parent, path.resolve())
