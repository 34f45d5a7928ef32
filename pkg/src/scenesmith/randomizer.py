"""Randomized scene sampling: content (cars, placement, shape) and style (materials, lights, photometry)."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConfigOutOfBounds, UnknownPreset
from .geometry import rot_z
from .scene import CAR_MODELS, DISTRACTOR_KINDS, AssetLibrary, SceneLayout, TriangleMesh

MASK64 = (1 << 64) - 1
MAX_PLACEMENT_ATTEMPTS = 100


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def frame_seed(master_seed: int, frame_index: int) -> int:
    """Per-frame 64-bit seed; frames can be sampled in any order."""
    return splitmix64(splitmix64(master_seed & MASK64) ^ (frame_index & MASK64))


@dataclass(frozen=True)
class RandomizationConfig:
    master_seed: int = 0
    textures: bool = True  # T
    light_augmentation: bool = True  # LA
    geometric: bool = True  # G
    distractors: bool = True  # D
    # distractor kinds allowed when D is on; the no-DR baseline keeps pedestrians only
    distractor_kinds: tuple = DISTRACTOR_KINDS
    car_models: tuple = CAR_MODELS
    car_count: tuple = (1, 8)
    distractor_count: tuple = (0, 8)
    distractor_size: tuple = (0.3, 2.0)
    scale_range: tuple = (0.85, 1.15)
    light_count: tuple = (1, 3)
    luminosity: tuple = (0.4, 1.6)
    light_elevation_deg: tuple = (20.0, 80.0)
    contrast: tuple = (0.8, 1.2)
    brightness: tuple = (-0.1, 0.1)
    point_light_fraction: float = 0.3
    point_light_distance: float = 30.0
    placement_region: tuple | None = None  # ground polygon [(x, y), ...]; None = whole ground plane
    min_separation: float = 0.5
    camera_jitter_elevation_deg: tuple = (0.0, 0.0)
    camera_jitter_azimuth_deg: tuple = (0.0, 0.0)

    def __post_init__(self):
        ranges = ("car_count", "distractor_count", "distractor_size", "scale_range", "light_count", "luminosity",
                  "light_elevation_deg", "contrast", "brightness", "camera_jitter_elevation_deg",
                  "camera_jitter_azimuth_deg")
        for name in ranges:
            r = tuple(getattr(self, name))
            if len(r) != 2 or not r[0] <= r[1]:
                raise ConfigError(f"{name} must be a [lo, hi] pair with lo <= hi, got {list(r)}")
            object.__setattr__(self, name, r)
        for name in ("car_count", "distractor_count", "light_count"):
            lo, hi = getattr(self, name)
            if lo < 0 or int(lo) != lo or int(hi) != hi:
                raise ConfigError(f"{name} must hold non-negative integers")
            object.__setattr__(self, name, (int(lo), int(hi)))
        if self.luminosity[0] <= 0:
            raise ConfigError("luminosity must be positive")
        if self.contrast[0] <= 0:
            raise ConfigError("contrast must be positive")
        if self.scale_range[0] <= 0 or self.distractor_size[0] <= 0:
            raise ConfigError("scales must be positive")
        if self.min_separation < 0:
            raise ConfigError("min_separation must be >= 0")
        if not 0 <= self.point_light_fraction <= 1:
            raise ConfigError("point_light_fraction must be in [0, 1]")
        object.__setattr__(self, "car_models", tuple(self.car_models))
        object.__setattr__(self, "distractor_kinds", tuple(self.distractor_kinds))
        unknown = set(self.car_models) - set(CAR_MODELS)
        if not self.car_models or unknown:
            raise ConfigError(f"car_models must be a non-empty subset of {CAR_MODELS}")
        if set(self.distractor_kinds) - set(DISTRACTOR_KINDS):
            raise ConfigError(f"distractor_kinds must be a subset of {DISTRACTOR_KINDS}")
        if self.placement_region is not None:
            poly = tuple(tuple(float(c) for c in p) for p in self.placement_region)
            if len(poly) < 3 or any(len(p) != 2 for p in poly):
                raise ConfigError("placement_region needs >= 3 (x, y) vertices")
            if not polygon_is_simple(poly):
                raise ConfigError("placement_region must be a simple polygon")
            object.__setattr__(self, "placement_region", poly)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomizationConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown randomization key(s): {', '.join(sorted(unknown))}")
        kw = {}
        for k, v in d.items():
            if k == "placement_region" and v is not None:
                v = tuple(tuple(p) for p in v)
            elif isinstance(v, list):
                v = tuple(v)
            kw[k] = v
        return cls(**kw)


PRESETS = ("full_dr", "no_dr_baseline", "ablation_T", "ablation_LA", "ablation_G", "ablation_D")

# condition label for each preset, as used in ablation tables
CONDITION_LABELS = {
    "full_dr": "T + LA + D + G",
    "ablation_T": "LA + G + D",
    "ablation_LA": "T + G + D",
    "ablation_G": "T + LA + D",
    "ablation_D": "T + LA + G",
}


def preset(name: str, **overrides) -> RandomizationConfig:
    if name == "full_dr":
        cfg = RandomizationConfig()
    elif name == "no_dr_baseline":
        cfg = RandomizationConfig(textures=False, light_augmentation=False, geometric=False, distractors=True,
                                  distractor_kinds=("capsule",), car_models=CAR_MODELS[:4])
    elif name == "ablation_T":
        cfg = RandomizationConfig(textures=False)
    elif name == "ablation_LA":
        cfg = RandomizationConfig(light_augmentation=False)
    elif name == "ablation_G":
        cfg = RandomizationConfig(geometric=False)
    elif name == "ablation_D":
        cfg = RandomizationConfig(distractors=False)
    else:
        raise UnknownPreset(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------- scene types


@dataclass(frozen=True)
class Material:
    """Either a texture-bank index or a flat RGB color; ``source`` records which pool it came from."""
    source: str  # "bank" | "palette"
    texture_index: int = -1
    color: tuple = (0, 0, 0)
    name: str = ""


@dataclass(frozen=True)
class PlacedObject:
    mesh: str  # car model name or distractor kind
    cls: str  # "car" or distractor kind
    position: tuple  # (x, y, 0)
    yaw: float
    scale: tuple  # (sx, sy, sz)
    material: Material
    instance_id: int

    @property
    def rotation(self) -> np.ndarray:
        return rot_z(self.yaw)


@dataclass(frozen=True)
class LightSpec:
    kind: str  # "directional" | "point"
    vector: tuple  # unit direction towards the light, or the light position
    luminosity: float
    ambient: float = 0.0


@dataclass(frozen=True)
class SceneInstance:
    objects: tuple
    lights: tuple
    contrast: float
    brightness: float
    frame_seed: int
    dropped: int = 0
    camera_jitter: tuple = (0.0, 0.0)  # (elevation, azimuth) radians about the scene target

    def summary(self) -> dict:
        return {
            "frame_seed": self.frame_seed,
            "dropped": self.dropped,
            "lights": [[l.kind, list(l.vector), l.luminosity, l.ambient] for l in self.lights],
            "contrast": self.contrast,
            "brightness": self.brightness,
            "camera_jitter": list(self.camera_jitter),
            "objects": [{
                "instance_id": o.instance_id, "class": o.cls, "mesh": o.mesh,
                "position": list(o.position), "yaw": o.yaw, "scale": list(o.scale),
                "material": {"source": o.material.source, "texture_index": o.material.texture_index,
                             "color": list(o.material.color), "name": o.material.name},
            } for o in self.objects],
        }


# ---------------------------------------------------------------- 2D helpers


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def polygon_is_simple(poly) -> bool:
    n = len(poly)
    area2 = sum(poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1] for i in range(n))
    if abs(area2) < 1e-12:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if abs(i - j) in (1, n - 1):
                continue
            if _segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                return False
    return True


def point_in_polygon(x: float, y: float, poly) -> bool:
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def footprint_corners(center, half_extents, yaw: float) -> np.ndarray:
    """Corners (4, 2) of an oriented ground rectangle."""
    c, s = math.cos(yaw), math.sin(yaw)
    hx, hy = half_extents
    local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    return local @ np.array([[c, s], [-s, c]]) + np.asarray(center, dtype=float)


def rects_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quads given as (4, 2) corner arrays."""
    for quad in (a, b):
        for k in range(2):
            edge = quad[k + 1] - quad[k]
            axis = np.array([-edge[1], edge[0]])
            pa, pb = a @ axis, b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def object_footprint(obj: PlacedObject, mesh: TriangleMesh, margin: float = 0.0) -> np.ndarray:
    lo, hi = mesh.bounds
    sx, sy, _ = obj.scale
    local_center = np.array([(lo[0] + hi[0]) / 2 * sx, (lo[1] + hi[1]) / 2 * sy])
    half = np.array([(hi[0] - lo[0]) / 2 * sx, (hi[1] - lo[1]) / 2 * sy]) + margin
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    center = np.array(obj.position[:2]) + np.array([[c, -s], [s, c]]) @ local_center
    return footprint_corners(center, half, obj.yaw)


def footprint_overlap(a: PlacedObject, b: PlacedObject, assets: AssetLibrary | None = None,
                      margin: float = 0.0) -> bool:
    """True iff the oriented ground footprints of ``a`` and ``b`` intersect.

    ``margin`` grows each footprint by half of it, so footprints closer than
    ``margin`` also count as overlapping.
    """
    return rects_overlap(object_footprint(a, mesh_for(a, assets), margin / 2),
                         object_footprint(b, mesh_for(b, assets), margin / 2))


def mesh_for(obj: PlacedObject, assets: AssetLibrary | None) -> TriangleMesh:
    if assets is None:
        from .scene import default_assets
        assets = default_assets()
    return assets.cars[obj.mesh] if obj.cls == "car" else assets.distractors[obj.mesh]


# ---------------------------------------------------------------- sampling


def _uniform(rng, r) -> float:
    lo, hi = r
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _integer(rng, r) -> int:
    return int(rng.integers(r[0], r[1] + 1))


def placement_polygon(cfg: RandomizationConfig, layout: SceneLayout):
    ground = layout.ground.corners
    if cfg.placement_region is None:
        return tuple((float(x), float(y)) for x, y, _ in ground)
    gpoly = [(float(x), float(y)) for x, y, _ in ground]
    tol = 1e-9 * float(np.ptp(ground[:, :2]))
    for x, y in cfg.placement_region:
        if not (point_in_polygon(x, y, gpoly) or _on_boundary(x, y, gpoly, tol)):
            raise ConfigOutOfBounds(f"placement vertex ({x}, {y}) lies outside the ground plane")
    return cfg.placement_region


def _on_boundary(x, y, poly, tol) -> bool:
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        L2 = dx * dx + dy * dy
        t = min(1.0, max(0.0, ((x - x1) * dx + (y - y1) * dy) / L2)) if L2 > 0 else 0.0
        if math.hypot(x - x1 - t * dx, y - y1 - t * dy) <= tol:
            return True
    return False


def _sample_material(rng, cfg: RandomizationConfig, assets: AssetLibrary) -> Material:
    if cfg.textures:
        i = int(rng.integers(len(assets.textures)))
        return Material("bank", texture_index=i, name=f"bank:{i}")
    name, color = assets.palette[int(rng.integers(len(assets.palette)))]
    return Material("palette", color=tuple(color), name=name)


def _sample_point(rng, poly, bbox):
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        x, y = rng.uniform(bbox[0], bbox[2]), rng.uniform(bbox[1], bbox[3])
        if point_in_polygon(x, y, poly):
            return float(x), float(y)
    return None


def fixed_lights() -> tuple:
    """The constant lighting used when light augmentation is off: one sun at 45 degrees elevation."""
    e = math.radians(45.0)
    a = math.radians(-60.0)
    return (LightSpec("directional", (math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)), 1.0),)


def _sample_lights(rng, cfg: RandomizationConfig, anchor) -> tuple:
    lights = []
    for _ in range(_integer(rng, cfg.light_count)):
        elev = math.radians(_uniform(rng, cfg.light_elevation_deg))
        az = float(rng.uniform(-math.pi, math.pi))
        lum = _uniform(rng, cfg.luminosity)
        d = (math.cos(elev) * math.cos(az), math.cos(elev) * math.sin(az), math.sin(elev))
        if rng.uniform() < cfg.point_light_fraction:
            pos = tuple(float(anchor[i] + cfg.point_light_distance * d[i]) for i in range(3))
            lights.append(LightSpec("point", pos, lum))
        else:
            lights.append(LightSpec("directional", d, lum))
    return tuple(lights)


def sample_scene(cfg: RandomizationConfig, layout: SceneLayout, assets: AssetLibrary, frame_index: int) -> SceneInstance:
    """Draw one randomized scene; a pure function of its arguments."""
    poly = placement_polygon(cfg, layout)
    xs, ys = [p[0] for p in poly], [p[1] for p in poly]
    bbox = (min(xs), min(ys), max(xs), max(ys))
    seed = frame_seed(cfg.master_seed, frame_index)
    rng = np.random.Generator(np.random.PCG64(seed))

    placed: list[PlacedObject] = []
    car_prints: list[np.ndarray] = []
    dropped = 0
    models = cfg.car_models

    n_cars = _integer(rng, cfg.car_count)
    for _ in range(n_cars):
        model = models[int(rng.integers(len(models)))]
        mesh = assets.cars[model]
        yaw = float(rng.uniform(-math.pi, math.pi))
        scale = tuple(_uniform(rng, cfg.scale_range) for _ in range(3)) if cfg.geometric else (1.0, 1.0, 1.0)
        material = _sample_material(rng, cfg, assets)
        obj = _place(rng, poly, bbox, mesh, PlacedObject(model, "car", (0.0, 0.0, 0.0), yaw, scale, material,
                                                         len(placed) + 1), car_prints, cfg.min_separation)
        if obj is None:
            dropped += 1
            continue
        placed.append(obj)
        car_prints.append(object_footprint(obj, mesh, cfg.min_separation / 2))

    if cfg.distractors and cfg.distractor_kinds:
        kinds = cfg.distractor_kinds
        for _ in range(_integer(rng, cfg.distractor_count)):
            kind = kinds[int(rng.integers(len(kinds)))]
            mesh = assets.distractors[kind]
            yaw = float(rng.uniform(-math.pi, math.pi))
            if kind == "capsule":
                # pedestrian proxy keeps its authored size; G adds the usual perturbation
                scale = tuple(_uniform(rng, cfg.scale_range) for _ in range(3)) if cfg.geometric else (1.0, 1.0, 1.0)
            else:
                size = _uniform(rng, cfg.distractor_size)
                scale = (size, size, size)
            material = _sample_material(rng, cfg, assets)
            obj = _place(rng, poly, bbox, mesh, PlacedObject(kind, kind, (0.0, 0.0, 0.0), yaw, scale, material,
                                                             len(placed) + 1), car_prints, 0.0)
            if obj is None:
                dropped += 1
                continue
            placed.append(obj)

    if cfg.light_augmentation:
        anchor = (sum(xs) / len(xs), sum(ys) / len(ys), 0.0)
        lights = _sample_lights(rng, cfg, anchor)
        contrast = _uniform(rng, cfg.contrast)
        brightness = _uniform(rng, cfg.brightness)
    else:
        lights, contrast, brightness = fixed_lights(), 1.0, 0.0

    jitter = (math.radians(_uniform(rng, cfg.camera_jitter_elevation_deg)),
              math.radians(_uniform(rng, cfg.camera_jitter_azimuth_deg)))
    return SceneInstance(tuple(placed), lights, contrast, brightness, seed, dropped, jitter)


def _place(rng, poly, bbox, mesh, template: PlacedObject, blockers, margin):
    """Rejection-sample a position for ``template``; None after exhausting the attempt budget."""
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        pt = _sample_point(rng, poly, bbox)
        if pt is None:
            continue
        obj = dataclasses.replace(template, position=(pt[0], pt[1], 0.0))
        fp = object_footprint(obj, mesh, margin / 2)
        if not any(rects_overlap(fp, other) for other in blockers):
            return obj
    return None
