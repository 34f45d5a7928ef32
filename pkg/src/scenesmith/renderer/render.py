"""Turn a sampled scene into RGB / instance-id / depth rasters through a calibrated camera."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParams
from ..geometry import CameraModel, project_points
from ..randomizer import PlacedObject, SceneInstance
from ..scene import AssetLibrary, SceneLayout, TriangleMesh
from .bvh import Bvh, build_bvh
from .raytrace import (
    ADDR_CLAMP,
    ADDR_REPEAT,
    LIGHT_DIRECTIONAL,
    LIGHT_POINT,
    MAT_FLAT,
    MAT_TEXTURE,
    count_hits_kernel,
    render_kernel,
)


@dataclass(frozen=True)
class RenderSettings:
    width: int
    height: int
    spp: int = 1  # samples per pixel: 1 or a perfect square n*n (stratified grid)
    shadows: bool = True
    ambient: float = 0.15

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidParams(f"bad render size {self.width}x{self.height}")
        n = int(round(self.spp ** 0.5))
        if self.spp < 1 or n * n != self.spp:
            raise InvalidParams(f"spp must be a positive perfect square, got {self.spp}")
        if self.ambient < 0:
            raise InvalidParams("ambient must be >= 0")

    @property
    def grid(self) -> int:
        return int(round(self.spp ** 0.5))


@dataclass(frozen=True)
class RenderFrame:
    rgb: np.ndarray  # (H, W, 3) uint8
    instance: np.ndarray  # (H, W) uint16, 0 = layout / nothing
    depth: np.ndarray  # (H, W) float32 ray distance, inf on miss


def object_transform(obj: PlacedObject, mesh: TriangleMesh):
    """(linear 3x3, offset) taking mesh-local points to world; the scaled mesh bottom rests on z = 0."""
    lin = obj.rotation @ np.diag(obj.scale)
    offset = np.asarray(obj.position, dtype=float) - lin @ np.array([0.0, 0.0, mesh.bounds[0, 2]])
    return lin, offset


def object_vertices(obj: PlacedObject, mesh: TriangleMesh) -> np.ndarray:
    lin, offset = object_transform(obj, mesh)
    return mesh.vertices @ lin.T + offset


def apply_photometric_jitter(rgb: np.ndarray, contrast: float, brightness: float) -> np.ndarray:
    """``clamp((v/255 - 0.5) * contrast + 0.5 + brightness) * 255``, rounded half to even."""
    if not contrast > 0:
        raise InvalidParams(f"contrast must be > 0, got {contrast}")
    v = (np.asarray(rgb, dtype=np.float64) / 255.0 - 0.5) * contrast + 0.5 + brightness
    v = np.clip(v, 0.0, 1.0) * 255.0
    # snap representation noise so exact .5 ties round to even
    return np.rint(np.round(v, 9)).astype(np.uint8)


class RenderContext:
    """Static per-dataset render state: packed textures and layout triangles.

    Materials 0..B-1 are the texture bank, B..B+P-1 the layout plane
    textures; flat colors are appended per frame.
    """

    def __init__(self, layout: SceneLayout, assets: AssetLibrary):
        self.layout = layout
        self.assets = assets
        textures = [(t, ADDR_REPEAT if t.address == "repeat" else ADDR_CLAMP) for t in assets.textures]
        textures += [(p.texture, ADDR_CLAMP) for p in layout.planes]
        sizes = [t.width * t.height for t, _ in textures]
        self.tex_off = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.tex_w = np.array([t.width for t, _ in textures], np.int64)
        self.tex_h = np.array([t.height for t, _ in textures], np.int64)
        self.tex_mode = np.array([m for _, m in textures], np.int64)
        self.tex_data = np.ascontiguousarray(np.concatenate([t.data.reshape(-1, 3) for t, _ in textures]))
        self.n_bank = len(assets.textures)
        tris, uvs, owner = layout.triangles()
        self.layout_tris = tris
        self.layout_uvs = uvs
        self.layout_mat = (self.n_bank + owner).astype(np.int32)

    def mesh_for(self, obj: PlacedObject) -> TriangleMesh:
        return self.assets.cars[obj.mesh] if obj.cls == "car" else self.assets.distractors[obj.mesh]

    def compile(self, scene: SceneInstance, include_layout: bool = True):
        """World triangles, uvs, material and instance id per triangle, plus per-object triangle slices."""
        tris = [self.layout_tris] if include_layout else []
        uvs = [self.layout_uvs] if include_layout else []
        mats = [self.layout_mat] if include_layout else []
        insts = [np.zeros(len(self.layout_tris), np.int32)] if include_layout else []
        flat_colors = []
        n_mat = self.n_bank + len(self.layout.planes)
        slices = {}
        pos = len(self.layout_tris) if include_layout else 0
        for obj in scene.objects:
            mesh = self.mesh_for(obj)
            v = object_vertices(obj, mesh)
            tri = v[mesh.faces]
            if obj.material.source == "bank":
                mat = obj.material.texture_index
            else:
                mat = n_mat + len(flat_colors)
                flat_colors.append(obj.material.color)
            tris.append(tri)
            uvs.append(mesh.uvs)
            mats.append(np.full(len(tri), mat, np.int32))
            insts.append(np.full(len(tri), obj.instance_id, np.int32))
            slices[obj.instance_id] = (pos, pos + len(tri))
            pos += len(tri)
        n_total_mat = n_mat + len(flat_colors)
        mat_kind = np.full(n_total_mat, MAT_TEXTURE, np.int64)
        mat_kind[n_mat:] = MAT_FLAT
        mat_color = np.zeros((n_total_mat, 3))
        if flat_colors:
            mat_color[n_mat:] = np.array(flat_colors, dtype=float) / 255.0
        mat_tex = np.arange(n_total_mat, dtype=np.int64)
        if not tris:
            tris, uvs = [np.zeros((0, 3, 3))], [np.zeros((0, 3, 2))]
            mats, insts = [np.zeros(0, np.int32)], [np.zeros(0, np.int32)]
        return _Compiled(np.concatenate(tris), np.ascontiguousarray(np.concatenate(uvs)),
                         np.concatenate(mats), np.concatenate(insts), mat_kind, mat_color, mat_tex, slices)

    def render(self, scene: SceneInstance, cam: CameraModel, settings: RenderSettings,
               include_layout: bool = True) -> RenderFrame:
        if (cam.width, cam.height) != (settings.width, settings.height):
            cam = cam.scaled(settings.width, settings.height)
        comp = self.compile(scene, include_layout)
        bvh = build_bvh(comp.tris)
        lk, lv, ll, amb = _lights(scene, settings)
        rgb = np.zeros((settings.height, settings.width, 3), np.uint8)
        inst = np.zeros((settings.height, settings.width), np.uint16)
        depth = np.full((settings.height, settings.width), np.inf, np.float32)
        k = cam.intrinsics
        render_kernel(*bvh.arrays(), comp.uvs, comp.mats, comp.insts, comp.mat_kind, comp.mat_color,
                      comp.mat_tex, self.tex_data, self.tex_off, self.tex_w, self.tex_h, self.tex_mode,
                      lk, lv, ll, amb, settings.shadows,
                      np.ascontiguousarray(cam.pose.rotation), np.ascontiguousarray(cam.center),
                      k.fx, k.fy, k.cx, k.cy, settings.grid, float(scene.contrast), float(scene.brightness),
                      rgb, inst, depth)
        return RenderFrame(rgb, inst, depth)

    def solo_pixel_count(self, scene: SceneInstance, obj: PlacedObject, cam: CameraModel,
                         settings: RenderSettings) -> int:
        """Pixels the object would cover if rendered alone (pixel-centre rays, like the instance raster)."""
        if (cam.width, cam.height) != (settings.width, settings.height):
            cam = cam.scaled(settings.width, settings.height)
        mesh = self.mesh_for(obj)
        tri = object_vertices(obj, mesh)[mesh.faces]
        x0, x1, y0, y1 = _screen_window(tri.reshape(-1, 3), cam)
        if x0 >= x1 or y0 >= y1:
            return 0
        bvh = build_bvh(tri)
        k = cam.intrinsics
        return int(count_hits_kernel(*bvh.arrays(), np.ascontiguousarray(cam.pose.rotation),
                                     np.ascontiguousarray(cam.center), k.fx, k.fy, k.cx, k.cy, x0, x1, y0, y1))


@dataclass
class _Compiled:
    tris: np.ndarray
    uvs: np.ndarray
    mats: np.ndarray
    insts: np.ndarray
    mat_kind: np.ndarray
    mat_color: np.ndarray
    mat_tex: np.ndarray
    slices: dict


def _lights(scene: SceneInstance, settings: RenderSettings):
    n = len(scene.lights)
    kind = np.zeros(n, np.int64)
    vec = np.zeros((n, 3))
    lum = np.zeros(n)
    ambient = float(settings.ambient)
    for i, l in enumerate(scene.lights):
        kind[i] = LIGHT_DIRECTIONAL if l.kind == "directional" else LIGHT_POINT
        v = np.asarray(l.vector, dtype=float)
        vec[i] = v / np.linalg.norm(v) if l.kind == "directional" else v
        lum[i] = l.luminosity
        ambient += l.ambient
    return kind, vec, lum, ambient


def _screen_window(points: np.ndarray, cam: CameraModel):
    """Pixel window (x0, x1, y0, y1) that can contain the points' projection; whole image if any is behind."""
    pc = cam.to_camera(points)
    w, h = cam.width, cam.height
    if np.all(pc[:, 2] <= 0):
        return 0, 0, 0, 0
    if np.any(pc[:, 2] <= 1e-6):
        return 0, w, 0, h
    uv = project_points(points, cam)
    x0 = int(np.clip(np.floor(uv[:, 0].min()) - 1, 0, w))
    x1 = int(np.clip(np.ceil(uv[:, 0].max()) + 1, 0, w))
    y0 = int(np.clip(np.floor(uv[:, 1].min()) - 1, 0, h))
    y1 = int(np.clip(np.ceil(uv[:, 1].max()) + 1, 0, h))
    return x0, x1, y0, y1


def render(scene: SceneInstance, layout: SceneLayout, assets: AssetLibrary, cam: CameraModel,
           settings: RenderSettings) -> RenderFrame:
    return RenderContext(layout, assets).render(scene, cam, settings)
