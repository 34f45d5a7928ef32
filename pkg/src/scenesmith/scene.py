"""The 3D world: textured box layout, mesh assets and the procedural texture bank."""
from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import IndexOutOfRange, InvalidParams, MissingGround, NonPlanarQuad, ParseError

PLANE_ROLES = ("ground", "wall", "ceiling")
ADDRESS_MODES = ("clamp", "repeat")
TEXTURE_KINDS = ("checker", "stripes", "perlin-noise", "flat")

NO_DR_PALETTE = (
    ("white", (235, 235, 235)),
    ("black", (22, 22, 24)),
    ("silver", (190, 192, 196)),
    ("gray", (105, 108, 112)),
    ("red", (165, 25, 28)),
    ("blue", (28, 52, 140)),
    ("beige", (196, 176, 140)),
)

CAR_MODELS = ("sedan", "hatchback", "suv", "pickup", "van")
DISTRACTOR_KINDS = ("cube", "sphere", "cone", "capsule")


@dataclass(frozen=True)
class Texture:
    data: np.ndarray  # (H, W, 3) uint8
    address: str = "repeat"

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.uint8)
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise InvalidParams(f"texture must be (H>=1, W>=1, 3), got {d.shape}")
        if self.address not in ADDRESS_MODES:
            raise InvalidParams(f"unknown address mode {self.address!r}")
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class PlaneSpec:
    corners: np.ndarray  # (4, 3), counter-clockwise seen from inside the layout
    texture: Texture
    role: str = "ground"

    def __post_init__(self):
        c = np.array(self.corners, dtype=float)
        if c.shape != (4, 3) or not np.all(np.isfinite(c)):
            raise InvalidParams(f"plane needs 4 finite 3D corners, got shape {c.shape}")
        if self.role not in PLANE_ROLES:
            raise InvalidParams(f"unknown plane role {self.role!r}")
        c.flags.writeable = False
        object.__setattr__(self, "corners", c)

    @property
    def area(self) -> float:
        c = self.corners
        return 0.5 * float(np.linalg.norm(np.cross(c[2] - c[0], c[3] - c[1])))


@dataclass(frozen=True)
class SceneLayout:
    planes: tuple
    bounds: np.ndarray  # (2, 3) min/max

    @property
    def ground(self) -> PlaneSpec:
        return next(p for p in self.planes if p.role == "ground")

    def triangles(self):
        """World-space triangles (N, 3, 3), their uvs (N, 3, 2) and plane index per triangle."""
        tris, uvs, owner = [], [], []
        quad_uv = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        for i, p in enumerate(self.planes):
            for a, b, c in ((0, 1, 2), (0, 2, 3)):
                tris.append(p.corners[[a, b, c]])
                uvs.append(quad_uv[[a, b, c]])
                owner.append(i)
        return np.array(tris), np.array(uvs), np.array(owner, dtype=np.int64)


def _check_quad(c: np.ndarray, idx: int):
    extent = float(np.linalg.norm(c.max(axis=0) - c.min(axis=0)))
    if extent <= 0:
        raise NonPlanarQuad(f"plane {idx}: corners coincide")
    n = np.cross(c[2] - c[0], c[3] - c[1])
    if np.linalg.norm(n) < 1e-12 * extent**2:
        raise NonPlanarQuad(f"plane {idx}: degenerate quad")
    n /= np.linalg.norm(n)
    dev = np.abs((c - c.mean(axis=0)) @ n)
    if dev.max() > 1e-6 * extent:
        raise NonPlanarQuad(f"plane {idx}: corners deviate {dev.max():.3g} from their plane")
    # convexity: every consecutive edge pair turns the same way about n
    turns = [float(np.cross(c[(k + 1) % 4] - c[k], c[(k + 2) % 4] - c[(k + 1) % 4]) @ n) for k in range(4)]
    if not (all(t > 0 for t in turns) or all(t < 0 for t in turns)):
        raise NonPlanarQuad(f"plane {idx}: quad is not convex")


def build_layout(planes) -> SceneLayout:
    """Validate plane quads and wrap them into a layout with slightly inflated world bounds."""
    planes = tuple(planes)
    if not 1 <= len(planes) <= 6:
        raise InvalidParams(f"layout needs 1..6 planes, got {len(planes)}")
    grounds = [p for p in planes if p.role == "ground"]
    if len(grounds) != 1:
        raise MissingGround(f"layout needs exactly one ground plane, got {len(grounds)}")
    for i, p in enumerate(planes):
        _check_quad(p.corners, i)
    pts = np.concatenate([p.corners for p in planes])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    margin = 0.005 * (hi - lo)
    return SceneLayout(planes, np.array([lo - margin, hi + margin]))


# ---------------------------------------------------------------- meshes


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int
    uvs: np.ndarray  # (F, 3, 2) per face corner
    name: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        uv = np.array(self.uvs, dtype=float).reshape(-1, 3, 2)
        if len(f) < 1:
            raise InvalidParams("mesh needs at least one triangle")
        if f.min() < 0 or f.max() >= len(v):
            raise IndexOutOfRange("face index out of range")
        if not np.all(np.isfinite(v)):
            raise InvalidParams("non-finite vertex")
        if len(uv) != len(f):
            raise InvalidParams("uvs must have one (3, 2) entry per face")
        for a in (v, f, uv):
            a.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "uvs", uv)

    @property
    def bounds(self) -> np.ndarray:
        return np.array([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    @property
    def extent(self) -> np.ndarray:
        b = self.bounds
        return b[1] - b[0]

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]


def _parse_index(tok: str, count: int, lineno: int, what: str) -> int:
    try:
        i = int(tok)
    except ValueError:
        raise ParseError(f"bad {what} index {tok!r}", lineno) from None
    if i == 0:
        raise IndexOutOfRange(f"{what} index 0 is invalid (indices start at 1)", lineno)
    j = i - 1 if i > 0 else count + i
    if not 0 <= j < count:
        raise IndexOutOfRange(f"{what} index {i} outside 1..{count}", lineno)
    return j


def load_mesh(text: str, name: str = "") -> TriangleMesh:
    """Parse Wavefront-style ``v``/``vt``/``f`` records; other records are ignored."""
    verts, tex, faces, face_uv = [], [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise ParseError("vertex needs 3 coordinates", lineno)
            try:
                verts.append([float(x) for x in rest[:3]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
        elif tag == "vt":
            if len(rest) < 2:
                raise ParseError("texture coordinate needs 2 values", lineno)
            try:
                tex.append([float(x) for x in rest[:2]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
        elif tag == "f":
            if len(rest) not in (3, 4):
                raise ParseError(f"only triangles and quads are supported, got {len(rest)} vertices", lineno)
            vi, ti = [], []
            for tok in rest:
                parts = tok.split("/")
                if len(parts) > 2:
                    raise ParseError(f"unsupported face token {tok!r}", lineno)
                vi.append(_parse_index(parts[0], len(verts), lineno, "vertex"))
                if len(parts) == 2 and parts[1]:
                    ti.append(_parse_index(parts[1], len(tex), lineno, "texture"))
            if ti and len(ti) != len(vi):
                raise ParseError("mixed face forms", lineno)
            for a, b, c in ((0, 1, 2), (0, 2, 3))[: len(vi) - 2]:
                faces.append([vi[a], vi[b], vi[c]])
                face_uv.append([tex[ti[k]] for k in (a, b, c)] if ti else [[0.0, 0.0]] * 3)
        # other records (vn, o, g, s, usemtl, ...) carry nothing we need
    if not faces:
        raise ParseError("mesh contains no faces")
    return TriangleMesh(np.array(verts), np.array(faces), np.array(face_uv), name)


def mesh_to_obj(mesh: TriangleMesh) -> str:
    lines = [f"# {mesh.name}" if mesh.name else "# mesh"]
    lines += [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines += [f"vt {u:.6f} {v:.6f}" for u, v in mesh.uvs.reshape(-1, 2)]
    for k, (a, b, c) in enumerate(mesh.faces):
        t = 3 * k + 1
        lines.append(f"f {a + 1}/{t} {b + 1}/{t + 1} {c + 1}/{t + 2}")
    return "\n".join(lines) + "\n"


def planar_uvs(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Per-face box projection: drop the dominant normal axis, one texture repeat per unit."""
    tri = vertices[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    axis = np.argmax(np.abs(n), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[axis]
    return np.take_along_axis(tri, keep[:, None, :].repeat(3, axis=1), axis=2)


def _mesh(vertices, faces, name):
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=np.int64)
    return TriangleMesh(v, f, planar_uvs(v, f), name)


def hexahedron_faces(offset: int = 0) -> list:
    # vertex order: bottom 0-3 (ccw from above), top 4-7 above them
    quads = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
    out = []
    for a, b, c, d in quads:
        out += [(a + offset, b + offset, c + offset), (a + offset, c + offset, d + offset)]
    return out


def box_mesh(size=(1.0, 1.0, 1.0), name="cube") -> TriangleMesh:
    sx, sy, sz = size
    x, y = sx / 2, sy / 2
    v = [(-x, -y, 0), (x, -y, 0), (x, y, 0), (-x, y, 0), (-x, -y, sz), (x, -y, sz), (x, y, sz), (-x, y, sz)]
    return _mesh(v, hexahedron_faces(), name)


def _revolve(profile, segments, name):
    """Surface of revolution about +Z from a (radius, z) profile; zero radii become poles."""
    verts, faces, rings = [], [], []
    for r, z in profile:
        if r <= 1e-12:
            rings.append([len(verts)])
            verts.append((0.0, 0.0, z))
        else:
            ring = []
            for k in range(segments):
                a = 2 * math.pi * k / segments
                ring.append(len(verts))
                verts.append((r * math.cos(a), r * math.sin(a), z))
            rings.append(ring)
    for lo, hi in zip(rings[:-1], rings[1:]):
        for k in range(segments):
            k1 = (k + 1) % segments
            if len(lo) == 1:
                faces.append((lo[0], hi[k1], hi[k]))
            elif len(hi) == 1:
                faces.append((lo[k], lo[k1], hi[0]))
            else:
                faces += [(lo[k], lo[k1], hi[k1]), (lo[k], hi[k1], hi[k])]
    return _mesh(verts, faces, name)


def sphere_mesh(diameter=1.0, segments=16, rings=10, name="sphere") -> TriangleMesh:
    r = diameter / 2
    prof = [(r * math.sin(math.pi * i / rings), r - r * math.cos(math.pi * i / rings)) for i in range(rings + 1)]
    prof[0], prof[-1] = (0.0, 0.0), (0.0, diameter)
    return _revolve(prof, segments, name)


def cone_mesh(radius=0.5, height=1.0, segments=16, name="cone") -> TriangleMesh:
    return _revolve([(0.0, 0.0), (radius, 0.0), (0.0, height)], segments, name)


def capsule_mesh(radius=0.25, height=1.7, segments=12, cap_rings=4, name="capsule") -> TriangleMesh:
    prof = [(0.0, 0.0)]
    for i in range(1, cap_rings + 1):
        a = math.pi / 2 * i / cap_rings
        prof.append((radius * math.sin(a), radius - radius * math.cos(a)))
    for i in range(cap_rings - 1, 0, -1):
        a = math.pi / 2 * i / cap_rings
        prof.append((radius * math.sin(a), height - radius + radius * math.cos(a)))
    prof.append((0.0, height))
    return _revolve(prof, segments, name)


def distractor_mesh(kind: str) -> TriangleMesh:
    """Unit-sized distractor shapes resting on z = 0; the capsule is the pedestrian proxy."""
    if kind == "cube":
        return box_mesh()
    if kind == "sphere":
        return sphere_mesh()
    if kind == "cone":
        return cone_mesh()
    if kind == "capsule":
        return capsule_mesh()
    raise InvalidParams(f"unknown distractor kind {kind!r}")


# ---------------------------------------------------------------- textures


def _color(v, what="color"):
    c = tuple(int(x) for x in v)
    if len(c) != 3 or not all(0 <= x <= 255 for x in c):
        raise InvalidParams(f"{what} must be 3 integers in [0, 255], got {v!r}")
    return c


def _perlin(size_w, size_h, period, rng) -> np.ndarray:
    """Periodic 2D gradient noise in roughly [-1, 1] with ``period`` lattice cells across the texture."""
    angles = rng.uniform(0.0, 2 * math.pi, (period, period))
    gx, gy = np.cos(angles), np.sin(angles)
    xs = (np.arange(size_w) + 0.5) * period / size_w
    ys = (np.arange(size_h) + 0.5) * period / size_h
    x, y = np.meshgrid(xs, ys)
    x0, y0 = np.floor(x).astype(int), np.floor(y).astype(int)
    fx, fy = x - x0, y - y0

    def dot(ix, iy, dx, dy):
        ix, iy = ix % period, iy % period
        return gx[iy, ix] * dx + gy[iy, ix] * dy

    n00 = dot(x0, y0, fx, fy)
    n10 = dot(x0 + 1, y0, fx - 1, fy)
    n01 = dot(x0, y0 + 1, fx, fy - 1)
    n11 = dot(x0 + 1, y0 + 1, fx - 1, fy - 1)
    sx = fx * fx * fx * (fx * (fx * 6 - 15) + 10)
    sy = fy * fy * fy * (fy * (fy * 6 - 15) + 10)
    nx0 = n00 + sx * (n10 - n00)
    nx1 = n01 + sx * (n11 - n01)
    return math.sqrt(2) * (nx0 + sy * (nx1 - nx0))


def procedural_texture(kind: str, params: dict | None = None, seed: int = 0) -> Texture:
    """Deterministic texture from ``(kind, params, seed)``.

    Parameters (all optional unless noted):

    * every kind: ``width``/``height`` in pixels (1..4096, default 64)
    * ``flat``: ``color`` (required)
    * ``checker``: ``cell`` px (>= 1, default 8), ``colors`` pair
    * ``stripes``: ``period`` px (>= 2), ``duty`` in (0, 1), ``vertical`` flag, ``colors`` pair
    * ``perlin-noise``: ``cells`` lattice cells per side (1..64), ``octaves`` (1..6), ``colors`` pair

    When ``colors`` is omitted for a two-color kind, it is drawn from ``seed``.
    """
    p = dict(params or {})
    if kind not in TEXTURE_KINDS:
        raise InvalidParams(f"unknown texture kind {kind!r}")
    w, h = int(p.pop("width", 64)), int(p.pop("height", 64))
    if not (1 <= w <= 4096 and 1 <= h <= 4096):
        raise InvalidParams(f"texture size {w}x{h} outside 1..4096")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, TEXTURE_KINDS.index(kind)]))

    if kind == "flat":
        if "color" not in p:
            raise InvalidParams("flat texture needs 'color'")
        c = _color(p.pop("color"))
        _reject_extra(kind, p)
        return Texture(np.broadcast_to(np.array(c, np.uint8), (h, w, 3)).copy())

    if "colors" in p:
        c0, c1 = (_color(c, "colors entry") for c in p.pop("colors"))
    else:
        c0, c1 = (tuple(int(x) for x in rng.integers(0, 256, 3)) for _ in range(2))
    ys, xs = np.mgrid[0:h, 0:w]

    if kind == "checker":
        cell = int(p.pop("cell", 8))
        if cell < 1:
            raise InvalidParams("checker cell must be >= 1")
        mask = ((xs // cell) + (ys // cell)) % 2 == 1
    elif kind == "stripes":
        period = int(p.pop("period", 8))
        duty = float(p.pop("duty", 0.5))
        vertical = bool(p.pop("vertical", False))
        if period < 2 or not 0 < duty < 1:
            raise InvalidParams("stripes need period >= 2 and 0 < duty < 1")
        coord = xs if vertical else ys
        mask = (coord % period) >= duty * period
    else:
        cells = int(p.pop("cells", 4))
        octaves = int(p.pop("octaves", 3))
        if not (1 <= cells <= 64 and 1 <= octaves <= 6):
            raise InvalidParams("perlin-noise needs 1 <= cells <= 64 and 1 <= octaves <= 6")
        acc = np.zeros((h, w))
        amp, total = 1.0, 0.0
        for o in range(octaves):
            acc += amp * _perlin(w, h, cells * 2**o, rng)
            total += amp
            amp *= 0.5
        t = np.clip(0.5 + 0.5 * acc / total, 0.0, 1.0)[..., None]
        img = np.rint((1 - t) * np.array(c0) + t * np.array(c1))
        _reject_extra(kind, p)
        return Texture(img.astype(np.uint8))

    _reject_extra(kind, p)
    img = np.where(mask[..., None], np.array(c1, np.uint8), np.array(c0, np.uint8))
    return Texture(img.astype(np.uint8))


def _reject_extra(kind, p):
    if p:
        raise InvalidParams(f"unknown {kind} parameter(s): {', '.join(sorted(p))}")


def texture_digest(textures) -> str:
    h = hashlib.sha256()
    for t in textures:
        h.update(f"{t.width}x{t.height}:{t.address};".encode())
        h.update(t.data.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- assets


@dataclass(frozen=True)
class AssetLibrary:
    cars: dict  # name -> TriangleMesh, in CAR_MODELS order
    distractors: dict  # kind -> TriangleMesh
    textures: tuple  # bank
    palette: tuple = NO_DR_PALETTE
    texture_manifest: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if len(self.cars) < 5:
            raise InvalidParams(f"asset library needs >= 5 car meshes, got {len(self.cars)}")
        if set(self.distractors) != set(DISTRACTOR_KINDS):
            raise InvalidParams(f"distractors must be exactly {DISTRACTOR_KINDS}")

    @property
    def car_names(self) -> tuple:
        return tuple(self.cars)

    def in_scene_units(self, meters_per_unit: float) -> "AssetLibrary":
        """Library whose car meshes (authored in meters) are expressed in scene units.

        Distractor shapes are already specified in scene units.
        """
        if meters_per_unit == 1.0:
            return self
        k = 1.0 / meters_per_unit
        cars = {n: TriangleMesh(m.vertices * k, m.faces, m.uvs, m.name) for n, m in self.cars.items()}
        return dataclasses.replace(self, cars=cars)


def _asset_text(*parts) -> str:
    return resources.files("scenesmith").joinpath("assets", *parts).read_text()


def load_texture_manifest(text: str | None = None) -> list:
    doc = json.loads(text if text is not None else _asset_text("texture_bank.json"))
    entries = doc["textures"]
    for i, e in enumerate(entries):
        if set(e) != {"kind", "params", "seed"}:
            raise ParseError(f"texture bank entry {i} must have exactly kind, params, seed")
    return entries


def build_texture_bank(entries) -> tuple:
    return tuple(procedural_texture(e["kind"], e["params"], e["seed"]) for e in entries)


@functools.lru_cache(maxsize=1)
def default_assets() -> AssetLibrary:
    """The bundled asset library (5 cars, 4 distractor shapes, 50 textures, 7-color palette)."""
    cars = {n: load_mesh(_asset_text("cars", f"{n}.obj"), n) for n in CAR_MODELS}
    distractors = {k: distractor_mesh(k) for k in DISTRACTOR_KINDS}
    entries = load_texture_manifest()
    return AssetLibrary(cars, distractors, build_texture_bank(entries), NO_DR_PALETTE, tuple(
        json.dumps(e, sort_keys=True) for e in entries))
