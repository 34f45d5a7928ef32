"""Regenerate the bundled car meshes and texture-bank manifest under src/scenesmith/assets/.

Run from the repo root: ``python scripts/author_assets.py``. The outputs are
committed; this script only documents how they were made.
"""
import json
import math
from pathlib import Path

import numpy as np

from scenesmith.scene import TriangleMesh, hexahedron_faces, mesh_to_obj, planar_uvs

ASSETS = Path(__file__).resolve().parents[1] / "src" / "scenesmith" / "assets"

# length, width, height, clearance, beltline, cabin (bottom x0, x1), (top x0, x1), wheel radius, hood drop
CARS = {
    "sedan": dict(L=4.6, W=1.80, H=1.45, clear=0.18, belt=0.85, cab=(-1.45, 1.05), roof=(-0.95, 0.45), wr=0.32, nose=0.15),
    "hatchback": dict(L=4.0, W=1.75, H=1.50, clear=0.17, belt=0.88, cab=(-1.90, 0.85), roof=(-1.80, 0.25), wr=0.31, nose=0.15),
    "suv": dict(L=4.7, W=1.90, H=1.75, clear=0.25, belt=1.05, cab=(-2.25, 1.00), roof=(-2.15, 0.55), wr=0.38, nose=0.10),
    "pickup": dict(L=5.3, W=1.95, H=1.80, clear=0.28, belt=1.05, cab=(-0.55, 1.20), roof=(-0.45, 0.80), wr=0.40, nose=0.08),
    "van": dict(L=5.0, W=2.00, H=2.00, clear=0.20, belt=1.00, cab=(-2.45, 1.85), roof=(-2.40, 1.20), wr=0.34, nose=0.12),
}


def car(name, L, W, H, clear, belt, cab, roof, wr, nose):
    v, f = [], []

    def hexa(bottom, top):
        base = len(v)
        v.extend(bottom + top)
        f.extend(hexahedron_faces(base))

    x0, x1, y = -L / 2, L / 2, W / 2
    # lower body, hood sloping down towards the nose
    hexa([(x0, -y, clear), (x1, -y, clear), (x1, y, clear), (x0, y, clear)],
         [(x0, -y, belt), (x1, -y, belt - nose), (x1, y, belt - nose), (x0, y, belt)])
    # cabin with tumblehome
    yt = y - 0.12
    hexa([(cab[0], -y + 0.02, belt), (cab[1], -y + 0.02, belt), (cab[1], y - 0.02, belt), (cab[0], y - 0.02, belt)],
         [(roof[0], -yt, H), (roof[1], -yt, H), (roof[1], yt, H), (roof[0], yt, H)])
    # wheels: octagonal prisms along Y, bottom touching z = 0
    for wx in (x0 + 0.22 * L, x1 - 0.2 * L):
        for side in (-1, 1):
            ya, yb = side * (y - 0.02), side * (y - 0.27)
            ring_a, ring_b = [], []
            for k in range(8):
                a = 2 * math.pi * (k + 0.5) / 8
                px, pz = wx + wr * math.cos(a), wr + wr * math.sin(a) / math.cos(math.pi / 8)
                pz = max(pz, 0.0)
                ring_a.append(len(v)); v.append((px, ya, pz))
                ring_b.append(len(v)); v.append((px, yb, pz))
            for k in range(8):
                k1 = (k + 1) % 8
                f.append((ring_a[k], ring_a[k1], ring_b[k1]))
                f.append((ring_a[k], ring_b[k1], ring_b[k]))
            for ring in (ring_a, ring_b):
                for k in range(1, 7):
                    f.append((ring[0], ring[k], ring[k + 1]))
    verts = np.array(v, dtype=float)
    verts[:, 2] -= verts[:, 2].min()
    faces = np.array(f)
    return TriangleMesh(verts, faces, planar_uvs(verts, faces), name)


def texture_manifest():
    rng = np.random.default_rng(20190107)
    entries = []

    def colors():
        return [[int(x) for x in rng.integers(0, 256, 3)] for _ in range(2)]

    for i in range(14):
        entries.append({"kind": "checker", "params": {"cell": int(rng.choice([2, 4, 8, 16])), "colors": colors()}, "seed": 100 + i})
    for i in range(12):
        entries.append({"kind": "stripes", "params": {"period": int(rng.choice([4, 8, 12, 16])),
                        "duty": round(float(rng.uniform(0.2, 0.8)), 3), "vertical": bool(i % 2), "colors": colors()}, "seed": 200 + i})
    for i in range(16):
        entries.append({"kind": "perlin-noise", "params": {"cells": int(rng.choice([2, 4, 8])),
                        "octaves": int(rng.integers(1, 5)), "colors": colors()}, "seed": 300 + i})
    for i in range(8):
        entries.append({"kind": "flat", "params": {"color": colors()[0]}, "seed": 400 + i})
    return entries


if __name__ == "__main__":
    (ASSETS / "cars").mkdir(parents=True, exist_ok=True)
    for name, spec in CARS.items():
        mesh = car(name, **spec)
        (ASSETS / "cars" / f"{name}.obj").write_text(mesh_to_obj(mesh))
        print(name, len(mesh.faces), "triangles, extent", np.round(mesh.extent, 3))
    entries = texture_manifest()
    doc = {"version": 1, "textures": entries}
    (ASSETS / "texture_bank.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(len(entries), "texture bank entries")
