import math
import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from scenesmith.geometry import CameraIntrinsics, CameraModel, CameraPose  # noqa: E402
from scenesmith.scene import PlaneSpec, build_layout, default_assets, procedural_texture  # noqa: E402


def flat(rgb, size=4):
    return procedural_texture("flat", {"color": list(rgb), "width": size, "height": size})


@pytest.fixture(scope="session")
def assets():
    return default_assets()


@pytest.fixture
def ground_layout():
    return build_layout([PlaneSpec([(-30, -10, 0), (30, -10, 0), (30, 50, 0), (-30, 50, 0)], flat((128, 128, 128)))])


def down45_camera(width=160, height=90, focal=None, height_above=10.0):
    """Camera at height 10 looking down 45 degrees along +Y."""
    focal = focal or width * 0.9
    eye = (0.0, -height_above, height_above)
    return CameraModel(CameraIntrinsics.centered(focal, width, height), CameraPose.look_at(eye, (0.0, 0.0, 0.0)))


def convex_hull(points):
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) < 3:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def signed_distance_convex(poly, pts):
    """Signed distance of pts to a ccw convex polygon boundary (positive inside, in the interior sense)."""
    d = np.full(len(pts), np.inf)
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        e = b - a
        nrm = np.array([-e[1], e[0]]) / math.hypot(*e)
        d = np.minimum(d, (pts - a) @ nrm)
    return d


def distance_outside_convex(poly, pts):
    """Euclidean distance from pts to a convex polygon (0 inside)."""
    inside = signed_distance_convex(poly, pts) >= 0
    best = np.full(len(pts), np.inf)
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        e = b - a
        t = np.clip(((pts - a) @ e) / (e @ e), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(pts - (a + t[:, None] * e), axis=1))
    return np.where(inside, 0.0, best)
