"""Camera geometry, rotations and yaw binning.

World frame is right-handed with +Z up and the ground at z = 0. A camera
looks along +Z of its own frame; ``x_cam = R @ x_world + t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateAzimuth, InvalidParams, PointBehindCamera

NUM_POSE_BINS = 36
BIN_WIDTH = 2.0 * math.pi / NUM_POSE_BINS
MIN_DEPTH = 1e-9
AZIMUTH_EPS = 1e-6
EDGE_SNAP = 1e-12  # in bins, far below the half-bin bound slack


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(w) -> np.ndarray:
    """Rotation matrix for the axis-angle vector ``w``."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return np.eye(3) + skew(w)
    k = skew(w / theta)
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def is_rotation(m: np.ndarray, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    ortho = np.max(np.abs(m.T @ m - np.eye(3)))
    return ortho < tol and abs(np.linalg.det(m) - 1.0) < tol


def rotation_angle_between(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic distance between two rotations, in radians."""
    c = (np.trace(r1.T @ r2) - 1.0) / 2.0
    c = min(1.0, max(-1.0, c))
    # arccos is badly conditioned near 0; use the skew part there
    s = np.linalg.norm(_vee(r1.T @ r2 - r2.T @ r1)) / 2.0
    return math.atan2(s, c)


def _vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidParams(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise InvalidParams(f"bad resolution {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidParams(f"principal point ({self.cx}, {self.cy}) outside image")

    @classmethod
    def centered(cls, focal: float, width: int, height: int) -> "CameraIntrinsics":
        return cls(focal, focal, width / 2.0, height / 2.0, width, height)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Same field of view at a different resolution."""
        sx, sy = width / self.width, height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)

    def with_focal_multiplier(self, m: float) -> "CameraIntrinsics":
        return replace(self, fx=self.fx * m, fy=self.fy * m)


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not is_rotation(r):
            raise InvalidParams("camera rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(t)):
            raise InvalidParams("camera translation must be finite")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Pose of a camera at ``eye`` looking at ``target`` with image-down roughly along -up."""
        eye = np.asarray(eye, dtype=float)
        z = np.asarray(target, dtype=float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, dtype=float))
        if np.linalg.norm(x) < 1e-12:
            raise InvalidParams("look_at direction is parallel to up")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        r = np.vstack([x, y, z])
        return cls(r, -r @ eye)


@dataclass(frozen=True)
class CameraModel:
    intrinsics: CameraIntrinsics
    pose: CameraPose
    meters_per_unit: float = 1.0

    def __post_init__(self):
        if not self.meters_per_unit > 0:
            raise InvalidParams("meters_per_unit must be positive")

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    @property
    def center(self) -> np.ndarray:
        return self.pose.center

    @property
    def optical_axis(self) -> np.ndarray:
        """Unit viewing direction in world coordinates."""
        return self.pose.rotation[2].copy()

    def scaled(self, width: int, height: int) -> "CameraModel":
        return replace(self, intrinsics=self.intrinsics.scaled(width, height))

    def to_camera(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.pose.rotation.T + self.pose.translation

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
            "width": k.width, "height": k.height,
            "R": [float(v) for v in self.pose.rotation.ravel()],
            "t": [float(v) for v in self.pose.translation],
            "meters_per_unit": self.meters_per_unit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        k = CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                             int(d["width"]), int(d["height"]))
        r = np.asarray(d["R"], dtype=float).reshape(3, 3)
        # serialized rotations lose the last few bits of orthonormality
        pose = CameraPose(nearest_rotation(r), np.asarray(d["t"], dtype=float))
        return cls(k, pose, float(d.get("meters_per_unit", 1.0)))


@dataclass(frozen=True)
class PixelBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise InvalidParams(f"negative box extent ({self.w}, {self.h})")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_list(self) -> list:
        return [self.x, self.y, self.w, self.h]


def project_points(points, cam: CameraModel) -> np.ndarray:
    """Vectorised pinhole projection of an (N, 3) array to (N, 2) pixels."""
    pc = cam.to_camera(np.atleast_2d(points))
    z = pc[:, 2]
    if np.any(z <= MIN_DEPTH):
        raise PointBehindCamera(f"{int(np.sum(z <= MIN_DEPTH))} point(s) at or behind the camera plane")
    k = cam.intrinsics
    return np.column_stack([k.fx * pc[:, 0] / z + k.cx, k.fy * pc[:, 1] / z + k.cy])


def project(p, cam: CameraModel) -> tuple[float, float]:
    uv = project_points(np.asarray(p, dtype=float).reshape(1, 3), cam)[0]
    return float(uv[0]), float(uv[1])


def unproject(u: float, v: float, depth: float, cam: CameraModel) -> np.ndarray:
    """World point at camera-frame depth ``depth`` seen at pixel ``(u, v)``."""
    k = cam.intrinsics
    pc = np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])
    return cam.pose.rotation.T @ (pc - cam.pose.translation)


def pixel_rays(cam: CameraModel, us, vs) -> np.ndarray:
    """Unit world-space ray directions through the given pixel coordinates."""
    k = cam.intrinsics
    d = np.stack([(np.asarray(us) - k.cx) / k.fx, (np.asarray(vs) - k.cy) / k.fy,
                  np.ones(np.broadcast(us, vs).shape)], axis=-1)
    d = d @ cam.pose.rotation
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def wrap_angle(a: float) -> float:
    """Map any finite angle to [-pi, pi)."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w < 0:
        w += 2.0 * math.pi
    w -= math.pi
    if w >= math.pi:
        w -= 2.0 * math.pi
    return w


def azimuth(direction) -> float:
    """Angle of a direction's ground-plane projection, measured about +Z from +X."""
    x, y = float(direction[0]), float(direction[1])
    if math.hypot(x, y) < AZIMUTH_EPS:
        raise DegenerateAzimuth("direction is (nearly) parallel to world up")
    return math.atan2(y, x)


def yaw_in_camera(object_rotation, cam: CameraModel) -> float:
    """Object heading relative to the camera's ground-plane viewing direction."""
    forward = np.asarray(object_rotation, dtype=float)[:, 0]
    return wrap_angle(azimuth(forward) - azimuth(cam.optical_axis))


def quantize_yaw(yaw: float) -> int:
    if not math.isfinite(yaw):
        raise InvalidParams("yaw must be finite")
    x = (wrap_angle(yaw) + math.pi) / BIN_WIDTH
    r = round(x)
    # edges given in whole degrees land a few ulps off; snap those onto the edge
    index = r if abs(x - r) < EDGE_SNAP else int(math.floor(x))
    return min(max(index, 0), NUM_POSE_BINS - 1)


def bin_center(index: int) -> float:
    if not 0 <= index < NUM_POSE_BINS:
        raise InvalidParams(f"pose bin {index} outside [0, {NUM_POSE_BINS})")
    return -math.pi + (index + 0.5) * BIN_WIDTH
