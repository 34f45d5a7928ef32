"""Camera calibration from user correspondences, homographies and background/texture extraction."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AllCellsFailed,
    DegenerateConfiguration,
    InsufficientFrames,
    InsufficientPoints,
    InvalidParams,
    IoFailure,
    MismatchedDimensions,
    NonConvergence,
    ParseError,
    SceneSmithError,
)
from .geometry import (
    MIN_DEPTH,
    CameraIntrinsics,
    CameraModel,
    CameraPose,
    nearest_rotation,
    project_points,
    rodrigues,
    skew,
)
from .renderer.io import write_json

log = logging.getLogger(__name__)

COPLANAR_TOL = 1e-6
LM_MAX_ITER = 200
LM_TOL = 1e-10


@dataclass(frozen=True)
class Correspondence2D3D:
    pixel: tuple[float, float]
    point: tuple[float, float, float]


@dataclass(frozen=True)
class Homography:
    matrix: np.ndarray
    max_transfer_error: float = 0.0

    def apply(self, pts) -> np.ndarray:
        return apply_homography(self.matrix, pts)


@dataclass(frozen=True)
class CalibrationResult:
    camera: CameraModel
    rms_reprojection_px: float
    per_point_residuals: np.ndarray
    focal_multiplier: float = 1.0


def _split(corr) -> tuple[np.ndarray, np.ndarray]:
    pix = np.array([c.pixel for c in corr], dtype=float).reshape(-1, 2)
    pts = np.array([c.point for c in corr], dtype=float).reshape(-1, 3)
    return pix, pts


def apply_homography(h: np.ndarray, pts) -> np.ndarray:
    p = np.atleast_2d(np.asarray(pts, dtype=float))
    q = p @ h[:, :2].T + h[:, 2]
    return q[:, :2] / q[:, 2:3]


def normalize_homography(h: np.ndarray) -> np.ndarray:
    if abs(h[2, 2]) > 1e-9:
        return h / h[2, 2]
    return h / np.linalg.norm(h)


def hartley_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(dim)."""
    dim = pts.shape[1]
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    if d < 1e-300:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(dim) / d
    t = np.eye(dim + 1)
    t[:dim, :dim] *= s
    t[:dim, dim] = -s * c
    return t


def _homog(pts: np.ndarray) -> np.ndarray:
    return np.column_stack([pts, np.ones(len(pts))])


def _check_planar_config(src: np.ndarray):
    if len(np.unique(np.round(src, 12), axis=0)) < len(src):
        raise DegenerateConfiguration("duplicate source points")
    span = src.max(axis=0) - src.min(axis=0)
    bbox_area = float(span[0] * span[1])
    if bbox_area <= 0:
        raise DegenerateConfiguration("source points are collinear")
    if len(src) == 4:
        for i, j, k in itertools.combinations(range(4), 3):
            a, b, c = src[i], src[j], src[k]
            area = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            if area <= 1e-9 * bbox_area:
                raise DegenerateConfiguration(f"source points {i}, {j}, {k} are collinear")


def estimate_homography(src, dst) -> Homography:
    """Normalised DLT homography mapping ``src`` onto ``dst`` (both (N, 2), N >= 4)."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise InvalidParams("src and dst must have the same length")
    if len(src) < 4:
        raise InsufficientPoints(f"homography needs >= 4 point pairs, got {len(src)}")
    _check_planar_config(src)

    ts, td = hartley_transform(src), hartley_transform(dst)
    s = _homog(src) @ ts.T
    d = _homog(dst) @ td.T
    n = len(src)
    a = np.zeros((2 * n, 9))
    a[0::2, 0:3] = s
    a[0::2, 6:9] = -d[:, 0:1] * s
    a[1::2, 3:6] = s
    a[1::2, 6:9] = -d[:, 1:2] * s
    _, sv, vt = np.linalg.svd(a)
    if sv[7] < 1e-12 * sv[0]:
        raise DegenerateConfiguration("point configuration does not determine a homography")
    hn = vt[-1].reshape(3, 3)
    h = normalize_homography(np.linalg.inv(td) @ hn @ ts)
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DegenerateConfiguration("estimated homography is singular")
    err = np.linalg.norm(apply_homography(h, src) - dst, axis=1)
    return Homography(h, float(err.max()))


# ---------------------------------------------------------------- PnP


def _reproject(k: CameraIntrinsics, r: np.ndarray, t: np.ndarray, pts: np.ndarray):
    pc = pts @ r.T + t
    z = pc[:, 2]
    uv = np.column_stack([k.fx * pc[:, 0] / z + k.cx, k.fy * pc[:, 1] / z + k.cy])
    return uv, pc


def _residuals(k, r, t, pts, pix):
    uv, pc = _reproject(k, r, t, pts)
    return (uv - pix).ravel(), pc


def _jacobian(k: CameraIntrinsics, r: np.ndarray, pts: np.ndarray, pc: np.ndarray) -> np.ndarray:
    # left perturbation R <- exp([w]) R, t <- t + dt
    n = len(pts)
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    dproj = np.zeros((n, 2, 3))
    dproj[:, 0, 0] = k.fx / z
    dproj[:, 0, 2] = -k.fx * x / z**2
    dproj[:, 1, 1] = k.fy / z
    dproj[:, 1, 2] = -k.fy * y / z**2
    rp = pts @ r.T
    dw = np.stack([-skew(p) for p in rp])  # d(pc)/dw
    j = np.concatenate([dproj @ dw, dproj], axis=2)
    return j.reshape(2 * n, 6)


def refine_pose_lm(k: CameraIntrinsics, r: np.ndarray, t: np.ndarray, pts: np.ndarray, pix: np.ndarray):
    """Levenberg-Marquardt over rotation (axis-angle increment) and translation."""
    lam = 1e-3
    res, pc = _residuals(k, r, t, pts, pix)
    if np.any(pc[:, 2] <= MIN_DEPTH):
        raise DegenerateConfiguration("initial pose puts points behind the camera")
    cost = float(res @ res)
    for _ in range(LM_MAX_ITER):
        j = _jacobian(k, r, pts, pc)
        g = j.T @ res
        if np.max(np.abs(g)) < LM_TOL or cost == 0.0:
            return r, t
        a = j.T @ j
        while True:
            step = np.linalg.solve(a + lam * np.diag(np.diag(a) + 1e-12), -g)
            r_new = rodrigues(step[:3]) @ r
            t_new = t + step[3:]
            res_new, pc_new = _residuals(k, r_new, t_new, pts, pix)
            cost_new = float(res_new @ res_new) if np.all(pc_new[:, 2] > MIN_DEPTH) else math.inf
            if cost_new < cost:
                lam /= 10.0
                break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left at machine precision
                return r, t
        rel = (cost - cost_new) / cost
        r, t, res, pc, cost = nearest_rotation(r_new), t_new, res_new, pc_new, cost_new
        if rel < LM_TOL:
            return r, t
    raise NonConvergence(f"LM did not converge in {LM_MAX_ITER} iterations")


def _is_coplanar(pts: np.ndarray) -> tuple[bool, np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(pts - c)
    extent = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if extent <= 0:
        raise DegenerateConfiguration("all 3D points coincide")
    resid = sv[2] / math.sqrt(len(pts))
    return resid < COPLANAR_TOL * extent, c, vt


def _init_dlt(k: CameraIntrinsics, pts: np.ndarray, pix: np.ndarray):
    t2, t3 = hartley_transform(pix), hartley_transform(pts)
    x = _homog(pix) @ t2.T
    xw = _homog(pts) @ t3.T
    n = len(pts)
    a = np.zeros((2 * n, 12))
    a[0::2, 0:4] = xw
    a[0::2, 8:12] = -x[:, 0:1] * xw
    a[1::2, 4:8] = xw
    a[1::2, 8:12] = -x[:, 1:2] * xw
    _, sv, vt = np.linalg.svd(a)
    if sv[10] < 1e-12 * sv[0]:
        raise DegenerateConfiguration("3D points do not constrain a projection matrix")
    p = np.linalg.inv(t2) @ vt[-1].reshape(3, 4) @ t3
    m = np.linalg.inv(k.K) @ p
    if np.mean(pts @ m[:, :3].T[:, 2] + m[2, 3]) < 0:
        m = -m
    scale = np.linalg.svd(m[:, :3], compute_uv=False).mean()
    r = nearest_rotation(m[:, :3] / scale)
    t = m[:, 3] / scale
    return r, t


def _init_planar(k: CameraIntrinsics, pts: np.ndarray, pix: np.ndarray, centroid, vt):
    e1, e2 = vt[0], vt[1]
    e3 = np.cross(e1, e2)
    basis = np.vstack([e1, e2, e3])  # rows: plane axes in world
    plane_xy = (pts - centroid) @ basis[:2].T
    norm_img = (np.linalg.inv(k.K) @ _homog(pix).T).T[:, :2]
    h = estimate_homography(plane_xy, norm_img).matrix
    lam = 2.0 / (np.linalg.norm(h[:, 0]) + np.linalg.norm(h[:, 1]))
    best = None
    for sign in (1.0, -1.0):
        r1, r2, tp = sign * lam * h[:, 0], sign * lam * h[:, 1], sign * lam * h[:, 2]
        rp = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
        r = rp @ basis
        t = tp - r @ centroid
        depth = (pts @ r.T + t)[:, 2]
        if np.all(depth > 0):
            best = (r, t)
            break
    if best is None:
        raise DegenerateConfiguration("no homography decomposition puts all points in front of the camera")
    return best


def solve_pnp(corr, intrinsics: CameraIntrinsics) -> CameraPose:
    """Camera pose from 2D-3D correspondences: closed-form init, LM refinement."""
    pix, pts = _split(corr)
    n = len(pts)
    if n < 4:
        raise InsufficientPoints(f"PnP needs >= 4 correspondences, got {n}")
    if not (np.all(np.isfinite(pix)) and np.all(np.isfinite(pts))):
        raise DegenerateConfiguration("non-finite correspondence")
    coplanar, centroid, vt = _is_coplanar(pts)
    if coplanar:
        r, t = _init_planar(intrinsics, pts, pix, centroid, vt)
    else:
        if n < 6:
            raise InsufficientPoints(f"non-coplanar PnP needs >= 6 correspondences, got {n}")
        r, t = _init_dlt(intrinsics, pts, pix)
    r, t = refine_pose_lm(intrinsics, r, t, pts, pix)
    if np.any((pts @ r.T + t)[:, 2] <= MIN_DEPTH):
        raise DegenerateConfiguration("refined pose puts points behind the camera")
    return CameraPose(nearest_rotation(r), t)


def reprojection_residuals(corr, cam: CameraModel) -> np.ndarray:
    pix, pts = _split(corr)
    return np.linalg.norm(project_points(pts, cam) - pix, axis=1)


def calibrate(corr, intrinsics: CameraIntrinsics, meters_per_unit: float = 1.0) -> CalibrationResult:
    pose = solve_pnp(corr, intrinsics)
    cam = CameraModel(intrinsics, pose, meters_per_unit)
    res = reprojection_residuals(corr, cam)
    return CalibrationResult(cam, float(np.sqrt(np.mean(res**2))), res)


def default_focal_grid(n: int = 31, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    """Log-spaced focal multipliers; odd ``n`` on a symmetric range contains exactly 1.0."""
    return np.exp2(np.linspace(math.log2(lo), math.log2(hi), n))


def grid_search_intrinsics(corr, init: CameraIntrinsics, grid=None, meters_per_unit: float = 1.0) -> CalibrationResult:
    """Try each focal multiplier, keep the pose/intrinsics with the lowest RMS reprojection error."""
    grid = default_focal_grid() if grid is None else np.asarray(grid, dtype=float)
    best = None
    failures = []
    for m in grid:
        try:
            res = calibrate(corr, init.with_focal_multiplier(float(m)), meters_per_unit)
        except (SceneSmithError, np.linalg.LinAlgError) as exc:
            failures.append(f"x{m:.4f}: {type(exc).__name__}: {exc}")
            continue
        key = (res.rms_reprojection_px, abs(float(m) - 1.0))
        if best is None or key < best[0]:
            best = (key, float(m), res)
    if best is None:
        detail = "; ".join(failures[:3]) if failures else "empty grid"
        raise AllCellsFailed(f"no grid cell produced a pose ({detail})")
    _, m, res = best
    log.debug("grid search winner x%.4f rms=%.3g px", m, res.rms_reprojection_px)
    return CalibrationResult(res.camera, res.rms_reprojection_px, res.per_point_residuals, m)


# ------------------------------------------------------- images / textures


def extract_background(frames) -> np.ndarray:
    """Per-pixel temporal median; with an even frame count the lower median is taken."""
    frames = [np.asarray(f) for f in frames]
    if len(frames) < 3:
        raise InsufficientFrames(f"need >= 3 frames, got {len(frames)}")
    shape, dtype = frames[0].shape, frames[0].dtype
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise MismatchedDimensions(f"frame {i} has shape {f.shape}, expected {shape}")
    stack = np.sort(np.stack(frames), axis=0)
    return stack[(len(frames) - 1) // 2].astype(dtype, copy=True)


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``img`` at continuous pixel-index coordinates with edge clamping."""
    h, w = img.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    if img.ndim == 3:
        fx, fy = fx[..., None], fy[..., None]
    src = img.astype(np.float64)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def plane_texture_homography(plane_corners_world, cam: CameraModel, tex_size) -> Homography:
    """Homography taking texture-space coordinates to background-image pixels."""
    tw, th = tex_size
    quad = project_points(np.asarray(plane_corners_world, dtype=float).reshape(4, 3), cam)
    rect = np.array([[0.0, 0.0], [tw, 0.0], [tw, th], [0.0, th]])
    return estimate_homography(rect, quad)


def extract_plane_texture(background: np.ndarray, plane_corners_world, cam: CameraModel, tex_size) -> np.ndarray:
    """Rectify one layout plane out of the background image.

    Texture pixel row 0 runs from corner 0 to corner 1; the texture's
    vertical axis runs from corner 0 towards corner 3.
    """
    tw, th = int(tex_size[0]), int(tex_size[1])
    if tw < 1 or th < 1:
        raise InvalidParams(f"bad texture size {tex_size}")
    h = plane_texture_homography(plane_corners_world, cam, (tw, th)).matrix
    xs, ys = np.meshgrid(np.arange(tw) + 0.5, np.arange(th) + 0.5)
    uv = apply_homography(h, np.column_stack([xs.ravel(), ys.ravel()]))
    out = bilinear_sample(background, uv[:, 0] - 0.5, uv[:, 1] - 0.5)
    out = out.reshape((th, tw) + background.shape[2:])
    if np.issubdtype(background.dtype, np.integer):
        info = np.iinfo(background.dtype)
        return np.clip(np.rint(out), info.min, info.max).astype(background.dtype)
    return out.astype(background.dtype)


# ---------------------------------------------------------------- file IO


def read_correspondences(path) -> list[Correspondence2D3D]:
    """Parse a ``u,v,X,Y,Z`` CSV (no header)."""
    path = Path(path)
    out = []
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IoFailure(f"cannot read correspondences {path}: {exc.strerror or exc}") from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ParseError(f"{path}: expected 5 fields u,v,X,Y,Z, got {len(row)}", lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}: non-finite value", lineno)
            out.append(Correspondence2D3D((vals[0], vals[1]), (vals[2], vals[3], vals[4])))
    return out


def write_correspondences(path, corr):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for c in corr:
            w.writerow([repr(float(v)) for v in (*c.pixel, *c.point)])


def write_calibration(path, result: CalibrationResult):
    doc = result.camera.to_dict()
    doc["rms_px"] = result.rms_reprojection_px
    doc["focal_multiplier"] = result.focal_multiplier
    write_json(path, doc, indent=2)


def read_calibration(path) -> CameraModel:
    path = Path(path)
    try:
        return CameraModel.from_dict(json.loads(path.read_text()))
    except OSError as exc:
        raise IoFailure(f"cannot read calibration {path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: not a calibration document ({exc})") from None
