import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenesmith.errors import DegenerateAzimuth, PointBehindCamera
from scenesmith.geometry import (
    BIN_WIDTH,
    NUM_POSE_BINS,
    CameraIntrinsics,
    CameraModel,
    CameraPose,
    bin_center,
    is_rotation,
    project,
    quantize_yaw,
    rot_x,
    rot_z,
    rodrigues,
    unproject,
    wrap_angle,
    yaw_in_camera,
)


@pytest.fixture
def axis_cam():
    return CameraModel(CameraIntrinsics(1000, 1000, 720, 405, 1440, 810), CameraPose())


def test_project_principal_point(axis_cam):
    assert project((0, 0, 5), axis_cam) == (720.0, 405.0)


def test_project_offset_point(axis_cam):
    # 1000 * 1/5 + 720
    assert project((1, 0, 5), axis_cam) == pytest.approx((920.0, 405.0), abs=1e-12)


def test_project_behind(axis_cam):
    with pytest.raises(PointBehindCamera):
        project((0, 0, -1), axis_cam)


@settings(max_examples=200, deadline=None)
@given(
    u=st.floats(-500, 2000), v=st.floats(-500, 1500), d=st.floats(0.1, 1e3),
    w=st.tuples(*[st.floats(-3, 3)] * 3), t=st.tuples(*[st.floats(-50, 50)] * 3),
)
def test_project_unproject_roundtrip(u, v, d, w, t):
    cam = CameraModel(CameraIntrinsics(900, 950, 640, 360, 1280, 720), CameraPose(rodrigues(w), t))
    uu, vv = project(unproject(u, v, d, cam), cam)
    assert abs(uu - u) < 1e-9 * max(1.0, abs(u)) and abs(vv - v) < 1e-9 * max(1.0, abs(v))


def _level_cam(heading, pitch=math.radians(-30), roll=0.0):
    # camera axis along world heading, tilted down by pitch, rolled about the axis
    base = CameraPose.look_at((0, 0, 10), (math.cos(heading), math.sin(heading), 10)).rotation
    r = rot_z(roll) @ rot_x(pitch) @ base
    return CameraModel(CameraIntrinsics.centered(800, 640, 480), CameraPose(r, (0, 0, 0)))


def test_yaw_identity():
    cam = _level_cam(0.7)
    assert yaw_in_camera(rot_z(0.7), cam) == pytest.approx(0.0, abs=1e-12)


def test_yaw_quarter_turn():
    cam = _level_cam(0.7)
    assert yaw_in_camera(rot_z(0.7 + math.pi / 2), cam) == pytest.approx(math.pi / 2, abs=1e-12)


def _wrap_grid_oracle(deg):
    # exhaustive 1-degree grid: the representative of deg in [-180, 180)
    for cand in range(-180, 180):
        if (deg - cand) % 360 == 0:
            return cand
    raise AssertionError


def test_yaw_wrap_350_vs_10():
    cam = _level_cam(math.radians(10))
    expected = math.radians(_wrap_grid_oracle(350 - 10))
    assert expected == pytest.approx(-0.349, abs=5e-4)
    assert yaw_in_camera(rot_z(math.radians(350)), cam) == pytest.approx(expected, abs=1e-12)


def test_yaw_top_down_degenerate():
    r = np.diag([1.0, -1.0, -1.0])  # optical axis = -Z
    cam = CameraModel(CameraIntrinsics.centered(800, 640, 480), CameraPose(r, (0, 0, 10)))
    with pytest.raises(DegenerateAzimuth):
        yaw_in_camera(np.eye(3), cam)


@pytest.mark.parametrize("roll", [-1.0, -0.3, 0.2, 0.9, 1.4])
def test_yaw_invariant_to_camera_roll(roll):
    yaw0 = yaw_in_camera(rot_z(2.0), _level_cam(0.4))
    assert yaw_in_camera(rot_z(2.0), _level_cam(0.4, roll=roll)) == pytest.approx(yaw0, abs=1e-12)


def test_quantize_boundaries():
    assert quantize_yaw(-math.pi) == 0
    assert quantize_yaw(0.0) == 18
    assert quantize_yaw(math.pi) == 0  # +pi wraps onto -pi
    assert quantize_yaw(math.pi - 1e-15) == 35


def test_quantize_3_1_brute_force_scan():
    edges = [-math.pi + i * BIN_WIDTH for i in range(NUM_POSE_BINS + 1)]
    expected = next(i for i in range(NUM_POSE_BINS) if edges[i] <= 3.1 < edges[i + 1])
    assert expected == 35
    assert quantize_yaw(3.1) == expected


def test_bin_round_trip():
    for b in range(NUM_POSE_BINS):
        assert quantize_yaw(bin_center(b)) == b


def test_half_bin_bound_random():
    rng = np.random.default_rng(1)
    for y in rng.uniform(-50, 50, 10_000):
        err = abs(bin_center(quantize_yaw(y)) - wrap_angle(y))
        assert err <= math.pi / 36 + 1e-12


def test_wrap_range():
    for a in np.linspace(-20, 20, 4001):
        w = wrap_angle(a)
        assert -math.pi <= w < math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_look_at_is_rotation():
    assert is_rotation(CameraPose.look_at((3, -4, 7), (0, 0, 0)).rotation)


def test_camera_dict_round_trip():
    cam = CameraModel(CameraIntrinsics(900, 910, 320, 240, 640, 480), CameraPose.look_at((1, -9, 5), (0, 0, 0)), 0.5)
    back = CameraModel.from_dict(cam.to_dict())
    assert np.allclose(back.pose.rotation, cam.pose.rotation, atol=1e-15)
    assert back.intrinsics == cam.intrinsics and back.meters_per_unit == 0.5
