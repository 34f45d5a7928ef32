import math

import numpy as np
import pytest

from conftest import (
    convex_hull,
    distance_outside_convex,
    down45_camera,
    flat,
    polygon_area,
    signed_distance_convex,
)
from scenesmith.errors import InvalidParams
from scenesmith.geometry import pixel_rays, project_points
from scenesmith.randomizer import LightSpec, Material, PlacedObject, SceneInstance
from scenesmith.renderer import (
    RenderContext,
    RenderSettings,
    apply_photometric_jitter,
    build_bvh,
    object_vertices,
    render,
)
from scenesmith.renderer.io import read_pfm, read_png, write_mask_png, write_pfm, write_rgb_png

SUN = (LightSpec("directional", (0.3, -0.4, math.sqrt(1 - 0.25)), 1.0),)


def scene_of(*objects, lights=SUN, contrast=1.0, brightness=0.0):
    return SceneInstance(tuple(objects), lights, contrast, brightness, frame_seed=0)


def cube(pos=(0.0, 0.0, 0.0), size=2.0, iid=1, yaw=0.3, color=(200, 40, 40)):
    return PlacedObject("cube", "cube", pos, yaw, (size, size, size), Material("palette", color=color), iid)


# ---------------------------------------------------------------- BVH


def _leaves(bvh):
    return [i for i in range(bvh.n_nodes) if bvh.left[i] < 0]


@pytest.mark.parametrize("n", [1, 4, 5, 37, 500])
def test_bvh_invariants(n):
    tri = np.random.default_rng(n).uniform(-10, 10, (n, 3, 3))
    bvh = build_bvh(tri)
    seen = []
    for leaf in _leaves(bvh):
        assert bvh.count[leaf] <= 4
        ids = bvh.order[bvh.start[leaf]:bvh.start[leaf] + bvh.count[leaf]]
        seen.extend(ids.tolist())
        for t in ids:
            assert np.all(tri[t].min(axis=0) >= bvh.bmin[leaf]) and np.all(tri[t].max(axis=0) <= bvh.bmax[leaf])
    assert sorted(seen) == list(range(n))
    for i in range(bvh.n_nodes):
        if bvh.left[i] >= 0:
            for c in (bvh.left[i], bvh.right[i]):
                assert np.all(bvh.bmin[c] >= bvh.bmin[i]) and np.all(bvh.bmax[c] <= bvh.bmax[i])


# ---------------------------------------------------------------- depth / ids


def _ray_plane_depth(cam, z=0.0):
    us, vs = np.meshgrid(np.arange(cam.width) + 0.5, np.arange(cam.height) + 0.5)
    d = pixel_rays(cam, us, vs)
    c = cam.center
    t = (z - c[2]) / d[..., 2]
    return np.where(t > 0, t, np.inf)


def test_empty_scene_depth_matches_ray_plane(ground_layout, assets):
    cam = down45_camera(200, 120)
    frame = render(scene_of(), ground_layout, assets, cam, RenderSettings(200, 120))
    expected = _ray_plane_depth(cam)
    hit = np.isfinite(expected)
    # rays past the ground quad's far edge miss the layout entirely
    gx, gy = _ground_xy(cam)
    on_quad = hit & (np.abs(gx) < 30) & (gy > -10) & (gy < 50)
    assert on_quad.sum() > 0.5 * cam.width * cam.height
    rel = np.abs(frame.depth[on_quad] - expected[on_quad]) / expected[on_quad]
    assert rel.max() < 1e-4
    assert np.all(frame.instance == 0)


def _ground_xy(cam):
    us, vs = np.meshgrid(np.arange(cam.width) + 0.5, np.arange(cam.height) + 0.5)
    d = pixel_rays(cam, us, vs)
    c = cam.center
    t = -c[2] / d[..., 2]
    return c[0] + t * d[..., 0], c[1] + t * d[..., 1]


def test_cube_silhouette_area(ground_layout, assets):
    cam = down45_camera(320, 240)
    obj = cube(size=3.0)
    frame = render(scene_of(obj), ground_layout, assets, cam, RenderSettings(320, 240))
    assert set(np.unique(frame.instance)) == {0, 1}
    hull = convex_hull(project_points(object_vertices(obj, assets.distractors["cube"]), cam))
    area = polygon_area(hull)
    count = int((frame.instance == 1).sum())
    assert area > 2000
    assert abs(count - area) / area < 0.02


def test_render_deterministic(ground_layout, assets):
    cam = down45_camera()
    sc = scene_of(cube(), cube((4, 3, 0), 1.0, 2, color=(20, 200, 30)))
    s = RenderSettings(160, 90, spp=4)
    a = render(sc, ground_layout, assets, cam, s)
    b = render(sc, ground_layout, assets, cam, s)
    for x, y in ((a.rgb, b.rgb), (a.instance, b.instance), (a.depth, b.depth)):
        assert x.tobytes() == y.tobytes()


def test_ids_and_depth_independent_of_spp(ground_layout, assets):
    cam = down45_camera()
    sc = scene_of(cube(), cube((4, 3, 0), 1.0, 2))
    a = render(sc, ground_layout, assets, cam, RenderSettings(160, 90, spp=1))
    b = render(sc, ground_layout, assets, cam, RenderSettings(160, 90, spp=9))
    assert np.array_equal(a.instance, b.instance)
    assert np.array_equal(a.depth, b.depth)


def test_depth_in_front_of_layout(ground_layout, assets):
    cam = down45_camera()
    sc = scene_of(cube(), cube((3, 2, 0), 1.5, 2), cube((-3, 5, 0), 2.5, 3))
    s = RenderSettings(160, 90)
    full = render(sc, ground_layout, assets, cam, s)
    bare = render(scene_of(), ground_layout, assets, cam, s)
    m = full.instance != 0
    assert m.sum() > 0
    assert np.all(full.depth[m] < bare.depth[m])
    assert set(np.unique(full.instance)) <= {0, 1, 2, 3}


def test_jitter_leaves_ids_and_depth(ground_layout, assets):
    cam = down45_camera()
    objs = (cube(), cube((3, 2, 0), 1.5, 2))
    s = RenderSettings(160, 90)
    a = render(scene_of(*objs), ground_layout, assets, cam, s)
    b = render(scene_of(*objs, contrast=1.3, brightness=-0.07), ground_layout, assets, cam, s)
    assert a.instance.tobytes() == b.instance.tobytes()
    assert a.depth.tobytes() == b.depth.tobytes()
    assert a.rgb.tobytes() != b.rgb.tobytes()


@pytest.mark.parametrize("kind", ["cube", "sphere", "cone", "capsule"])
def test_silhouette_between_eroded_and_dilated_hull(ground_layout, assets, kind):
    cam = down45_camera(240, 160)
    scale = (2.0, 2.0, 2.0) if kind != "capsule" else (1.5, 1.5, 1.5)
    obj = PlacedObject(kind, kind, (0.5, 1.0, 0.0), 0.4, scale, Material("palette", color=(9, 9, 9)), 1)
    frame = render(scene_of(obj), ground_layout, assets, cam, RenderSettings(240, 160))
    hull = convex_hull(project_points(object_vertices(obj, assets.distractors[kind]), cam))
    ys, xs = np.mgrid[0:160, 0:240]
    centers = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
    ids = frame.instance.ravel() == 1
    assert np.all(distance_outside_convex(hull, centers[ids]) <= 1.0)
    interior = signed_distance_convex(hull, centers) >= 1.0
    assert np.all(ids[interior])


def test_shadow_witness(ground_layout, assets):
    """Ground inside the cube's analytic shadow keeps only the ambient term."""
    cam = down45_camera(240, 160)
    light_dir = np.array([0.5, 0.6, 0.8])
    light_dir /= np.linalg.norm(light_dir)
    obj = cube((0.0, 2.0, 0.0), 2.0, yaw=0.0)
    # cube floating above ground so its shadow is separated from its footprint
    obj = PlacedObject("cube", "cube", (0.0, 2.0, 0.0), 0.0, (2.0, 2.0, 2.0), Material("palette", color=(1, 2, 3)), 1)
    sc = scene_of(obj, lights=(LightSpec("directional", tuple(light_dir), 0.9),))
    s = RenderSettings(240, 160, ambient=0.15)
    frame = render(sc, ground_layout, assets, cam, s)

    verts = object_vertices(obj, assets.distractors["cube"])
    shadow = verts[:, :2] - verts[:, 2:3] * light_dir[:2] / light_dir[2]
    shadow_hull = convex_hull(shadow)
    gx, gy = _ground_xy(cam)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    inside = signed_distance_convex(shadow_hull, pts).reshape(gx.shape) > 0.05
    outside = signed_distance_convex(shadow_hull, pts).reshape(gx.shape) < -0.05
    ground = frame.instance == 0
    albedo = 128 / 255
    in_px = inside & ground
    assert in_px.sum() > 100
    expect_shadow = round(0.15 * albedo * 255)
    assert np.all(np.abs(frame.rgb[in_px].astype(int) - expect_shadow) <= 1)
    lit = round((0.15 + 0.9 * light_dir[2]) * albedo * 255)
    out_px = outside & ground & np.isfinite(frame.depth)
    assert np.all(np.abs(frame.rgb[out_px].astype(int) - lit) <= 1)


def test_solo_count_matches_isolated_render(ground_layout, assets):
    cam = down45_camera(200, 120)
    front = cube((0.0, -2.0, 0.0), 2.0, 1, yaw=0.0)
    back = cube((0.5, 1.0, 0.0), 2.5, 2, yaw=0.2)
    ctx = RenderContext(ground_layout, assets)
    s = RenderSettings(200, 120)
    both = ctx.render(scene_of(front, back), cam, s)
    alone = ctx.render(scene_of(back), cam, s, include_layout=False)
    solo = ctx.solo_pixel_count(scene_of(front, back), back, cam, s)
    assert solo == int((alone.instance == 2).sum())
    visible = int((both.instance == 2).sum())
    assert 0 < visible < solo


def test_textured_material_renders(ground_layout, assets):
    cam = down45_camera(160, 90)
    obj = PlacedObject("sedan", "car", (0.0, 0.0, 0.0), 0.5, (1, 1, 1), Material("bank", texture_index=3), 1)
    frame = render(scene_of(obj), ground_layout, assets, cam, RenderSettings(160, 90))
    px = frame.rgb[frame.instance == 1]
    assert len(px) > 100 and len(np.unique(px, axis=0)) > 3


def test_render_settings_validation():
    with pytest.raises(InvalidParams):
        RenderSettings(0, 10)
    with pytest.raises(InvalidParams):
        RenderSettings(10, 10, spp=3)


# ---------------------------------------------------------------- jitter


def test_jitter_identity():
    rgb = np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8)
    assert np.array_equal(apply_photometric_jitter(rgb, 1.0, 0.0), rgb)


def test_jitter_mid_gray_brightness():
    # 128/255 + 0.1 = 0.60196...; * 255 = 153.5 -> half to even -> 154
    assert apply_photometric_jitter(np.array([[128]], np.uint8), 1.0, 0.1)[0, 0] == 154


def test_jitter_clamps_black():
    assert apply_photometric_jitter(np.array([[0]], np.uint8), 2.0, 0.0)[0, 0] == 0


def test_jitter_rejects_nonpositive_contrast():
    with pytest.raises(InvalidParams):
        apply_photometric_jitter(np.zeros((2, 2), np.uint8), 0.0, 0.0)


# ---------------------------------------------------------------- file formats


def test_raster_files_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, (7, 9, 3), dtype=np.uint8)
    mask = rng.integers(0, 65535, (7, 9)).astype(np.uint16)
    depth = rng.uniform(0, 100, (7, 9)).astype(np.float32)
    depth[0, 0] = np.inf
    write_rgb_png(tmp_path / "a.png", rgb)
    write_mask_png(tmp_path / "m.png", mask)
    write_pfm(tmp_path / "d.pfm", depth)
    assert np.array_equal(read_png(tmp_path / "a.png"), rgb)
    assert np.array_equal(read_png(tmp_path / "m.png"), mask)
    back = read_pfm(tmp_path / "d.pfm")
    assert np.array_equal(back, depth)
    head = (tmp_path / "d.pfm").read_bytes()[:14]
    assert head == b"Pf\n9 7\n-1.0\n" + head[12:14]
