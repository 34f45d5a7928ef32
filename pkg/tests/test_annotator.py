import json
import math

import numpy as np
import pytest

from conftest import down45_camera
from scenesmith.annotator import (
    FrameAnnotations,
    annotate_frame,
    assign_splits,
    bbox_from_mask,
    write_dataset,
)
from scenesmith.errors import InconsistentInputs, InvalidRatio, NotPresent
from scenesmith.geometry import CameraIntrinsics, CameraModel, CameraPose, PixelBox, project_points
from scenesmith.randomizer import LightSpec, Material, PlacedObject, SceneInstance, preset, sample_scene
from scenesmith.renderer import RenderContext, RenderSettings, object_vertices

SUN = (LightSpec("directional", (0.0, -0.6, 0.8), 1.0),)


def scene_of(*objs):
    return SceneInstance(tuple(objs), SUN, 1.0, 0.0, 0)


def cube(pos, size, iid, yaw=0.0):
    return PlacedObject("cube", "cube", pos, yaw, (size,) * 3, Material("palette", color=(90, 90, 200)), iid)


def level_camera():
    """Camera 1 unit above ground looking along +Y; a 2-unit cube 4 units ahead spans pixels 100..199 x 50..149."""
    k = CameraIntrinsics(200.0, 200.0, 150.0, 100.0, 320, 240)
    return CameraModel(k, CameraPose.look_at((0.0, 0.0, 1.0), (0.0, 10.0, 1.0)))


# ---------------------------------------------------------------- bbox_from_mask


def test_bbox_single_pixel():
    m = np.zeros((10, 12), np.uint16)
    m[3, 7] = 2
    assert bbox_from_mask(m, 2) == PixelBox(7, 3, 1, 1)


def test_bbox_disjoint_blobs():
    m = np.zeros((20, 100), np.uint16)
    m[2:5, 0:11] = 4
    m[12:15, 90:96] = 4
    m[0:20, 50] = 1
    assert bbox_from_mask(m, 4) == PixelBox(0, 2, 96, 13)


def test_bbox_absent():
    with pytest.raises(NotPresent):
        bbox_from_mask(np.zeros((4, 4), np.uint16), 9)


def test_bbox_tight_on_random_masks():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = (rng.random((17, 23)) < 0.05).astype(np.uint16) * 3
        if not m.any():
            continue
        b = bbox_from_mask(m, 3)
        ys, xs = np.nonzero(m == 3)
        # min/max scan oracle
        assert (b.x, b.y, b.x2 - 1, b.y2 - 1) == (xs.min(), ys.min(), xs.max(), ys.max())
        for edge in (m[b.y, b.x:b.x2], m[b.y2 - 1, b.x:b.x2], m[b.y:b.y2, b.x], m[b.y:b.y2, b.x2 - 1]):
            assert (edge == 3).any()


# ---------------------------------------------------------------- annotate_frame


def test_lone_cube(ground_layout, assets):
    cam = level_camera()
    ctx = RenderContext(ground_layout, assets)
    sc = scene_of(cube((0.0, 5.0, 0.0), 2.0, 1, yaw=math.pi / 2))
    frame = ctx.render(sc, cam, RenderSettings(320, 240))
    ann = annotate_frame(frame, sc, cam, ctx)
    (rec,) = ann.records
    assert rec.bbox == PixelBox(100, 50, 100, 100)
    assert rec.visibility == 1.0 and rec.truncated is False
    # heading aligned with the viewing direction sits at the middle bin
    assert rec.yaw_rad == pytest.approx(0.0, abs=1e-12) and rec.pose_bin == 18
    assert rec.category == "cube" and rec.frame_id == 0


def test_partial_occlusion_visibility(ground_layout, assets):
    cam = level_camera()
    ctx = RenderContext(ground_layout, assets)
    target = cube((0.0, 8.0, 0.0), 2.0, 1)
    wall = cube((0.6, 4.0, 0.0), 1.2, 2)
    sc = scene_of(target, wall)
    s = RenderSettings(320, 240)
    frame = ctx.render(sc, cam, s)
    ann = annotate_frame(frame, sc, cam, ctx, s, frame_id=5)
    rec = {r.instance_id: r for r in ann.records}[1]
    # independent two-pass count: the target drawn alone, without the layout
    alone = ctx.render(scene_of(target), cam, s, include_layout=False)
    expected = (frame.instance == 1).sum() / (alone.instance == 1).sum()
    assert 0.2 < expected < 0.9
    assert rec.visibility == pytest.approx(expected, abs=1e-15)
    assert rec.frame_id == 5


def test_truncated_and_hidden(ground_layout, assets):
    cam = down45_camera(160, 90)
    ctx = RenderContext(ground_layout, assets)
    edge = cube((6.5, 0.0, 0.0), 2.0, 1)  # straddles the right image border
    far = cube((200.0, 0.0, 0.0), 1.0, 2)  # out of view
    sc = scene_of(edge, far)
    frame = ctx.render(sc, cam, RenderSettings(160, 90))
    ann = annotate_frame(frame, sc, cam, ctx)
    assert [r.instance_id for r in ann.records] == [1]
    assert ann.records[0].truncated is True
    assert ann.excluded == 1


def test_min_visibility_threshold(ground_layout, assets):
    cam = level_camera()
    ctx = RenderContext(ground_layout, assets)
    sc = scene_of(cube((0.0, 8.0, 0.0), 2.0, 1), cube((0.6, 4.0, 0.0), 1.2, 2))
    frame = ctx.render(sc, cam, RenderSettings(320, 240))
    loose = annotate_frame(frame, sc, cam, ctx, min_visibility=0.0)
    strict = annotate_frame(frame, sc, cam, ctx, min_visibility=0.99)
    vis = {r.instance_id: r.visibility for r in loose.records}
    assert vis[1] < 0.99 <= vis[2]
    assert [r.instance_id for r in strict.records] == [2] and strict.excluded == 1


def test_inconsistent_inputs(ground_layout, assets):
    cam = down45_camera()
    ctx = RenderContext(ground_layout, assets)
    sc = scene_of(cube((0.0, 0.0, 0.0), 2.0, 1))
    frame = ctx.render(sc, cam, RenderSettings(160, 90))
    with pytest.raises(InconsistentInputs):
        annotate_frame(frame, scene_of(), cam, ctx)


def test_completeness_and_containment(ground_layout, assets):
    cam = down45_camera(200, 120)
    ctx = RenderContext(ground_layout, assets)
    s = RenderSettings(200, 120)
    cfg = preset("full_dr", master_seed=4, placement_region=((-8.0, -4.0), (8.0, -4.0), (8.0, 12.0), (-8.0, 12.0)))
    checked = 0
    for i in range(6):
        sc = sample_scene(cfg, ground_layout, assets, i)
        frame = ctx.render(sc, cam, s)
        ann = annotate_frame(frame, sc, cam, ctx, s, frame_id=i)
        assert len(ann.records) + ann.excluded == len(sc.objects)
        assert ann.dropped == sc.dropped
        for r in ann.records:
            assert 0 < r.visibility <= 1
            if r.visibility == 1.0 and not r.truncated:
                obj = next(o for o in sc.objects if o.instance_id == r.instance_id)
                uv = project_points(object_vertices(obj, ctx.mesh_for(obj)), cam)
                lo, hi = uv.min(axis=0), uv.max(axis=0)
                b = r.bbox
                assert abs(b.x - lo[0]) <= 1 and abs(b.y - lo[1]) <= 1
                assert abs(b.x2 - hi[0]) <= 1 and abs(b.y2 - hi[1]) <= 1
                checked += 1
    assert checked > 0


# ---------------------------------------------------------------- splits / dataset


def test_split_exact_ratio():
    s = assign_splits(range(10), "80:20", 7)
    assert sum(v == "train" for v in s.values()) == 8
    big = assign_splits(range(10000), (80, 20), 7)
    assert sum(v == "train" for v in big.values()) == 8000
    assert sum(v == "val" for v in big.values()) == 2000


def test_split_deterministic_and_seeded():
    a = assign_splits(range(100), "80:20", 1)
    assert a == assign_splits(reversed(range(100)), "80:20", 1)
    assert a != assign_splits(range(100), "80:20", 2)


@pytest.mark.parametrize("bad", ["0:0", "80", "a:b", "-1:2", (1, 2, 3)])
def test_invalid_ratio(bad):
    with pytest.raises(InvalidRatio):
        assign_splits(range(10), bad, 0)


def test_write_dataset_layout(tmp_path, ground_layout, assets):
    cam = down45_camera(64, 36)
    ctx = RenderContext(ground_layout, assets)
    s = RenderSettings(64, 36)
    items = []
    for i in range(10):
        sc = scene_of(cube((i - 5.0, 2.0, 0.0), 1.5, 1))
        frame = ctx.render(sc, cam, s)
        items.append((i, frame, annotate_frame(frame, sc, cam, ctx, s, frame_id=i), sc.summary()))
    man = write_dataset(items, "80:20", tmp_path, master_seed=3, config_digest="abc", extra={"scene": "unit"})
    assert man["image_count"] == 10 and len(man["splits"]["train"]) == 8 and len(man["splits"]["val"]) == 2
    assert man["num_pose_bins"] == 36 and man["scene"] == "unit"
    for split in ("train", "val"):
        doc = json.loads((tmp_path / f"annotations_{split}.json").read_text())
        assert set(doc) == {"images", "annotations"}
        for img in doc["images"]:
            assert set(img) == {"id", "file", "width", "height"}
            name = f"img_{img['id']:06d}"
            assert img["file"] == f"images/{split}/{name}.png"
            for sub, ext in (("images", "png"), ("masks", "png"), ("depth", "pfm")):
                assert (tmp_path / sub / split / f"{name}.{ext}").exists()
        for a in doc["annotations"]:
            assert set(a) == {"image_id", "instance_id", "category", "bbox", "yaw_rad", "pose_bin", "visibility",
                              "truncated"}
    assert json.loads((tmp_path / "manifest.json").read_text()) == man


def test_frame_annotations_type():
    fa = FrameAnnotations((), 0, 0)
    assert fa.records == ()
