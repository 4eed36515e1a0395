import json

import numpy as np
import pytest

from edgeline3d.errors import InputError
from edgeline3d.evaluation import point_segment_distance
from edgeline3d.fitting import backproject_xyz
from edgeline3d.synthetic import (
    SyntheticScene,
    bresenham,
    cube_scene,
    dense_scene,
    depth_step_scene,
    load_scene,
    project_segment_to_chain,
    render_synthetic,
    sample_segments,
    scene_from_dict,
    scene_to_dict,
)
from edgeline3d.types import TUM_DEFAULT_INTRINSICS, LineSegment3D, Pose


def test_bresenham_connected_and_inclusive():
    for x1, y1 in [(10, 3), (-4, 9), (0, 0), (7, -7), (2, 11)]:
        pts = bresenham(0, 0, x1, y1)
        assert pts[0] == (0, 0) and pts[-1] == (x1, y1)
        assert len(pts) == max(abs(x1), abs(y1)) + 1
        d = np.abs(np.diff(np.array(pts), axis=0)).max(axis=1) if len(pts) > 1 else []
        assert np.all(np.asarray(d) == 1)


def test_noise_free_chain_backprojects_onto_gt():
    intr = TUM_DEFAULT_INTRINSICS
    scene = SyntheticScene([LineSegment3D([-0.5, -0.3, 2.0], [0.6, 0.2, 3.0], "world")], [Pose()])
    (kf,) = render_synthetic(scene)
    (es,) = kf.chains
    g = scene.segments[0]
    # each pixel's ray meets the gt line at the recorded depth, up to half-pixel rounding
    for x, y, z in zip(es.xs, es.ys, es.depth):
        p = backproject_xyz(x, y, z, intr)
        assert point_segment_distance(p, g.p1, g.p2)[0] < 0.5 * 3.0 / intr.fx * 1.5


def test_exact_on_pixel_centres():
    intr = TUM_DEFAULT_INTRINSICS
    A = backproject_xyz(100, 200, 2.0, intr)
    B = backproject_xyz(300, 200, 2.0, intr)
    pix, z = project_segment_to_chain(A, B, intr)
    assert len(pix) == 201
    for (x, y), d in zip(pix, z):
        p = backproject_xyz(x, y, d, intr)
        assert point_segment_distance(p, A, B)[0] < 1e-12


def test_behind_camera_not_emitted():
    scene = SyntheticScene([LineSegment3D([0, 0, -2.0], [1, 0, -3.0], "world")], [Pose()])
    (kf,) = render_synthetic(scene)
    assert kf.chains == []


def test_dropout_fraction_concentration():
    scene = dense_scene(dropout_fraction=0.3, depth_sigma=0.0, n_keyframes=1)
    (kf,) = render_synthetic(scene)
    z = np.concatenate([c.depth for c in kf.chains])
    assert len(z) >= 5000
    assert abs(np.isnan(z).mean() - 0.3) < 0.05


def test_chains_satisfy_invariants_and_in_bounds():
    intr = TUM_DEFAULT_INTRINSICS
    for kf in render_synthetic(cube_scene(n_keyframes=6)):
        seen = set()
        for c in kf.chains:
            assert (c.xs >= 0).all() and (c.xs < intr.width).all()
            assert (c.ys >= 0).all() and (c.ys < intr.height).all()
            pts = set(zip(c.xs.tolist(), c.ys.tolist()))
            seen |= pts


def test_outliers_within_range():
    scene = depth_step_scene()
    scene.outlier_fraction = 1.0
    (kf,) = render_synthetic(scene)
    z = kf.chains[0].depth
    true = np.where(np.arange(120) < 60, 2.0, 3.0)
    assert (z >= 0.5 * true - 1e-12).all() and (z <= 1.5 * true + 1e-12).all()


def test_depth_step_scene_layout():
    (kf,) = render_synthetic(depth_step_scene())
    (es,) = kf.chains
    assert len(es) == 120
    np.testing.assert_array_equal(es.xs, np.arange(200, 320))
    np.testing.assert_allclose(es.depth[:60], 2.0, atol=1e-12)
    np.testing.assert_allclose(es.depth[60:], 3.0, atol=1e-12)


def test_with_images_rasterizes():
    (kf,) = render_synthetic(depth_step_scene(), with_images=True)
    assert kf.image.shape == (480, 640)
    assert (kf.image[240, 200:320] == 255).all()
    assert kf.depth[240, 250] == pytest.approx(2.0, abs=1e-12)
    assert np.isnan(kf.depth[10, 10])


def test_dense_scene_pixel_count():
    kfs = render_synthetic(dense_scene())
    counts = [sum(len(c) for c in kf.chains) for kf in kfs]
    assert all(8000 <= n <= 12000 for n in counts)


def test_render_deterministic():
    a = render_synthetic(cube_scene(n_keyframes=3, seed=5))
    b = render_synthetic(cube_scene(n_keyframes=3, seed=5))
    for ka, kb in zip(a, b):
        for ca, cb in zip(ka.chains, kb.chains):
            np.testing.assert_array_equal(ca.depth, cb.depth)


def test_scene_json_roundtrip(tmp_path):
    s = depth_step_scene(depth_sigma=0.001, seed=3)
    p = tmp_path / "s.json"
    p.write_text(json.dumps(scene_to_dict(s)))
    t = load_scene(p)
    assert t.depth_sigma == 0.001 and t.seed == 3 and t.join_chains
    for a, b in zip(s.segments, t.segments):
        np.testing.assert_array_equal(a.p1, b.p1)


def test_scene_preset_and_errors(tmp_path):
    s = scene_from_dict({"preset": "cube", "params": {"n_keyframes": 4}})
    assert len(s.poses) == 4 and len(s.segments) == 12
    with pytest.raises(InputError, match="preset"):
        scene_from_dict({"preset": "castle"})
    with pytest.raises(InputError):
        scene_from_dict({"preset": "cube", "params": {"walls": 3}})
    with pytest.raises(InputError):
        scene_from_dict({"segments": [[0, 0, 0]]})
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(InputError, match="line 1"):
        load_scene(p)


def test_cube_scene_geometry():
    s = cube_scene()
    assert len(s.segments) == 12 and len(s.poses) == 20
    lengths = {round(seg.length, 9) for seg in s.segments}
    assert lengths == {5.0}


def test_sample_segments_spacing():
    seg = LineSegment3D([0, 0, 0], [1, 0, 0])
    pts = sample_segments([seg], 0.1)
    assert len(pts) == 11
    np.testing.assert_allclose(np.diff(pts[:, 0]), 0.1)
    assert sample_segments([]).shape == (0, 3)
