import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import straight_chain
from edgeline3d.errors import AlignmentError, InputError
from edgeline3d.evaluation import (
    EvalReport,
    PointCloud,
    count_vertices,
    endpoint_errors,
    icp_align,
    icp_sim3,
    mean_vertex_distance,
    point_segment_distance,
    read_ply_points,
    time_keyframe_fit,
    umeyama_sim3,
    write_ply_points,
)
from edgeline3d.edge_aided import fit_keyframe
from edgeline3d.types import LineSegment3D, Pose, Sim3

seeds = st.integers(0, 2**32 - 1).map(np.random.default_rng)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rot_z(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])


def test_kdtree_matches_linear_scan():
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.uniform(-1, 1, (500, 3)))
    q = rng.uniform(-1.2, 1.2, (1000, 3))
    d, idx = cloud.nearest(q)
    brute = np.linalg.norm(q[:, None, :] - cloud.points[None], axis=2)
    np.testing.assert_allclose(d, brute.min(axis=1), atol=1e-12)
    np.testing.assert_array_equal(idx, brute.argmin(axis=1))


def test_point_cloud_validation():
    with pytest.raises(InputError):
        PointCloud([[0, 0, np.inf]])
    with pytest.raises(InputError):
        PointCloud(np.empty((0, 3))).nearest([[0, 0, 0]])


def test_umeyama_trivial():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 3))
    S = umeyama_sim3(X, X)
    assert S.scale == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(S.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(S.translation, 0, atol=1e-12)
    S = umeyama_sim3(X, 2 * X)
    assert S.scale == pytest.approx(2, abs=1e-12)
    np.testing.assert_allclose(S.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(S.translation, 0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_umeyama_generate_then_recover(rng):
    X = rng.normal(size=(rng.integers(3, 50), 3)) * 5
    truth = Sim3(rng.uniform(0.2, 5), random_rotation(rng), rng.normal(size=3) * 10)
    Y = truth.transform(X)
    S = umeyama_sim3(X, Y)
    rms = math.sqrt(np.mean(np.sum((S.transform(X) - Y) ** 2, axis=1)))
    assert rms < 1e-9
    assert np.linalg.det(S.rotation) == pytest.approx(1, abs=1e-12)
    assert S.scale == pytest.approx(truth.scale, rel=1e-9)


def test_umeyama_degenerate():
    with pytest.raises(AlignmentError):
        umeyama_sim3([[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3]], [[0, 0, 0]] * 4)
    with pytest.raises(AlignmentError):
        umeyama_sim3([[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [1, 0, 0]])
    with pytest.raises(AlignmentError):
        umeyama_sim3(np.eye(3), np.eye(3)[:2])


def test_icp_identity_one_iteration():
    rng = np.random.default_rng(2)
    c = PointCloud(rng.normal(size=(300, 3)))
    res = icp_align(c, c)
    assert res.iterations == 1
    assert res.rms_history == [0.0]
    np.testing.assert_allclose(res.transform.rotation, np.eye(3))


def test_icp_recovers_small_sim3():
    rng = np.random.default_rng(3)
    # a structured cloud: noisy box surface gives unambiguous correspondences
    P = rng.uniform(-1, 1, (3000, 3))
    P[np.arange(3000), rng.integers(0, 3, 3000)] = rng.choice([-1, 1], 3000)
    P *= [1.0, 1.5, 0.7]
    truth = Sim3(1.05, rot_z(5), [0.02, -0.01, 0.03])
    dst = PointCloud(truth.transform(P))
    res = icp_align(PointCloud(P), dst, max_iters=200, tol=1e-14, rejection_radius=1.0)
    err = np.sqrt(np.mean(np.sum((res.transform.transform(P) - dst.points) ** 2, axis=1)))
    assert err < 1e-6
    assert all(b <= a for a, b in zip(res.rms_history, res.rms_history[1:]))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_icp_rms_monotone(rng):
    P = rng.normal(size=(200, 3)) * [3, 1, 0.5]
    truth = Sim3(rng.uniform(0.9, 1.1), rot_z(rng.uniform(-15, 15)), rng.normal(size=3) * 0.2)
    Q = truth.transform(P) + rng.normal(0, 0.01, P.shape)
    res = icp_align(PointCloud(P), PointCloud(Q), max_iters=30, rejection_radius=rng.uniform(0.2, 5))
    h = res.rms_history
    assert all(b <= a for a, b in zip(h, h[1:]))


def test_icp_disjoint_clouds():
    rng = np.random.default_rng(4)
    a = PointCloud(rng.normal(size=(100, 3)))
    b = PointCloud(rng.normal(size=(100, 3)) + 1000)
    with pytest.raises(AlignmentError):
        icp_sim3(a, b)
    with pytest.raises(AlignmentError):
        icp_sim3(PointCloud(np.empty((0, 3))), b)


def test_mean_vertex_distance_examples():
    gt_pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 1.0]])
    gt = PointCloud(gt_pts)
    segs = [LineSegment3D(gt_pts[0], gt_pts[1]), LineSegment3D(gt_pts[2], gt_pts[3])]
    assert mean_vertex_distance(segs, gt) == 0.0
    half = [LineSegment3D(0.5 * s.p1, 0.5 * s.p2) for s in segs]
    assert mean_vertex_distance(half, gt, Sim3(2.0, np.eye(3), np.zeros(3))) == pytest.approx(0, abs=1e-12)
    with pytest.raises(InputError):
        mean_vertex_distance(segs, PointCloud(np.empty((0, 3))))
    with pytest.raises(InputError):
        mean_vertex_distance([], gt)


def test_mean_vertex_distance_plane_offset():
    g = np.arange(-0.5, 0.5001, 0.001)
    X, Y = np.meshgrid(g, g)
    gt = PointCloud(np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)]))
    segs = [LineSegment3D([0.0, 0.0, 0.005], [0.1, 0.0, 0.005])]
    assert mean_vertex_distance(segs, gt) == pytest.approx(5.0, abs=1e-9)
    off_grid = [LineSegment3D([0.0005, 0.0005, 0.005], [0.1005, 0.0005, 0.005])]
    # sampling gap of half the diagonal spacing
    d = mean_vertex_distance(off_grid, gt)
    assert 5.0 <= d <= math.hypot(5.0, 1000 * 0.0005 * math.sqrt(2))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_mean_distance_sim3_consistency(rng):
    gt = PointCloud(rng.normal(size=(300, 3)))
    segs = [LineSegment3D(rng.normal(size=3), rng.normal(size=3) + 3) for _ in range(5)]
    S = Sim3(rng.uniform(0.5, 2), random_rotation(rng), rng.normal(size=3))
    pre = [s.transformed(S, "aligned") for s in segs]
    assert mean_vertex_distance(pre, gt) == pytest.approx(mean_vertex_distance(segs, gt, S), abs=1e-9)


def test_point_segment_distance_and_endpoint_errors():
    a, b = np.zeros(3), np.array([2.0, 0, 0])
    d = point_segment_distance([[1, 1, 0], [-1, 0, 0], [3, 0, 4]], a, b)
    np.testing.assert_allclose(d, [1, 1, math.sqrt(17)])
    gt = [LineSegment3D(a, b), LineSegment3D([0, 5, 0], [0, 6, 0])]
    errs = endpoint_errors([LineSegment3D([1, 0.5, 0], [0, 5.5, 0.1])], gt)
    np.testing.assert_allclose(errs, [0.5, 0.1])
    assert endpoint_errors([], gt).size == 0


def test_count_vertices():
    s = LineSegment3D([0, 0, 0], [1, 0, 0])
    assert count_vertices([s] * 1398) == 2796
    assert count_vertices([]) == 0
    assert count_vertices(PointCloud(np.zeros((7, 3)))) == 7
    assert count_vertices(np.zeros((5, 3))) == 5
    # a table reporting 2396 clustered vertices corresponds to 1198 clusters
    assert count_vertices([s] * 1198) == 2396


def test_timing_empty_and_additive(cfg, intr):
    assert time_keyframe_fit(fit_keyframe, [], cfg, intr, Pose()) < 5.0
    rng = np.random.default_rng(0)
    chains = [straight_chain(10, 5 + 4 * k, 300, 2.0 + rng.normal(0, 0.001, 300)) for k in range(40)]
    # machine speed drifts on a shared host; sizes timed back to back see the
    # same speed, so compare the median of per-round ratios
    r2, r4 = [], []
    for _ in range(15):
        t = {n: time_keyframe_fit(fit_keyframe, chains * n, cfg, intr, Pose()) for n in (1, 2, 4)}
        r2.append(t[2] / t[1])
        r4.append(t[4] / t[1])
    assert np.median(r2) < 2 * 1.2
    assert np.median(r4) < 4 * 1.2


def test_eval_report_text_and_csv():
    r = EvalReport("edge_aided", 13.5, 10, [1.0, 3.0])
    assert r.mean_fit_ms == 2.0
    assert r.csv_row() == "edge_aided,13.5,10,2.0,2"
    assert "13.50 mm" in r.text()
    assert EvalReport("x", None, 0).csv_row() == "x,,0,,0"


@pytest.mark.parametrize("binary", [False, True])
def test_ply_roundtrip(tmp_path, binary):
    pts = np.random.default_rng(5).normal(size=(50, 3))
    p = tmp_path / "c.ply"
    write_ply_points(p, pts, binary=binary)
    back = read_ply_points(p)
    np.testing.assert_allclose(back, pts, atol=0 if not binary else 1e-6)
    if not binary:
        np.testing.assert_array_equal(back, pts)


def test_ply_with_extra_properties_and_faces(tmp_path):
    p = tmp_path / "m.ply"
    p.write_text("ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float y\n"
                 "property float x\nproperty uchar red\nproperty float z\nelement face 1\n"
                 "property list uchar int vertex_indices\nend_header\n1 2 255 3\n4 5 0 6\n3 0 1 1\n")
    np.testing.assert_array_equal(read_ply_points(p), [[2, 1, 3], [5, 4, 6]])


def test_ply_errors(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text("not a ply")
    with pytest.raises(InputError):
        read_ply_points(p)
    p.write_text("ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n")
    with pytest.raises(InputError):
        read_ply_points(p)
    with pytest.raises(InputError):
        read_ply_points(tmp_path / "missing.ply")
