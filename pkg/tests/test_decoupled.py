import numpy as np
import pytest

from conftest import straight_chain
from edgeline3d.decoupled import (
    detect_2d_segments,
    fit_edge_segment_decoupled,
    fit_keyframe_decoupled,
    ransac_depth_fit,
    ransac_line2d,
)
from edgeline3d.edge_aided import fit_edge_segment
from edgeline3d.evaluation import point_segment_distance
from edgeline3d.fitting import backproject_xyz
from edgeline3d.synthetic import depth_step_scene, render_synthetic
from edgeline3d.types import EdgeSegment


def test_straight_chain_one_2d_segment(cfg):
    es = straight_chain(100, 100, 100, 2.0)
    (seg,) = detect_2d_segments(es, cfg)
    np.testing.assert_allclose(seg.a, [100, 100])
    np.testing.assert_allclose(seg.b, [199, 100])
    assert len(seg.support) == 100


def test_corner_two_2d_segments(cfg):
    xs = list(range(100, 150)) + [149] * 49
    ys = [200] * 50 + list(range(201, 250))
    segs = detect_2d_segments(EdgeSegment(xs, ys), cfg)
    assert len(segs) == 2
    assert abs(segs[0].support[-1] - 49) <= cfg.L


def test_depth_step_one_2d_segment(cfg, intr):
    (kf,) = render_synthetic(depth_step_scene())
    (es,) = kf.chains
    assert len(es) == 120
    assert len(detect_2d_segments(es, cfg)) == 1


def test_2d_support_near_segment(cfg):
    rng = np.random.default_rng(0)
    dys = rng.choice([-1, 0, 1], size=199, p=[0.1, 0.8, 0.1])
    es = EdgeSegment(np.arange(200), 100 + np.concatenate([[0], np.cumsum(dys)]))
    for s in detect_2d_segments(es, cfg):
        P = np.column_stack([es.xs[s.support], es.ys[s.support]]).astype(float)
        d = point_segment_distance(np.column_stack([P, np.zeros(len(P))]), np.append(s.a, 0), np.append(s.b, 0))
        assert d.max() < 1.5
        assert s.length > 0


def test_ransac_linear_depth_matches_direct(cfg, intr):
    es = straight_chain(100, 300, 60, lambda i: 2.0 + 0.0005 * i, dx=1, dy=-1)
    (seg,) = detect_2d_segments(es, cfg)
    s3 = ransac_depth_fit(seg, intr, 100, cfg.e2, cfg.L, np.random.default_rng(1))
    (direct,) = fit_edge_segment(es, cfg, intr)
    np.testing.assert_allclose(s3.p1, direct.p1, atol=1e-6)
    np.testing.assert_allclose(s3.p2, direct.p2, atol=1e-6)
    np.testing.assert_allclose(s3.p1, backproject_xyz(100, 300, 2.0, intr), atol=1e-6)


def test_ransac_gross_outliers_recovers_slope():
    rng = np.random.default_rng(11)
    D = np.arange(200, dtype=float)
    zf = 1000.0 + 0.8 * D
    bad = rng.random(200) < 0.3
    zf[bad] = rng.uniform(500, 1500, bad.sum())
    mask = ransac_line2d(np.column_stack([D, zf]), 100, 1.44, np.random.default_rng(5))
    assert not mask[~bad].sum() < 0.95 * (~bad).sum()
    d, z = D[mask], zf[mask]
    slope = np.polyfit(d, z, 1)[0]
    assert abs(slope - 0.8) < 0.01 * 0.8


def test_ransac_rejects_single_depth_pixel(cfg, intr):
    z = np.full(40, np.nan)
    z[5] = 2.0
    (seg,) = detect_2d_segments(straight_chain(10, 10, 40, z), cfg)
    assert ransac_depth_fit(seg, intr, 100, cfg.e2, cfg.L) is None


def test_ransac_rejects_low_consensus(cfg, intr):
    rng = np.random.default_rng(2)
    es = straight_chain(10, 10, 80, rng.uniform(1.0, 4.0, 80))
    (seg,) = detect_2d_segments(es, cfg)
    assert ransac_depth_fit(seg, intr, 100, cfg.e2, cfg.L, rng) is None


def test_agrees_with_edge_aided_noise_free(cfg, intr):
    chains = [
        straight_chain(50, 60, 80, 2.5),
        straight_chain(300, 50, 90, lambda i: 3.0 - 0.002 * i, dx=0, dy=1),
        straight_chain(400, 400, 70, lambda i: 1.5 + 0.001 * i, dx=-1, dy=-1),
    ]
    for es in chains:
        (a,) = fit_edge_segment(es, cfg, intr)
        (b,) = fit_edge_segment_decoupled(es, cfg, intr)
        np.testing.assert_allclose(a.p1, b.p1, atol=1e-6)
        np.testing.assert_allclose(a.p2, b.p2, atol=1e-6)


def test_fixed_seed_deterministic(cfg, intr):
    rng = np.random.default_rng(9)
    z = 2.0 + 0.001 * np.arange(150) + rng.normal(0, 0.003, 150)
    hit = rng.random(150) < 0.2
    z[hit] = rng.uniform(1, 3, hit.sum())
    es = straight_chain(100, 100, 150, z)
    a = fit_keyframe_decoupled([es, es], cfg, intr, seed=[4, 1])
    b = fit_keyframe_decoupled([es, es], cfg, intr, seed=[4, 1])
    assert len(a) == len(b) > 0
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.p1, t.p1)
        np.testing.assert_array_equal(s.p2, t.p2)


def test_depth_step_baseline_failure(cfg, intr):
    scene = depth_step_scene()
    (kf,) = render_synthetic(scene)
    base = fit_keyframe_decoupled(kf.chains, cfg, intr, kf.pose)
    ours = fit_edge_segment(kf.chains[0], cfg, intr)
    assert len(base) == 1 and len(ours) == 2

    def max_err(segs):
        pts = np.concatenate([np.stack([s.p1, s.p2]) for s in segs])
        return np.min([point_segment_distance(pts, g.p1, g.p2) for g in scene.segments], axis=0).max()

    assert max_err(base) > 5 * max_err(ours)
