"""Command line batch runner: extract -> cluster -> eval, plus ground-truth export for synthetic scenes."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .clustering import cluster_incremental
from .dataset import attach_depth_semidense, load_tum_sequence
from .decoupled import fit_keyframe_decoupled
from .edge_aided import fit_keyframe
from .edges import detect_edges
from .errors import AlignmentError, ConfigError, InputError
from .evaluation import (
    EvalReport,
    PointCloud,
    count_vertices,
    icp_sim3,
    mean_vertex_distance,
    read_ply_points,
    timed_fit,
    umeyama_sim3,
    write_ply_points,
)
from .export import (
    CLUSTER_HEADER,
    EXPORT_FORMATS,
    export_segments,
    read_clusters_csv,
    read_segments_csv,
    write_clusters_csv,
    write_segments_csv,
)
from .synthetic import load_scene, render_synthetic, sample_segments
from .types import Config, dump_config, load_config, parse_bool, resolve_config

log = logging.getLogger("edgeline3d")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_ALIGNMENT = 5
EXIT_METRIC = 6

METHODS = ("edge_aided", "decoupled")


@dataclass
class RunManifest:
    input: str
    config: Optional[str]
    method: str
    out: str
    seed: int = 0
    stride: int = 10
    fold_angle: Optional[bool] = None
    outlier_mode: Optional[str] = None
    export: Optional[str] = None
    workers: int = 1
    images: bool = False
    # depth is scaled by this focal length in the depth plane; fy may differ
    depth_scale_focal: str = "fx"

    def __post_init__(self):
        if self.method not in METHODS + ("both",):
            raise ConfigError(f"method must be one of {METHODS + ('both',)}")

    @property
    def methods(self):
        return METHODS if self.method == "both" else (self.method,)


def build_config(path, fold_angle=None, outlier_mode=None) -> Config:
    cfg = load_config(path) if path else Config()
    overrides = {}
    if fold_angle is not None:
        overrides["fold_angle"] = fold_angle
    if outlier_mode is not None:
        overrides["outlier_mode"] = outlier_mode
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _keyframe_chains(kf, cfg, images):
    if kf.chains is not None and not images:
        return kf.chains
    chains = detect_edges(kf.image, cfg.gradient_threshold, cfg.anchor_threshold, cfg.scan_interval,
                          keyframe_id=kf.keyframe_id)
    return attach_depth_semidense(chains, kf.depth)


def _process_keyframe(job):
    kf, cfg, methods, seed, images = job
    rcfg = resolve_config(cfg, kf.intrinsics)
    chains = _keyframe_chains(kf, rcfg, images)
    out = {}
    for m in methods:
        if m == "edge_aided":
            segs, ms = timed_fit(fit_keyframe, chains, rcfg, kf.intrinsics, kf.pose)
        else:
            segs, ms = timed_fit(fit_keyframe_decoupled, chains, rcfg, kf.intrinsics, kf.pose,
                                 seed=[seed, kf.keyframe_id])
        out[m] = (segs, ms)
    return kf.keyframe_id, out


def _load_keyframes(manifest):
    path = Path(manifest.input)
    if not path.exists():
        raise InputError(f"input not found: {path}")
    if path.is_dir():
        return load_tum_sequence(path, manifest.stride)
    return render_synthetic(load_scene(path), with_images=manifest.images)


def run_extract(manifest: RunManifest, cfg: Config):
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    keyframes = _load_keyframes(manifest)
    jobs = ((kf, cfg, manifest.methods, manifest.seed, manifest.images) for kf in keyframes)
    if manifest.workers > 1:
        with ProcessPoolExecutor(manifest.workers) as pool:
            results = list(pool.map(_process_keyframe, jobs))
    else:
        results = [_process_keyframe(j) for j in jobs]
    reports = {}
    for m in manifest.methods:
        segs = [s for _, r in results for s in r[m][0]]
        times = [r[m][1] for _, r in results]
        write_segments_csv(out / f"segments_{m}.csv", segs, m)
        lines = ["kf_id,fit_ms"] + [f"{kf_id},{r[m][1]:.3f}" for kf_id, r in results]
        (out / f"timing_{m}.csv").write_text("\n".join(lines) + "\n")
        if manifest.export and manifest.export != "csv":
            export_segments(segs, out / f"segments_{m}.{manifest.export}", manifest.export, m)
        reports[m] = EvalReport(m, None, count_vertices(segs), times)
    (out / "manifest.json").write_text(json.dumps(dataclasses.asdict(manifest), indent=2, sort_keys=True) + "\n")
    (out / "config.txt").write_text(dump_config(cfg))
    return reports


def run_cluster(segments_csv, out_dir, cfg: Config, method=None, export=None):
    records = read_segments_csv(segments_csv)
    if method:
        records = [r for r in records if r.method == method]
    order = sorted(range(len(records)), key=lambda i: records[i].kf_id)
    segs = [records[i].segment for i in order]
    clusters = cluster_incremental(segs, cfg.lambda_alpha, cfg.lambda_d, cfg.lambda_C, cfg.fold_angle, ids=order)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_clusters_csv(out / "clusters.csv", clusters)
    if export and export != "csv":
        export_segments(clusters, out / f"clusters.{export}", export)
    before, after = count_vertices(segs), count_vertices(clusters)
    return clusters, before, after


def _read_pairs(path):
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read pairing file {path}: {exc}") from exc
    if data.shape[1] != 6:
        raise InputError(f"{path}: pairing rows need 6 columns (src xyz, dst xyz)")
    return data[:, :3], data[:, 3:]


def _read_eval_input(path):
    path = Path(path)
    try:
        first = path.open().readline().strip()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if first.split(",") == CLUSTER_HEADER:
        return "clusters", [c.representative for c in read_clusters_csv(path)]
    records = read_segments_csv(path)
    label = records[0].method if records else "segments"
    return label, [r.segment for r in records]


def _cmd_extract(args):
    cfg = build_config(args.config, args.fold_angle, args.outlier_mode)
    manifest = RunManifest(args.input, args.config, args.method, args.out, args.seed, args.stride,
                           args.fold_angle, args.outlier_mode, args.export, args.workers, args.images)
    reports = run_extract(manifest, cfg)
    for r in reports.values():
        print(r.text())
    return EXIT_OK


def _cmd_cluster(args):
    cfg = build_config(args.config, args.fold_angle)
    clusters, before, after = run_cluster(args.segments, args.out, cfg, args.method, args.export)
    ratio = "n/a" if after == 0 else f"{before / after:.2f}"
    print(f"clusters: {len(clusters)}")
    print(f"vertices before: {before} after: {after} compression: {ratio}")
    return EXIT_OK


def _cmd_eval(args):
    label, segs = _read_eval_input(args.input)
    gt = PointCloud(read_ply_points(args.gt))
    try:
        if args.pairs:
            align = umeyama_sim3(*_read_pairs(args.pairs))
        elif args.icp:
            src = read_ply_points(args.source_cloud) if args.source_cloud else None
            if src is None:
                src = np.concatenate([np.stack([s.p1, s.p2]) for s in segs]) if segs else np.empty((0, 3))
            align = icp_sim3(PointCloud(src), gt)
        else:
            align = None
    except AlignmentError as exc:
        print(f"alignment failed: {exc}", file=sys.stderr)
        return EXIT_ALIGNMENT
    try:
        dist = mean_vertex_distance(segs, gt, align)
    except InputError as exc:
        print(f"metric failed: {exc}", file=sys.stderr)
        return EXIT_METRIC
    report = EvalReport(label, dist, count_vertices(segs))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(EvalReport.CSV_HEADER + "\n" + report.csv_row() + "\n")
    (out / "report.txt").write_text(report.text() + "\n")
    print(report.text())
    return EXIT_OK


def _cmd_gt_cloud(args):
    scene = load_scene(args.scene)
    write_ply_points(args.out, sample_segments(scene.segments, args.spacing), binary=args.binary)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="edgeline3d", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="fit 3D segments per keyframe")
    e.add_argument("input", help="TUM RGB-D directory or synthetic scene JSON")
    e.add_argument("--out", required=True)
    e.add_argument("--config")
    e.add_argument("--method", choices=METHODS + ("both",), default="edge_aided")
    e.add_argument("--stride", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--fold-angle", type=parse_bool, default=None)
    e.add_argument("--outlier-mode", choices=("consecutive", "total"), default=None)
    e.add_argument("--export", choices=EXPORT_FORMATS, default=None)
    e.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    e.add_argument("--images", action="store_true", help="detect edges on rendered images for synthetic scenes")
    e.set_defaults(func=_cmd_extract)

    c = sub.add_parser("cluster", help="merge segments into clusters")
    c.add_argument("segments")
    c.add_argument("--out", required=True)
    c.add_argument("--config")
    c.add_argument("--method", default=None, help="only cluster rows with this method tag")
    c.add_argument("--fold-angle", type=parse_bool, default=None)
    c.add_argument("--export", choices=EXPORT_FORMATS, default=None)
    c.set_defaults(func=_cmd_cluster)

    v = sub.add_parser("eval", help="distance to ground truth and vertex counts")
    v.add_argument("input", help="segment or cluster CSV")
    v.add_argument("--gt", required=True, help="ground-truth PLY point cloud")
    v.add_argument("--out", required=True)
    g = v.add_mutually_exclusive_group()
    g.add_argument("--pairs", help="CSV of paired points x,y,z,X,Y,Z for a closed-form alignment")
    g.add_argument("--icp", action="store_true", help="align with ICP")
    v.add_argument("--source-cloud", help="PLY cloud to align with ICP instead of the endpoints")
    v.set_defaults(func=_cmd_eval)

    s = sub.add_parser("gt-cloud", help="sample a synthetic scene's ground-truth segments into a PLY")
    s.add_argument("scene")
    s.add_argument("--out", required=True)
    s.add_argument("--spacing", type=float, default=0.002)
    s.add_argument("--binary", action="store_true")
    s.set_defaults(func=_cmd_gt_cloud)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
