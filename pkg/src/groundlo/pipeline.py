"""Per-frame pipeline and the evaluation campaigns.

Per frame: project -> segment ground -> project ground image -> smoothness
-> features -> two-stage registration -> (optional map refinement) ->
accumulate. All odometry here is without loop closing ("w/o LC").
"""

from __future__ import annotations

import csv
import logging
import math
import time
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .evaluation import (
    AlignmentDegenerate,
    GroundMetrics,
    GroundSeries,
    absolute_trajectory_error,
    ground_confusion,
    relative_pose_error,
)
from .features import FeatureSet, compute_smoothness, extract_features
from .geometry import ConfigurationError, SE3Pose, Scan, se3_compose, se3_inverse, spherical_project
from .io import kitti, synthetic
from .io.kitti import format_pose_line
from .odometry import FeatureMap, Trajectory, estimate_relative_pose, map_refine
from .segmentation import GroundLabelSet, segment_ground

log = logging.getLogger(__name__)

LC_CONDITION = "w/o LC"
STAGES = ("project", "segment", "ground_image", "smoothness", "features", "estimate", "refine")
DIAGNOSTIC_FIELDS = (
    "frame_id", "stage1_iterations", "stage2_iterations", "stage1_correspondences",
    "stage2_correspondences", "stage1_converged", "stage2_converged", "refine_applied",
    "n_edge", "n_planar_ground", "n_planar_nonground", "wall_ms",
)


class PipelineError(RuntimeError):
    def __init__(self, frame_id: int, stage: str, cause: Exception, variant: str | None = None):
        where = f"[{variant}] " if variant else ""
        super().__init__(f"{where}frame {frame_id}, stage {stage}: {type(cause).__name__}: {cause}")
        self.frame_id = frame_id
        self.stage = stage
        self.variant = variant
        self.cause = cause


@dataclass
class Frame:
    frame_id: int
    scan: Scan
    truth_labels: GroundLabelSet | None = None
    truth_pose: SE3Pose | None = None  # world pose, any anchor


# ---------------------------------------------------------------------------
# frame sources


def parse_frame_range(text: str | None) -> tuple[int, int] | None:
    """``A..B`` (inclusive) -> (A, B)."""
    if not text:
        return None
    a, sep, b = text.partition("..")
    try:
        lo, hi = int(a), int(b)
    except ValueError:
        raise ConfigurationError(f"frame range must look like A..B, got {text!r}") from None
    if not sep or lo < 0 or hi < lo:
        raise ConfigurationError(f"invalid frame range {text!r}")
    return lo, hi


def synthetic_spec(config: PipelineConfig) -> synthetic.SyntheticSceneSpec:
    d = config.dataset
    sensor = synthetic.SensorModel(config.projection, max_range=d.max_range, range_noise=d.range_noise)
    if d.scene == "structured_circle":
        traj = synthetic.circular_trajectory(d.radius, d.frames, d.step_deg, mount_height=sensor.mount_height)
        return synthetic.structured_scene(traj, d.seed, sensor, center=(0.0, d.radius), radius=d.radius)
    if d.scene == "static":
        pose = SE3Pose.from_euler(0, 0, 0, (0.0, 0.0, sensor.mount_height))
        return synthetic.structured_scene([pose] * d.frames, d.seed, sensor, center=(0.0, d.radius), radius=d.radius)
    if d.scene == "undulating":
        return synthetic.undulating_scene(d.frames, d.amplitude, d.wavelength, d.step, d.seed, sensor)
    if d.scene == "wall_room":
        spec = synthetic.wall_room_scene(d.seed, sensor)
        return replace(spec, trajectory=spec.trajectory * d.frames)
    traj = synthetic.straight_trajectory(d.frames, d.step, mount_height=sensor.mount_height)
    return synthetic.SyntheticSceneSpec(d.seed, synthetic.GroundModel(), sensor=sensor, trajectory=tuple(traj))


def _in_range(i: int, frames) -> bool:
    return frames is None or frames[0] <= i <= frames[1]


def iter_frames(config: PipelineConfig, frames=None, need_labels: bool = False):
    d = config.dataset
    if d.kind == "synthetic":
        spec = synthetic_spec(config)
        for sf in synthetic.iter_synthetic_sequence(spec):
            if _in_range(sf.scan.frame_id, frames):
                yield Frame(sf.scan.frame_id, sf.scan, sf.truth, sf.pose)
        return

    layout = kitti.DatasetLayout(Path(d.root), d.sequence)
    scans = layout.check()
    if need_labels and not layout.has_labels():
        raise FileNotFoundError(f"no labels directory under {layout.sequence_dir}")
    poses = None
    if layout.poses_path is not None:
        calib = layout.calib_path if d.use_calib else None
        poses = kitti.read_kitti_poses(layout.poses_path, calib)
    for path in scans:
        fid = int(path.stem)
        if not _in_range(fid, frames):
            continue
        scan = kitti.read_kitti_bin(path)
        scan = Scan(scan.points, scan.intensity, fid, None, scan.dropped)
        labels = None
        if layout.has_labels():
            labels = kitti.read_semantickitti_labels(layout.label_path(path), len(scan),
                                                     config.evaluation.ground_classes)
        pose = poses.poses[fid] if poses is not None and fid < len(poses) else None
        yield Frame(fid, scan, labels, pose)


# ---------------------------------------------------------------------------
# per-variant state


@dataclass
class OdometrySummary:
    frames: int
    t_rel: float | None = None
    r_rel: float | None = None
    ate_rmse: float | None = None
    ate_alignment: str = "rigid"
    note: str = ""

    def lines(self) -> list[str]:
        out = [f"condition={LC_CONDITION}", f"frames={self.frames}",
               f"t_rel_pct={_fmt(self.t_rel)}", f"r_rel_deg_per_100m={_fmt(self.r_rel)}",
               f"ate_rmse_m={_fmt(self.ate_rmse)}", f"ate_alignment={self.ate_alignment}"]
        if self.note:
            out.append(f"note={self.note}")
        return out


def _fmt(v) -> str:
    return "undefined" if v is None else f"{v:.10g}"


@dataclass
class RunResult:
    name: str
    segmenter: str
    trajectory: Trajectory = field(default_factory=Trajectory)
    truth: Trajectory | None = None
    ground: GroundSeries | None = None
    odometry: OdometrySummary | None = None
    diagnostics: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)


class _Writers:
    """Incrementally flushed output files of one variant."""

    def __init__(self, stack: ExitStack, out_dir: Path | None, odometry: bool, ground: bool, config: PipelineConfig):
        self.dir = out_dir
        self.traj = self.diag = self.ground = self.timing = None
        self.config = config
        if out_dir is None:
            return
        out_dir.mkdir(parents=True, exist_ok=True)
        if odometry:
            self.traj = stack.enter_context(open(out_dir / "trajectory.txt", "w"))
            fh = stack.enter_context(open(out_dir / "diagnostics.csv", "w", newline=""))
            self.diag = (fh, csv.DictWriter(fh, DIAGNOSTIC_FIELDS))
            self.diag[1].writeheader()
            if config.output.profile:
                fh = stack.enter_context(open(out_dir / "timing.csv", "w", newline=""))
                self.timing = (fh, csv.DictWriter(fh, ("frame_id",) + tuple(f"{s}_ms" for s in STAGES)))
                self.timing[1].writeheader()
        if ground:
            fh = stack.enter_context(open(out_dir / "ground_eval.csv", "w", newline=""))
            self.ground = (fh, csv.writer(fh))
            self.ground[1].writerow(["frame", "precision", "recall"])
        for sub, on in (("labels", config.output.dump_labels), ("features", config.output.dump_features)):
            if on:
                (out_dir / sub).mkdir(exist_ok=True)

    def pose(self, pose: SE3Pose):
        if self.traj:
            self.traj.write(format_pose_line(pose) + "\n")
            self.traj.flush()

    def row(self, target, row):
        if target:
            target[1].writerow(row)
            target[0].flush()

    def ground_row(self, frame_id: int, m: GroundMetrics):
        self.row(self.ground, [frame_id, _metric(m.precision), _metric(m.recall)])

    def dumps(self, frame_id: int, labels: GroundLabelSet, features: FeatureSet | None):
        if self.dir is None:
            return
        if self.config.output.dump_labels:
            kitti.write_label_dump(labels, self.dir / "labels" / f"{frame_id:06d}.bin")
        if self.config.output.dump_features and features is not None:
            (self.dir / "features" / f"{frame_id:06d}.txt").write_text("\n".join(features.dump_lines()) + "\n")


def _metric(v) -> str:
    return "undefined" if v is None else f"{v:.10g}"


class _Variant:
    def __init__(self, name: str, config: PipelineConfig, writers: _Writers, odometry: bool, ground: bool):
        self.name = name
        self.config = config
        self.seg = config.segmenter_config
        self.w = writers
        self.do_odom = odometry
        self.do_ground = ground
        self.result = RunResult(name, config.segmenter.kind)
        self.truth_poses: list[tuple[int, SE3Pose]] = []
        self.ground_metrics: list[GroundMetrics] = []
        self.prev: FeatureSet | None = None
        self.prev_rel = SE3Pose.identity()
        self.map = FeatureMap(config.odometry.map_window)

    def process(self, frame: Frame, range_image, smoothness_cache: dict):
        fid = frame.frame_id
        stage = "segment"
        timing = {s: 0.0 for s in STAGES}
        t_start = time.perf_counter()
        try:
            t0 = time.perf_counter()
            labels = segment_ground(self.seg, frame.scan, range_image)
            timing["segment"] = time.perf_counter() - t0
            if self.do_ground:
                if frame.truth_labels is None:
                    raise FileNotFoundError("frame has no ground-truth labels")
                m = ground_confusion(labels, frame.truth_labels)
                self.ground_metrics.append(m)
                self.w.ground_row(fid, m)
            features = None
            if self.do_odom:
                features = self._odometry(frame, range_image, labels, smoothness_cache, timing)
                stage = "accumulate"
            self.w.dumps(fid, labels, features)
        except PipelineError:
            raise
        except Exception as exc:  # tag any module failure with frame and stage
            raise PipelineError(fid, getattr(exc, "_stage", stage), exc, self.name) from exc
        if self.do_odom:
            timing["project"] = smoothness_cache.get("project_s", 0.0)
            wall_ms = 1000.0 * (time.perf_counter() - t_start + timing["project"])
            self.result.diagnostics[-1]["wall_ms"] = f"{wall_ms:.3f}"
            self.w.row(self.w.diag, self.result.diagnostics[-1])
            trow = {"frame_id": fid, **{f"{s}_ms": f"{1000 * v:.3f}" for s, v in timing.items()}}
            self.result.timings.append(trow)
            self.w.row(self.w.timing, trow)

    def _odometry(self, frame, ri, labels, cache, timing):
        cfg = self.config
        fid = frame.frame_id

        def timed(stage, fn, *args):
            t0 = time.perf_counter()
            try:
                return fn(*args)
            except Exception as exc:
                exc._stage = stage
                raise
            finally:
                timing[stage] += time.perf_counter() - t0

        gi = timed("ground_image", spherical_project, frame.scan, cfg.projection, labels.ground_indices)
        if "smoothness" not in cache:
            cache["smoothness"] = timed("smoothness", compute_smoothness, ri, cfg.features)
        feats = timed("features", extract_features, ri, gi, cache["smoothness"], labels, frame.scan, cfg.features)

        diag = {k: "" for k in DIAGNOSTIC_FIELDS}
        diag.update(frame_id=fid, n_edge=len(feats.edge_points),
                    n_planar_ground=int(feats.planar_is_ground.sum()),
                    n_planar_nonground=int((~feats.planar_is_ground).sum()))
        traj = self.result.trajectory
        if self.prev is None:
            world = SE3Pose.identity()
        else:
            est = timed("estimate", estimate_relative_pose, feats, self.prev, self.prev_rel, cfg.odometry)
            world = se3_compose(traj.last, est.combined)
            diag.update(stage1_iterations=est.stage1.iterations, stage2_iterations=est.stage2.iterations,
                        stage1_correspondences=est.stage1.n_correspondences,
                        stage2_correspondences=est.stage2.n_correspondences,
                        stage1_converged=int(est.stage1.converged), stage2_converged=int(est.stage2.converged))
            if cfg.odometry.map_refine:
                ref = timed("refine", map_refine, feats, self.map, world, cfg.odometry)
                world = ref.pose
                diag["refine_applied"] = int(ref.applied)
            self.prev_rel = se3_compose(se3_inverse(traj.last), world)
        traj.append(fid, world)
        self.w.pose(world)
        if frame.truth_pose is not None:
            self.truth_poses.append((fid, frame.truth_pose))
        self.map.add(feats, world)
        self.prev = feats
        self.result.diagnostics.append(diag)
        return feats

    def finish(self):
        res = self.result
        if self.do_ground:
            res.ground = GroundSeries.from_metrics(self.ground_metrics)
        if self.do_odom:
            res.odometry = OdometrySummary(len(res.trajectory))
            if self.truth_poses and len(self.truth_poses) == len(res.trajectory):
                inv0 = se3_inverse(self.truth_poses[0][1])
                res.truth = Trajectory([f for f, _ in self.truth_poses],
                                       [se3_compose(inv0, p) for _, p in self.truth_poses])
                _trajectory_metrics(res, self.config)
            else:
                res.odometry.note = "no ground-truth poses"
        return res


def _trajectory_metrics(res: RunResult, config: PipelineConfig) -> None:
    summ = res.odometry
    try:
        rpe = relative_pose_error(res.trajectory, res.truth, config.evaluation.segment_lengths,
                                  config.evaluation.rpe_step)
        summ.t_rel, summ.r_rel = rpe.t_rel, rpe.r_rel
    except ValueError as exc:
        summ.note = str(exc)
    if len(res.truth) == 0:
        return
    try:
        summ.ate_rmse = absolute_trajectory_error(res.trajectory, res.truth).rmse
    except AlignmentDegenerate:
        # both trajectories start at the identity; compare positions unaligned
        d = res.trajectory.positions() - res.truth.positions()
        summ.ate_rmse = math.sqrt(float(np.mean(np.sum(d * d, axis=1))))
        summ.ate_alignment = "none (degenerate ground truth)"


# ---------------------------------------------------------------------------
# campaigns


def _run(variants: list[tuple[str, PipelineConfig]], out_dirs, frames, odometry: bool, ground: bool) -> list[RunResult]:
    base = variants[0][1]
    with ExitStack() as stack:
        states = [_Variant(name, cfg, _Writers(stack, out, odometry, ground, cfg), odometry, ground)
                  for (name, cfg), out in zip(variants, out_dirs)]
        for frame in iter_frames(base, frames, need_labels=ground):
            t0 = time.perf_counter()
            try:
                ri = spherical_project(frame.scan, base.projection)
            except Exception as exc:
                raise PipelineError(frame.frame_id, "project", exc) from exc
            cache = {"project_s": time.perf_counter() - t0}
            for st in states:
                st.process(frame, ri, cache)
        return [st.finish() for st in states]


def run_variants(variants: list[tuple[str, PipelineConfig]], frames=None, odometry: bool = True,
                 ground: bool = False, out_dir=None) -> list[RunResult]:
    """Run several configs in lockstep over the frames of the first one.

    Frames are loaded (or rendered) once and shared, so this is the cheap way
    to compare variants on identical input.
    """
    out = Path(out_dir) if out_dir is not None else None
    dirs = [out / name if out is not None else None for name, _ in variants]
    return _run(variants, dirs, frames, odometry, ground)


def _write_summary(path: Path, res: RunResult, config: PipelineConfig) -> None:
    lines = [f"segmenter={res.segmenter}"]
    if res.odometry is not None:
        lines += res.odometry.lines()
    if res.ground is not None:
        lines += ground_summary_lines(res.ground)
    path.write_text("\n".join(lines) + "\n")


def ground_summary_lines(series: GroundSeries) -> list[str]:
    p, r = series.precision, series.recall
    return [f"ground_frames={len(series.frames)}",
            f"precision_mean={_fmt(p.mean)}", f"precision_std={_fmt(p.std)}",
            f"precision_undefined_frames={p.n_undefined}",
            f"recall_mean={_fmt(r.mean)}", f"recall_std={_fmt(r.std)}",
            f"recall_undefined_frames={r.n_undefined}"]


def run_odometry(config: PipelineConfig, out_dir=None, frames=None) -> RunResult:
    out = Path(out_dir) if out_dir is not None else None
    res = _run([(config.segmenter.kind, config)], [out], frames, odometry=True, ground=False)[0]
    if out is not None:
        _write_summary(out / "summary.txt", res, config)
    return res


def run_ground_eval(config: PipelineConfig, out_dir=None, frames=None) -> RunResult:
    out = Path(out_dir) if out_dir is not None else None
    res = _run([(config.segmenter.kind, config)], [out], frames, odometry=False, ground=True)[0]
    if out is not None:
        _write_summary(out / "summary.txt", res, config)
    return res


@dataclass
class CompareResult:
    results: list[RunResult]

    def table(self) -> str:
        head = ("variant", "segmenter", "frames", "prec_mean", "prec_std", "rec_mean", "rec_std",
                "t_rel_pct", "r_rel_deg100m", "ate_m")
        rows = [head]
        for r in self.results:
            g, o = r.ground, r.odometry
            rows.append((
                r.name, r.segmenter, str(len(g.frames) if g else len(r.trajectory)),
                _fmt(g.precision.mean if g else None), _fmt(g.precision.std if g else None),
                _fmt(g.recall.mean if g else None), _fmt(g.recall.std if g else None),
                _fmt(o.t_rel if o else None), _fmt(o.r_rel if o else None), _fmt(o.ate_rmse if o else None),
            ))
        widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
        body = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
        return f"# odometry condition: {LC_CONDITION}\n" + "\n".join(body) + "\n"


def compare_segmenters(config: PipelineConfig, out_dir=None, frames=None, odometry: bool = True,
                       ground: bool | None = None) -> CompareResult:
    """Run every ``variant.<name>`` block on the same frames; only the
    segmenter differs between runs."""
    variants = config.variant_configs()
    if len(variants) < 2:
        raise ConfigurationError(f"compare needs at least 2 segmenter variants, got {len(variants)}")
    digests = {cfg.non_segmenter_digest() for _, cfg in variants}
    if len(digests) != 1:
        raise ConfigurationError("variants differ outside the segmenter blocks")
    if ground is None:
        ground = config.dataset.kind == "synthetic" or kitti.DatasetLayout(
            Path(config.dataset.root), config.dataset.sequence).has_labels()
    out = Path(out_dir) if out_dir is not None else None
    dirs = [out / name if out is not None else None for name, _ in variants]
    results = _run(variants, dirs, frames, odometry=odometry, ground=ground)
    cmp = CompareResult(results)
    if out is not None:
        for (name, cfg), res, d in zip(variants, results, dirs):
            _write_summary(d / "summary.txt", res, cfg)
        (out / "compare.txt").write_text(cmp.table())
    return cmp
