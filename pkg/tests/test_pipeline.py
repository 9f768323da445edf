import csv
from dataclasses import replace

import numpy as np
import pytest

from groundlo import cli, pipeline
from groundlo.config import (
    PipelineConfig,
    apply_overrides,
    dump_config,
    load_config,
    parse_config,
)
from groundlo.geometry import ConfigurationError, ProjectionConfig, SE3Pose
from groundlo.io import kitti
from groundlo.odometry import DegenerateStage


def small(text: str = "") -> PipelineConfig:
    """Reduced horizontal resolution keeps these runs to a few seconds."""
    return parse_config("projection.cols = 900\ndataset.frames = 4\nodometry.max_corr_dist = 2.5\n" + text)


# --- config -------------------------------------------------------------------


def test_defaults_dump_round_trip():
    cfg = PipelineConfig()
    text = dump_config(cfg)
    assert "segmenter.kind = region_plane" in text
    assert "odometry.huber_delta = 0.1" in text
    assert parse_config(text) == cfg


def test_round_trip_with_variants():
    cfg = parse_config("variant.a.segmenter.kind = line_angle\nvariant.b.ransac.rng_seed = 3\n"
                       "variant.b.segmenter.kind = ransac\nodometry.map_refine = true\n")
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert [n for n, _ in again.variant_configs()] == ["a", "b"]
    assert again.variant_configs()[1][1].ransac.rng_seed == 3


def test_two_segmenters_rejected():
    with pytest.raises(ConfigurationError, match="exactly one"):
        parse_config("segmenter.kind = line_angle, ransac\n")


@pytest.mark.parametrize("text,match", [
    ("segmenter.colour = red\n", "unknown key"),
    ("nothing.key = 1\n", "unknown section"),
    ("odometry.huber_delta = 0.1\nodometry.huber_delta = 0.2\n", "twice"),
    ("odometry.max_iterations = many\n", ":1"),
    ("just words\n", "expected"),
    ("variant.a.odometry.huber_delta = 1\n", "segmenter sections"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigurationError, match=match):
        parse_config(text)


def test_invalid_variant_block_is_named():
    with pytest.raises(ConfigurationError, match="'bad'"):
        parse_config("variant.good.segmenter.kind = line_angle\nvariant.bad.line_angle.tau_theta = 95\n")


def test_overrides_and_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nsegmenter.kind = ransac  # trailing\n")
    cfg = apply_overrides(load_config(p), [("ransac.inlier_threshold", "0.3")])
    assert cfg.segmenter.kind == "ransac" and cfg.ransac.inlier_threshold == 0.3


def test_frame_range():
    assert pipeline.parse_frame_range("0..500") == (0, 500)
    for bad in ("5..1", "a..b", "3"):
        with pytest.raises(ConfigurationError):
            pipeline.parse_frame_range(bad)


# --- odometry runs ------------------------------------------------------------------


def test_static_scene_gives_identity_poses(tmp_path):
    cfg = parse_config("dataset.scene = static\ndataset.frames = 5\n")
    res = pipeline.run_odometry(cfg, tmp_path)
    for pose in res.trajectory.poses:
        assert np.linalg.norm(pose.translation) < 1e-6 and pose.rotation_angle() < 1e-6
    assert res.odometry.ate_rmse < 1e-6
    summary = (tmp_path / "summary.txt").read_text()
    assert "condition=w/o LC" in summary and "frames=5" in summary


def test_outputs_are_deterministic(tmp_path):
    cfg = small("dataset.range_noise = 0.01\noutput.dump_labels = true\noutput.dump_features = true\n")
    pipeline.run_odometry(cfg, tmp_path / "a")
    pipeline.run_odometry(cfg, tmp_path / "b")
    for name in ("trajectory.txt", "summary.txt", "labels/000002.bin", "features/000003.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def rows(d):
        with open(d / "diagnostics.csv") as fh:
            return [{k: v for k, v in r.items() if k != "wall_ms"} for r in csv.DictReader(fh)]

    assert rows(tmp_path / "a") == rows(tmp_path / "b")
    assert len(rows(tmp_path / "a")) == 4


def test_written_trajectory_matches_result(tmp_path):
    res = pipeline.run_odometry(small(), tmp_path)
    back = kitti.read_kitti_poses(tmp_path / "trajectory.txt")
    for a, b in zip(res.trajectory.poses, back.poses):
        assert np.abs(a.matrix() - b.matrix()).max() < 1e-12


def test_failure_leaves_well_formed_prefix(tmp_path, monkeypatch):
    cfg = small()
    pipeline.run_odometry(cfg, tmp_path / "full")
    real = pipeline.estimate_relative_pose
    calls = []

    def flaky(*args, **kw):
        calls.append(1)
        if len(calls) == 2:
            raise DegenerateStage("2", 0, 10)
        return real(*args, **kw)

    monkeypatch.setattr(pipeline, "estimate_relative_pose", flaky)
    with pytest.raises(pipeline.PipelineError) as info:
        pipeline.run_odometry(cfg, tmp_path / "part")
    assert info.value.frame_id == 2 and info.value.stage == "estimate"
    full = (tmp_path / "full" / "trajectory.txt").read_text().splitlines()
    part = (tmp_path / "part" / "trajectory.txt").read_text().splitlines()
    assert part == full[:2]
    with open(tmp_path / "part" / "diagnostics.csv") as fh:
        assert [r["frame_id"] for r in csv.DictReader(fh)] == ["0", "1"]


def test_frames_subrange(tmp_path):
    res = pipeline.run_odometry(small(), frames=(1, 2))
    assert res.trajectory.frame_ids == [1, 2]
    assert np.array_equal(res.trajectory.poses[0].matrix(), np.eye(4))


# --- ground evaluation ------------------------------------------------------------


def test_flat_sequence_near_perfect(tmp_path):
    # sensor range kept inside the outermost zone; farther points are never binned
    cfg = parse_config("dataset.scene = flat\ndataset.frames = 3\ndataset.max_range = 79\n")
    res = pipeline.run_ground_eval(cfg, tmp_path)
    assert res.ground.precision.mean >= 0.99 and res.ground.recall.mean >= 0.99
    lines = (tmp_path / "ground_eval.csv").read_text().splitlines()
    assert lines[0] == "frame,precision,recall" and len(lines) == 4


def test_ransac_fails_on_wall_room(tmp_path):
    cfg = parse_config("dataset.scene = wall_room\ndataset.frames = 1\nsegmenter.kind = ransac\n")
    res = pipeline.run_ground_eval(cfg)
    assert min(res.ground.precisions) < 0.5


def test_empty_sequence(tmp_path):
    res = pipeline.run_ground_eval(parse_config("dataset.frames = 0\n"), tmp_path)
    assert len(res.ground.frames) == 0
    assert (tmp_path / "ground_eval.csv").read_text() == "frame,precision,recall\n"
    assert "ground_frames=0" in (tmp_path / "summary.txt").read_text()


def test_kitti_without_labels_is_error(tmp_path):
    (tmp_path / "sequences" / "00" / "velodyne").mkdir(parents=True)
    cfg = parse_config(f"dataset.kind = kitti\ndataset.root = {tmp_path}\n")
    with pytest.raises(FileNotFoundError):
        pipeline.run_ground_eval(cfg)


# --- compare ------------------------------------------------------------------------


def test_identical_blocks_identical_rows(tmp_path):
    cfg = small("variant.a.segmenter.kind = ransac\nvariant.b.segmenter.kind = ransac\n")
    cmp = pipeline.compare_segmenters(cfg, tmp_path)
    rows = cmp.table().splitlines()
    assert rows[0] == "# odometry condition: w/o LC"
    assert rows[2].split()[1:] == rows[3].split()[1:]
    assert (tmp_path / "a" / "trajectory.txt").read_bytes() == (tmp_path / "b" / "trajectory.txt").read_bytes()
    assert (tmp_path / "compare.txt").read_text() == cmp.table()


def test_compare_needs_two_variants():
    with pytest.raises(ConfigurationError):
        pipeline.compare_segmenters(small("variant.a.segmenter.kind = ransac\n"))


def test_compare_tags_errors_with_variant(monkeypatch):
    real = pipeline.segment_ground

    def picky(seg, *a, **kw):
        if type(seg).__name__ == "LineAngleConfig":
            raise RuntimeError("boom")
        return real(seg, *a, **kw)

    monkeypatch.setattr(pipeline, "segment_ground", picky)
    cfg = small("variant.rp.segmenter.kind = region_plane\nvariant.la.segmenter.kind = line_angle\n")
    with pytest.raises(pipeline.PipelineError, match=r"\[la\].*segment"):
        pipeline.compare_segmenters(cfg)


def test_run_variants_share_frames():
    base = small()
    other = replace(base, odometry=replace(base.odometry, map_refine=True))
    a, b = pipeline.run_variants([("plain", base), ("refine", other)], frames=(0, 2))
    assert a.trajectory.frame_ids == b.trajectory.frame_ids == [0, 1, 2]
    assert any(d["refine_applied"] != "" for d in b.diagnostics)


# --- CLI ----------------------------------------------------------------------------


def test_cli_dump_config(capsys):
    assert cli.main(["odom", "--dump-config", "--set", "segmenter.kind=ransac"]) == 0
    out = capsys.readouterr().out
    assert "segmenter.kind = ransac" in out
    assert parse_config(out).segmenter.kind == "ransac"


def test_cli_config_error_exit_code(capsys):
    assert cli.main(["odom", "--set", "segmenter.kind=line_angle,ransac"]) == cli.EXIT_CONFIG
    assert "exactly one" in capsys.readouterr().err
    assert cli.main(["odom", "--frames", "9..1"]) == cli.EXIT_CONFIG


def test_cli_odom_and_profile(tmp_path, capsys):
    code = cli.main(["odom", "--set", "projection.cols=900", "--set", "dataset.frames=3",
                     "--set", "odometry.max_corr_dist=2.5",
                     "--out", str(tmp_path), "--profile"])
    assert code == 0
    assert "condition=w/o LC" in capsys.readouterr().out
    for name in ("trajectory.txt", "diagnostics.csv", "summary.txt", "timing.csv"):
        assert (tmp_path / name).exists()
    head = (tmp_path / "timing.csv").read_text().splitlines()[0].split(",")
    assert head[0] == "frame_id" and "segment_ms" in head


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    code = cli.main(["ground-eval", "--set", "dataset.kind=kitti", "--set", f"dataset.root={tmp_path}",
                     "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_RUNTIME


def test_cli_gen_synthetic_then_kitti_run(tmp_path, capsys):
    data = tmp_path / "data"
    assert cli.main(["gen-synthetic", "--set", "dataset.scene=flat", "--set", "dataset.frames=2",
                     "--set", "projection.cols=900", "--out", str(data)]) == 0
    lay = kitti.DatasetLayout(data, "00")
    assert len(lay.check()) == 2 and lay.has_labels()
    out = tmp_path / "eval"
    assert cli.main(["ground-eval", "--set", "dataset.kind=kitti", "--set", f"dataset.root={data}",
                     "--set", "projection.cols=900", "--out", str(out)]) == 0
    assert "recall_mean=" in capsys.readouterr().out
    assert len((out / "ground_eval.csv").read_text().splitlines()) == 3


def test_synthetic_spec_scenes():
    for scene in ("structured_circle", "undulating", "wall_room", "static", "flat"):
        spec = pipeline.synthetic_spec(parse_config(f"dataset.scene = {scene}\ndataset.frames = 2\n"))
        assert len(spec.trajectory) == 2
    assert isinstance(spec.trajectory[0], SE3Pose)
    assert spec.sensor.projection == ProjectionConfig()
