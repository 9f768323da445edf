import logging
import struct

import numpy as np
import pytest

from groundlo.geometry import ProjectionConfig, SE3Pose, Scan, se3_apply, se3_compose, se3_inverse
from groundlo.io import kitti, synthetic
from groundlo.odometry import Trajectory
from groundlo.segmentation import GroundLabelSet

IDENTITY_LINE = "1 0 0 0 0 1 0 0 0 0 1 0"


# --- velodyne .bin ------------------------------------------------------------


def test_bin_single_point(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    scan = kitti.read_kitti_bin(p)
    np.testing.assert_array_equal(scan.points, [[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(scan.intensity, [0.5])


def test_bin_empty_file(tmp_path):
    p = tmp_path / "e.bin"
    p.write_bytes(b"")
    assert len(kitti.read_kitti_bin(p)) == 0


def test_bin_bad_size(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(b"\x00" * 17)
    with pytest.raises(kitti.FormatError):
        kitti.read_kitti_bin(p)


def test_bin_nan_point_dropped(tmp_path):
    p = tmp_path / "n.bin"
    p.write_bytes(struct.pack("<8f", 1, 2, 3, 0, float("nan"), 0, 0, 0))
    scan = kitti.read_kitti_bin(p)
    assert len(scan) == 1 and scan.dropped == 1


def test_bin_order_matches_byte_offset(tmp_path, rng):
    pts = rng.normal(size=(50, 4)).astype("<f4")
    p = tmp_path / "o.bin"
    p.write_bytes(pts.tobytes())
    scan = kitti.read_kitti_bin(p)
    raw = p.read_bytes()
    for i in (0, 17, 49):
        np.testing.assert_array_equal(scan.points[i], struct.unpack_from("<3f", raw, 16 * i))


def test_bin_round_trip(tmp_path, rng):
    scan = Scan(rng.normal(size=(30, 3)).astype(np.float32), rng.random(30).astype(np.float32))
    kitti.write_kitti_bin(scan, tmp_path / "r.bin")
    back = kitti.read_kitti_bin(tmp_path / "r.bin")
    np.testing.assert_array_equal(back.points, scan.points)


# --- labels -----------------------------------------------------------------------


def test_label_road_is_ground(tmp_path):
    p = tmp_path / "a.label"
    p.write_bytes(b"\x28\x00\x00\x00")
    assert kitti.read_semantickitti_labels(p, 1).ground_indices.tolist() == [0]


def test_label_instance_bits_ignored(tmp_path):
    p = tmp_path / "a.label"
    p.write_bytes(struct.pack("<I", (7 << 16) | 40))
    assert kitti.read_semantickitti_labels(p, 1).ground_indices.tolist() == [0]


def test_label_vehicle_not_ground(tmp_path):
    p = tmp_path / "v.label"
    p.write_bytes(struct.pack("<I", 10))
    assert len(kitti.read_semantickitti_labels(p, 1)) == 0


def test_label_empty(tmp_path):
    p = tmp_path / "e.label"
    p.write_bytes(b"")
    g = kitti.read_semantickitti_labels(p, 0)
    assert g.total_points == 0 and len(g) == 0


def test_label_size_mismatch(tmp_path):
    p = tmp_path / "m.label"
    p.write_bytes(b"\x28\x00\x00\x00")
    with pytest.raises(kitti.FormatError):
        kitti.read_semantickitti_labels(p, 2)


def test_label_dump_bit_exact(tmp_path, rng):
    g = GroundLabelSet.from_mask(rng.random(1000) < 0.4)
    kitti.write_label_dump(g, tmp_path / "d.bin")
    assert kitti.read_label_dump(tmp_path / "d.bin") == g
    assert (tmp_path / "d.bin").read_bytes() == g.to_bytes()


# --- poses ------------------------------------------------------------------------


def test_pose_identity_line(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text(IDENTITY_LINE + "\n")
    t = kitti.read_kitti_poses(p)
    assert np.array_equal(t.poses[0].matrix(), np.eye(4))


def test_pose_two_lines(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text(IDENTITY_LINE + "\n1 0 0 5 0 1 0 0 0 0 1 0\n")
    t = kitti.read_kitti_poses(p)
    assert t.frame_ids == [0, 1]
    np.testing.assert_array_equal(t.poses[1].translation, [5, 0, 0])


def test_pose_short_line_names_line(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("1 0 0 0 0 1 0 0 0 0 1\n")
    with pytest.raises(kitti.FormatError, match=":1:"):
        kitti.read_kitti_poses(p)


def test_pose_non_orthonormal_warns_and_projects(tmp_path, caplog):
    p = tmp_path / "p.txt"
    p.write_text("1.01 0 0 0 0 1 0 0 0 0 1 0\n")
    with caplog.at_level(logging.WARNING):
        t = kitti.read_kitti_poses(p)
    assert "orthonormal" in caplog.text
    np.testing.assert_allclose(t.poses[0].rotation, np.eye(3), atol=1e-12)


def test_pose_calib_conjugation(tmp_path, rng):
    tr = SE3Pose.from_euler(-1.57, 0.01, -1.56, (0.01, -0.08, -0.27))
    cam = [SE3Pose.identity(), SE3Pose.from_euler(0.01, 0.2, -0.03, (0.3, 0.0, 4.0))]
    poses = tmp_path / "p.txt"
    kitti.write_trajectory_kitti(Trajectory([0, 1], cam), poses)
    calib = tmp_path / "calib.txt"
    calib.write_text("P0: " + " ".join(["0"] * 12) + "\nTr: " + kitti.format_pose_line(tr) + "\n")
    lidar = kitti.read_kitti_poses(poses, calib)
    expected = se3_compose(se3_inverse(tr), se3_compose(cam[1], tr))
    np.testing.assert_allclose(lidar.poses[1].matrix(), expected.matrix(), atol=1e-12)
    # a LiDAR point moved by the LiDAR pose equals the camera-frame motion seen through Tr
    x = rng.normal(size=3)
    np.testing.assert_allclose(se3_apply(tr, se3_apply(lidar.poses[1], x)), se3_apply(cam[1], se3_apply(tr, x)),
                               atol=1e-9)


def test_trajectory_round_trip(tmp_path, rng):
    poses = [SE3Pose.from_euler(*rng.uniform(-3, 3, 3), rng.uniform(-500, 500, 3)) for _ in range(100)]
    t = Trajectory(list(range(100)), poses)
    kitti.write_trajectory_kitti(t, tmp_path / "t.txt")
    back = kitti.read_kitti_poses(tmp_path / "t.txt")
    dev = max(np.abs(a.matrix() - b.matrix()).max() for a, b in zip(poses, back.poses))
    assert dev < 1e-12


def test_identity_trajectory_single_line(tmp_path):
    kitti.write_trajectory_kitti(Trajectory.start(0), tmp_path / "i.txt")
    assert (tmp_path / "i.txt").read_text().split() == IDENTITY_LINE.split()


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        kitti.write_trajectory_kitti(Trajectory.start(0), tmp_path / "missing" / "t.txt")


# --- layout -----------------------------------------------------------------------


def make_layout(root, n_scans=3, n_labels=3):
    seq = root / "sequences" / "05"
    (seq / "velodyne").mkdir(parents=True)
    (seq / "labels").mkdir()
    for k in range(n_scans):
        (seq / "velodyne" / f"{k:06d}.bin").write_bytes(struct.pack("<4f", 1, 0, 0, 0))
    for k in range(n_labels):
        (seq / "labels" / f"{k:06d}.label").write_bytes(struct.pack("<I", 40))
    return kitti.DatasetLayout(root, "5")


def test_layout_discovery(tmp_path):
    lay = make_layout(tmp_path)
    assert lay.sequence == "05"
    assert [p.name for p in lay.check()] == ["000000.bin", "000001.bin", "000002.bin"]
    assert lay.label_path(lay.scan_paths()[1]).name == "000001.label"
    assert kitti.dataset_available(tmp_path, "05")
    assert not kitti.dataset_available(tmp_path, "02")


def test_layout_label_count_mismatch(tmp_path):
    with pytest.raises(kitti.FormatError):
        make_layout(tmp_path, 3, 2).check()


def test_layout_frame_count_only_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        make_layout(tmp_path).check()
    assert "documented" in caplog.text


# --- synthetic generator ---------------------------------------------------------


def small_sensor(**kw):
    return synthetic.SensorModel(projection=ProjectionConfig(rows=32, cols=360), **kw)


def test_flat_world_all_ground():
    spec = synthetic.SyntheticSceneSpec(0, sensor=small_sensor(),
                                        trajectory=(SE3Pose.from_euler(0, 0, 0, (0, 0, 1.73)),))
    f = synthetic.generate_synthetic_sequence(spec)[0]
    assert len(f.scan) > 0 and len(f.truth) == len(f.scan)


def test_box_hits_are_nonground_and_on_box():
    box = synthetic.Box((10.0, 0.0, 1.0), (2.0, 2.0, 2.0))
    spec = synthetic.SyntheticSceneSpec(0, boxes=(box,), sensor=small_sensor(),
                                        trajectory=(SE3Pose.from_euler(0, 0, 0, (0, 0, 1.73)),))
    f = synthetic.generate_synthetic_sequence(spec)[0]
    on_box = f.surface == 0
    assert on_box.any()
    assert not f.truth.mask()[on_box].any()
    world = se3_apply(f.pose, f.scan.points)[on_box]
    lo, hi = np.array([9.0, -1.0, 0.0]), np.array([11.0, 1.0, 2.0])
    assert np.all((world >= lo - 1e-6) & (world <= hi + 1e-6))
    # the box face seen from the sensor bounds its hit count by solid angle
    res_az = 360.0 / 360
    res_el = (2.0 + 24.8) / 32
    az_span = 2 * np.degrees(np.arctan2(1.0, 9.0))
    el_span = np.degrees(np.arctan2(2.0 - 1.73, 9.0) - np.arctan2(-1.73, 9.0))
    assert on_box.sum() <= (az_span / res_az + 1) * (el_span / res_el + 2) * 1.5


def test_truth_soundness_sinusoid(rng):
    spec = synthetic.undulating_scene(n_frames=2, sensor=small_sensor())
    for f in synthetic.generate_synthetic_sequence(spec):
        world = se3_apply(f.pose, f.scan.points)
        ground = f.truth.mask()
        assert np.array_equal(ground, f.surface == -1)
        np.testing.assert_allclose(world[ground, 2], spec.ground.height_at(world[ground, 0], world[ground, 1]),
                                   atol=1e-6)


def test_seed_determinism():
    spec = synthetic.structured_scene(synthetic.circular_trajectory(n_frames=2), seed=3,
                                      sensor=small_sensor(range_noise=0.02))
    a = synthetic.generate_synthetic_sequence(spec)
    b = synthetic.generate_synthetic_sequence(spec)
    for fa, fb in zip(a, b):
        assert fa.scan.points.tobytes() == fb.scan.points.tobytes()
        assert fa.truth == fb.truth


def test_sensor_below_ground_rejected():
    spec = synthetic.SyntheticSceneSpec(0, sensor=small_sensor(),
                                        trajectory=(SE3Pose.from_euler(0, 0, 0, (0, 0, -0.5)),))
    with pytest.raises(synthetic.SpecError):
        synthetic.generate_synthetic_sequence(spec)
