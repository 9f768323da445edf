import numpy as np
import pytest

from groundlo.features import (
    FeatureConfig,
    FeatureSet,
    candidate_cells,
    compute_smoothness,
    extract_features,
    occlusion_mask,
)
from groundlo.geometry import ConfigurationError, ProjectionConfig, RangeImage, SE3Pose, spherical_project
from groundlo.io import synthetic
from groundlo.segmentation import GroundLabelSet

from conftest import process


def row_image(values):
    values = np.asarray(values, dtype=float)
    r = np.vstack([values, values])
    idx = np.where(np.isnan(r), -1, np.arange(r.size).reshape(r.shape))
    return RangeImage(r, idx, ProjectionConfig(rows=2, cols=len(values)))


def test_constant_row_is_smooth():
    c = compute_smoothness(row_image([10.0] * 20), FeatureConfig()).values
    np.testing.assert_array_equal(c[0, 5:15], 0.0)
    assert np.isnan(c[0, :5]).all() and np.isnan(c[0, 15:]).all()


def test_step_smoothness_hand_value():
    c = compute_smoothness(row_image([10] * 6 + [20] * 5), FeatureConfig()).values
    assert c[0, 5] == pytest.approx(0.5, abs=1e-15)


def test_window_touching_empty_is_undefined():
    vals = [10.0] * 20
    vals[8] = np.nan
    m = compute_smoothness(row_image(vals), FeatureConfig())
    assert not m.defined[0, 3:14].any()
    assert m.defined[0, 14]


def test_brute_force_smoothness(rng):
    vals = rng.uniform(2, 30, 60)
    vals[rng.choice(60, 5, replace=False)] = np.nan
    c = compute_smoothness(row_image(vals), FeatureConfig()).values[0]
    for i in range(60):
        window = vals[i - 5:i + 6] if 5 <= i < 55 else None
        if window is None or np.isnan(window).any():
            assert np.isnan(c[i])
        else:
            ref = abs(sum(window[j] - vals[i] for j in range(11) if j != 5)) / (10 * vals[i])
            assert c[i] == pytest.approx(ref, rel=1e-12)


def test_occlusion_marks_far_side():
    m = occlusion_mask(np.array([[5.0] * 10 + [20.0] * 10, [5.0] * 20]), FeatureConfig())
    assert m[0].tolist() == [False] * 10 + [True] * 5 + [False] * 5
    assert not m[1].any()


@pytest.mark.parametrize("kw", [dict(planar_threshold=0.2, edge_threshold=0.1), dict(max_edge_per_sector=0),
                                dict(occlusion_ratio=1.0)])
def test_feature_config_validation(kw):
    with pytest.raises(ConfigurationError):
        FeatureConfig(**kw)


def test_all_empty_image_gives_empty_features():
    cfg = ProjectionConfig()
    ri = RangeImage(np.full((cfg.rows, cfg.cols), np.nan), np.full((cfg.rows, cfg.cols), -1), cfg)
    from groundlo.geometry import Scan

    fs = extract_features(ri, ri, compute_smoothness(ri, FeatureConfig()), GroundLabelSet.empty(0),
                          Scan(np.empty((0, 3))), FeatureConfig())
    assert len(fs.edge_points) == 0 and len(fs.planar_points) == 0


@pytest.fixture(scope="module")
def flat_and_pole():
    # range capped inside the polar grid; pole kept off the azimuth seam (no wraparound)
    sensor = synthetic.SensorModel(max_range=79.0)
    spec = synthetic.SyntheticSceneSpec(
        0, synthetic.GroundModel(), poles=(synthetic.Pole(6.0, 5.0, radius=0.1),), sensor=sensor,
        trajectory=(SE3Pose.from_euler(0, 0, 0, (0, 0, 1.73)),))
    flat = synthetic.SyntheticSceneSpec(0, synthetic.GroundModel(), sensor=sensor, trajectory=spec.trajectory)
    return (process(synthetic.generate_synthetic_sequence(flat)[0]),
            process(synthetic.generate_synthetic_sequence(spec)[0]))


def test_flat_world_has_only_ground_planar(flat_and_pole):
    flat, _ = flat_and_pole
    assert len(flat.labels) == len(flat.frame.scan)
    fs = flat.features
    assert len(fs.edge_points) == 0
    assert len(fs.planar_points) > 0 and fs.planar_is_ground.all()


def test_pole_edges_sit_at_pole_columns(flat_and_pole):
    _, pole = flat_and_pole
    fs = pole.features
    assert len(fs.edge_points) > 0
    surface = pole.frame.surface
    pole_cols = np.unique(np.nonzero((surface[np.maximum(pole.range_image.index, 0)] == 0)
                                     & pole.range_image.occupied)[1])
    assert np.all(surface[fs.edge_index] == 0)
    assert set(fs.edge_cells[:, 1].tolist()) <= set(pole_cols.tolist())


def test_empty_ground_image_gives_nonground_planar(structured):
    scan = structured.frame.scan
    none = GroundLabelSet.empty(len(scan))
    empty_gi = spherical_project(scan, ProjectionConfig(), subset=[])
    ri = structured.range_image
    fs = extract_features(ri, empty_gi, compute_smoothness(ri, FeatureConfig()), none, scan, FeatureConfig())
    assert len(fs.planar_points) > 0 and not fs.planar_is_ground.any()


def test_feature_invariants(structured):
    fs, labels, cfg = structured.features, structured.labels, FeatureConfig()
    cells = [tuple(c) for c in fs.edge_cells] + [tuple(c) for c in fs.planar_cells]
    assert len(set(cells)) == len(cells)
    ground = labels.mask()
    assert not ground[fs.edge_index].any()
    assert ground[fs.planar_index[fs.planar_is_ground]].all()
    bounds = np.linspace(0, ProjectionConfig().cols, cfg.sectors_per_row + 1).astype(int)
    sector = lambda c: np.searchsorted(bounds, c, side="right") - 1
    for kind, arr, cap in (("edge", fs.edge_cells, cfg.max_edge_per_sector),
                           ("planar", fs.planar_cells, 2 * cfg.max_planar_per_sector)):
        keys, counts = np.unique(np.column_stack([arr[:, 0], sector(arr[:, 1])]), axis=0, return_counts=True)
        assert counts.max() <= cap, kind
    # neighbour suppression inside a row
    for row in np.unique(np.array(cells)[:, 0]):
        cols = np.sort([c for r, c in cells if r == row])
        assert np.all(np.diff(cols) > cfg.window_half_width)


def test_features_deterministic(structured):
    again = process(structured.frame)
    for name in ("edge_index", "planar_index", "planar_is_ground"):
        assert np.array_equal(getattr(again.features, name), getattr(structured.features, name))


def test_enlarging_ground_shrinks_edge_candidates(structured, rng):
    ri, scan = structured.range_image, structured.frame.scan
    cfg = FeatureConfig()
    sm = compute_smoothness(ri, cfg)
    small = structured.labels
    extra = rng.choice(len(scan), 20000, replace=False)
    big = GroundLabelSet(np.union1d(small.ground_indices, extra), len(scan))
    edge_ok = lambda lab: candidate_cells(ri, spherical_project(scan, ProjectionConfig(), lab.ground_indices),
                                          sm, lab, cfg)[0] & (np.nan_to_num(sm.values) > cfg.edge_threshold)
    a, b = edge_ok(small), edge_ok(big)
    assert not (b & ~a).any()
    assert b.sum() < a.sum()


def test_feature_dump_and_transform():
    fs = FeatureSet.from_points([[1, 2, 3]], [[0, 0, -1.5], [4, 5, 6]], [True, False])
    assert fs.dump_lines() == ["E 1 2 3", "P 1 0 0 -1.5", "P 0 4 5 6"]
    moved = fs.transformed(SE3Pose.from_euler(0, 0, 0, (1, 0, 0)))
    np.testing.assert_allclose(moved.edge_points, [[2, 2, 3]])
    np.testing.assert_allclose(moved.ground_planar, [[1, 0, -1.5]])
