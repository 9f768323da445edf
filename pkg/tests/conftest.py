from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from groundlo.features import FeatureConfig, FeatureSet, compute_smoothness, extract_features
from groundlo.geometry import ProjectionConfig, RangeImage, spherical_project
from groundlo.io import synthetic
from groundlo.segmentation import GroundLabelSet, RegionPlaneConfig, segment_ground


# criterion number -> one-line verdict, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@dataclass
class Processed:
    frame: synthetic.SyntheticFrame
    range_image: RangeImage
    labels: GroundLabelSet
    ground_image: RangeImage
    features: FeatureSet


def process(frame, projection=None, segmenter=None, features=None) -> Processed:
    projection = projection or ProjectionConfig()
    ri = spherical_project(frame.scan, projection)
    labels = segment_ground(segmenter or RegionPlaneConfig(), frame.scan, ri)
    gi = spherical_project(frame.scan, projection, labels.ground_indices)
    fc = features or FeatureConfig()
    fs = extract_features(ri, gi, compute_smoothness(ri, fc), labels, frame.scan, fc)
    return Processed(frame, ri, labels, gi, fs)


@pytest.fixture(scope="session")
def structured_spec():
    return synthetic.structured_scene(synthetic.circular_trajectory(n_frames=3), seed=0)


@pytest.fixture(scope="session")
def structured_frames(structured_spec):
    return synthetic.generate_synthetic_sequence(structured_spec)


@pytest.fixture(scope="session")
def structured(structured_frames) -> Processed:
    return process(structured_frames[0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
