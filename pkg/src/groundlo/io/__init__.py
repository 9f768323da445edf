from .kitti import (
    DatasetLayout,
    FormatError,
    dataset_available,
    read_calib_tr,
    read_kitti_bin,
    read_kitti_poses,
    read_label_dump,
    read_semantickitti_labels,
    write_kitti_bin,
    write_label_dump,
    write_semantickitti_labels,
    write_trajectory_kitti,
)
from .synthetic import (
    Box,
    GroundModel,
    Pole,
    SensorModel,
    SpecError,
    SyntheticFrame,
    SyntheticSceneSpec,
    Wall,
    circular_trajectory,
    generate_synthetic_sequence,
    iter_synthetic_sequence,
    relative_truth,
    render_frame,
    straight_trajectory,
    structured_scene,
    undulating_scene,
    wall_room_scene,
)
