"""Ground-segmentation-swappable LiDAR odometry and its evaluation harness."""

__version__ = "0.1.0"
