"""Command line entry point: ``groundlo <verb> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import PipelineConfig, apply_overrides, dump_config, load_config
from .geometry import ConfigurationError
from .io import kitti, synthetic
from .pipeline import (
    PipelineError,
    compare_segmenters,
    ground_summary_lines,
    parse_frame_range,
    run_ground_eval,
    run_odometry,
    synthetic_spec,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundlo", description="Ground-aware LiDAR odometry toolkit.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="configuration file (section.key = value lines)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key, e.g. --set segmenter.kind=ransac")
        p.add_argument("--out", type=Path, help="output directory (default: output.dir)")
        p.add_argument("--frames", help="inclusive frame range A..B")
        p.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
        p.add_argument("--profile", action="store_true", help="write per-stage timing.csv")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("odom", help="run odometry and write trajectory.txt"))
    common(sub.add_parser("ground-eval", help="per-frame ground precision / recall"))
    common(sub.add_parser("compare", help="run every variant.<name> segmenter on the same frames"))
    common(sub.add_parser("gen-synthetic", help="render the configured synthetic scene as a KITTI layout"))
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = []
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        overrides.append((key.strip(), value.strip()))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if args.profile:
        cfg = replace(cfg, output=replace(cfg.output, profile=True))
    if args.out is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=str(args.out)))
    return cfg


def gen_synthetic(cfg: PipelineConfig, out: Path, frames=None) -> int:
    """Write velodyne/, labels/, poses.txt for the configured synthetic scene."""
    spec = synthetic_spec(cfg)
    seq = out / "sequences" / f"{int(cfg.dataset.sequence):02d}"
    (seq / "velodyne").mkdir(parents=True, exist_ok=True)
    (seq / "labels").mkdir(exist_ok=True)
    lines = []
    n = 0
    for sf in synthetic.iter_synthetic_sequence(spec):
        fid = sf.scan.frame_id
        if frames is not None and not frames[0] <= fid <= frames[1]:
            continue
        stem = f"{n:06d}"
        kitti.write_kitti_bin(sf.scan, seq / "velodyne" / f"{stem}.bin")
        # 40 = road, 0 = unlabeled
        kitti.write_semantickitti_labels(sf.truth.mask().astype("u4") * 40, seq / "labels" / f"{stem}.label")
        lines.append(kitti.format_pose_line(sf.pose))
        n += 1
    (seq / "poses.txt").write_text("".join(ln + "\n" for ln in lines))
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        frames = parse_frame_range(args.frames)
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    out = Path(cfg.output.dir)
    try:
        if args.verb == "odom":
            res = run_odometry(cfg, out, frames)
            print("\n".join(res.odometry.lines()))
        elif args.verb == "ground-eval":
            res = run_ground_eval(cfg, out, frames)
            print("\n".join(ground_summary_lines(res.ground)))
        elif args.verb == "compare":
            sys.stdout.write(compare_segmenters(cfg, out, frames).table())
        else:
            n = gen_synthetic(cfg, out, frames)
            print(f"wrote {n} frames to {out}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
