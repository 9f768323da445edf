"""Line-oriented pipeline configuration.

Grammar (one assignment per line)::

    # comment
    section.key = value
    variant.<name>.section.key = value   # compare-only overrides

Values are scalars or comma-separated lists; booleans are true/false;
``none`` clears optional integers. Unknown keys and repeated keys are
errors. ``dump_config`` prints every resolved value in the same grammar.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .evaluation import KITTI_SEGMENT_LENGTHS, SEMANTICKITTI_GROUND_CLASSES
from .features import FeatureConfig
from .geometry import ConfigurationError, ProjectionConfig
from .odometry import OdometryConfig
from .segmentation import SEGMENTERS, LineAngleConfig, RansacPlaneConfig, RegionPlaneConfig

SEGMENTER_SECTIONS = ("segmenter", "line_angle", "region_plane", "ransac")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | kitti
    root: str = ""
    sequence: str = "00"
    use_calib: bool = False  # conjugate poses into the LiDAR frame with calib.txt Tr
    scene: str = "structured_circle"  # structured_circle | undulating | wall_room | static | flat
    frames: int = 72
    seed: int = 0
    radius: float = 20.0
    step_deg: float = 5.0
    step: float = 0.37
    amplitude: float = 0.08
    wavelength: float = 2.0
    range_noise: float = 0.0
    max_range: float = 100.0

    def __post_init__(self):
        if self.kind not in ("synthetic", "kitti"):
            raise ConfigurationError(f"dataset.kind must be synthetic or kitti, not {self.kind!r}")
        if self.kind == "kitti" and not self.root:
            raise ConfigurationError("dataset.root is required for kitti datasets")
        if self.scene not in ("structured_circle", "undulating", "wall_room", "static", "flat"):
            raise ConfigurationError(f"unknown synthetic scene {self.scene!r}")
        if self.frames < 0:
            raise ConfigurationError("dataset.frames must be non-negative")


@dataclass(frozen=True)
class SegmenterChoice:
    kind: str = "region_plane"

    def __post_init__(self):
        kinds = [k.strip() for k in self.kind.split(",") if k.strip()]
        if len(kinds) != 1:
            raise ConfigurationError(f"exactly one segmenter must be selected, got {self.kind!r}")
        if kinds[0] not in SEGMENTERS:
            raise ConfigurationError(f"unknown segmenter {kinds[0]!r}; choose from {', '.join(SEGMENTERS)}")
        object.__setattr__(self, "kind", kinds[0])


@dataclass(frozen=True)
class EvaluationConfig:
    segment_lengths: tuple[float, ...] = KITTI_SEGMENT_LENGTHS
    ground_classes: tuple[int, ...] = SEMANTICKITTI_GROUND_CLASSES
    rpe_step: int = 1

    def __post_init__(self):
        object.__setattr__(self, "segment_lengths", tuple(float(v) for v in self.segment_lengths))
        object.__setattr__(self, "ground_classes", tuple(int(v) for v in self.ground_classes))
        if not self.segment_lengths or min(self.segment_lengths) <= 0:
            raise ConfigurationError("segment lengths must be positive")
        if self.rpe_step < 1:
            raise ConfigurationError("rpe_step must be >= 1")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    dump_labels: bool = False
    dump_features: bool = False
    profile: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    segmenter: SegmenterChoice = field(default_factory=SegmenterChoice)
    line_angle: LineAngleConfig = field(default_factory=LineAngleConfig)
    region_plane: RegionPlaneConfig = field(default_factory=RegionPlaneConfig)
    ransac: RansacPlaneConfig = field(default_factory=RansacPlaneConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    odometry: OdometryConfig = field(default_factory=OdometryConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    variants: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = ()

    @property
    def segmenter_config(self):
        return getattr(self, self.segmenter.kind)

    @property
    def segmenter_label(self) -> str:
        return self.segmenter.kind

    def variant_configs(self) -> list[tuple[str, PipelineConfig]]:
        """One resolved config per ``variant.<name>`` block, in declaration order."""
        out = []
        for name, overrides in self.variants:
            try:
                cfg = apply_overrides(replace(self, variants=()), overrides)
            except ConfigurationError as exc:
                raise ConfigurationError(f"variant {name!r}: {exc}") from None
            out.append((name, cfg))
        return out

    def non_segmenter_digest(self) -> str:
        """Hash of every block except the segmenter ones and the variant list."""
        lines = [ln for ln in dump_config(replace(self, variants=())).splitlines()
                 if ln.split(".", 1)[0] not in SEGMENTER_SECTIONS]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(text: str, default, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(f"expected true/false, got {text!r}")
            return low == "true"
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            elem = type(default[0]) if default else float
            return tuple(elem(t) for t in items)
        if default is None:
            return None if text.lower() == "none" else int(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("value must be finite")
            return v
        return text
    except ValueError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def _apply(cfg: PipelineConfig, assignments) -> PipelineConfig:
    """Apply (section, key, text, where) assignments, building each block once."""
    names = {f.name for f in fields(PipelineConfig)} - {"variants"}
    grouped: dict[str, dict] = {}
    wheres: dict[str, str] = {}
    for section, key, text, where in assignments:
        if section not in names:
            raise ConfigurationError(f"{where}: unknown section {section!r}")
        block = getattr(cfg, section)
        if key not in {f.name for f in fields(block)}:
            raise ConfigurationError(f"{where}: unknown key {section}.{key}")
        grouped.setdefault(section, {})[key] = _parse(text, getattr(block, key), where)
        wheres[section] = where
    for section, kwargs in grouped.items():
        try:
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **kwargs)})
        except (ConfigurationError, ValueError, TypeError) as exc:
            raise ConfigurationError(f"{wheres[section]}: [{section}] {exc}") from None
    return cfg


def apply_overrides(cfg: PipelineConfig, overrides) -> PipelineConfig:
    items = []
    for dotted, text in overrides:
        section, _, key = dotted.partition(".")
        items.append((section, key, text, dotted))
    return _apply(cfg, items)


def parse_config(text: str, base: PipelineConfig | None = None, source: str = "<config>") -> PipelineConfig:
    cfg = base or PipelineConfig()
    seen = set()
    variants: dict[str, list[tuple[str, str]]] = {}
    assignments = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigurationError(f"{where}: expected 'section.key = value'")
        lhs, rhs = (s.strip() for s in line.split("=", 1))
        if lhs in seen:
            raise ConfigurationError(f"{where}: {lhs} assigned twice")
        seen.add(lhs)
        parts = lhs.split(".")
        if parts[0] == "variant":
            if len(parts) != 4:
                raise ConfigurationError(f"{where}: expected variant.<name>.<section>.<key>")
            if parts[2] not in SEGMENTER_SECTIONS:
                raise ConfigurationError(f"{where}: variants may only override segmenter sections")
            variants.setdefault(parts[1], []).append((f"{parts[2]}.{parts[3]}", rhs))
            continue
        if len(parts) != 2:
            raise ConfigurationError(f"{where}: expected 'section.key = value'")
        assignments.append((parts[0], parts[1], rhs, where))
    cfg = _apply(cfg, assignments)
    if variants:
        cfg = replace(cfg, variants=tuple((k, tuple(v)) for k, v in variants.items()))
        cfg.variant_configs()  # validate every block now
    return cfg


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text(), source=str(path))


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        if f.name == "variants":
            continue
        block = getattr(cfg, f.name)
        for bf in fields(block):
            lines.append(f"{f.name}.{bf.name} = {_format(getattr(block, bf.name))}")
    for name, overrides in cfg.variants:
        for key, value in overrides:
            lines.append(f"variant.{name}.{key} = {value}")
    return "\n".join(lines) + "\n"


def config_with(cfg: PipelineConfig, **blocks) -> PipelineConfig:
    """Replace whole blocks, or individual keys given as ``section__key=value``."""
    for name, value in blocks.items():
        if "__" in name:
            section, key = name.split("__", 1)
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **{key: value})})
        else:
            cfg = replace(cfg, **{name: value})
    return cfg


__all__ = [
    "DatasetConfig",
    "EvaluationConfig",
    "OutputConfig",
    "PipelineConfig",
    "SegmenterChoice",
    "apply_overrides",
    "config_with",
    "dump_config",
    "load_config",
    "parse_config",
]
