"""
Experiment Configuration

Loads and validates the JSON experiment file describing the benchmark grid:
synthetic scene parameters, per-agent noise rows, methods, thresholds,
CSBA parameters, FP penalties and output options. Every key except
`methods` is optional.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

from ..core.association import CsbaParams, DEFAULT_DELTA_T
from ..core.datagen import NoiseConfig
from ..core.metrics import FpPenalties
from ..core.model import ConfigurationError, CoopFusionError

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("csv", "md", "json")
LAMBDA_RULES = ("pair", "agent")

DEFAULT_NOISE_ROWS: Tuple[Tuple[str, ...], ...] = (
    ("mild", "mild"),
    ("moderate", "moderate"),
    ("large", "large"),
    ("mild", "large"),
)


@dataclass(frozen=True)
class Thresholds:
    """Baseline thresholds."""
    iou: float = 0.5
    giou: float = 0.0
    dist: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.iou <= 1.0:
            raise ConfigurationError(f"thresholds.iou must be in [0, 1], got {self.iou}")
        if not -1.0 <= self.giou <= 1.0:
            raise ConfigurationError(f"thresholds.giou must be in [-1, 1], got {self.giou}")
        if not self.dist > 0:
            raise ConfigurationError(f"thresholds.dist must be > 0, got {self.dist}")


@dataclass(frozen=True)
class CsbaSettings:
    """CSBA weights plus the rule for lambda_max."""
    w_ds: float = 0.2
    w_cs: float = 0.5
    w_os: float = 0.3
    lambda_max: Optional[float] = None
    lambda_scale: float = 6.0
    lambda_rule: str = "pair"
    cost_gate: Optional[float] = None

    def __post_init__(self):
        if not self.lambda_scale > 0:
            raise ConfigurationError(f"csba.lambda_scale must be > 0, got {self.lambda_scale}")
        if self.lambda_rule not in LAMBDA_RULES:
            raise ConfigurationError(
                f"csba.lambda_rule must be one of {LAMBDA_RULES}, got {self.lambda_rule!r}"
            )

    def for_row(self, row: Sequence[NoiseConfig]) -> CsbaParams:
        """
        CSBA parameters for one noise row.

        Without an explicit lambda_max, lambda_max = lambda_scale x a
        position standard deviation read from the row. The "pair" rule uses
        the std of the difference between the two noisiest agents' centers;
        the "agent" rule uses the largest single-agent std.
        """
        lam = self.lambda_max
        if lam is None:
            std = pair_position_std(row) if self.lambda_rule == "pair" else agent_position_std(row)
            lam = self.lambda_scale * std
        try:
            return CsbaParams(self.w_ds, self.w_cs, self.w_os, lam, self.cost_gate)
        except CoopFusionError as e:
            raise ConfigurationError(f"Invalid CSBA parameters: {e}") from e


def pair_position_std(row: Sequence[NoiseConfig]) -> float:
    """sqrt(s1^2 + s2^2) over the two largest per-agent position stds (floored)."""
    stds = sorted((max(nc.std_pos, 1e-3) for nc in row), reverse=True)
    if len(stds) == 1:
        stds = stds * 2
    return math.sqrt(stds[0] ** 2 + stds[1] ** 2)


def agent_position_std(row: Sequence[NoiseConfig]) -> float:
    """Largest per-agent position std (floored)."""
    return max(max(nc.std_pos, 1e-3) for nc in row)


@dataclass(frozen=True)
class NoiseRow:
    """One row of the result table: a noise config per agent."""
    agents: Tuple[NoiseConfig, ...]

    @property
    def label(self) -> str:
        labels = [nc.label for nc in self.agents]
        if len(set(labels)) == 1:
            return labels[0]
        return "+".join(labels)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description."""
    methods: Tuple[str, ...]
    name: str = "experiment"
    seed: int = 0
    scenes: int = 150
    frames_per_scene: int = 20
    objects_min: int = 10
    objects_max: int = 40
    frame_rate: float = 2.0
    area: Tuple[float, float] = (160.0, 160.0)
    min_separation: float = 8.0
    delta_t: float = DEFAULT_DELTA_T
    noise_rows: Tuple[NoiseRow, ...] = field(
        default_factory=lambda: tuple(
            NoiseRow(tuple(NoiseConfig.preset(n) for n in row)) for row in DEFAULT_NOISE_ROWS
        )
    )
    gt_assoc: bool = False
    thresholds: Thresholds = field(default_factory=Thresholds)
    csba: CsbaSettings = field(default_factory=CsbaSettings)
    fp_penalties: Dict[str, Optional[float]] = field(
        default_factory=lambda: {"translation": None, "scale": 1.0, "orientation_deg": 90.0}
    )
    sensor_positions: Optional[Dict[int, Tuple[float, float, float]]] = None
    output_dir: str = "results"
    formats: Tuple[str, ...] = ("csv", "md")
    workers: int = 1
    dataset_dir: Optional[str] = None
    fused_dir: Optional[str] = None

    def __post_init__(self):
        """Validate ranges and cross-field constraints."""
        if not self.methods:
            raise ConfigurationError("At least one method is required")
        if self.scenes < 1 or self.frames_per_scene < 1:
            raise ConfigurationError("scenes and frames_per_scene must be >= 1")
        if self.objects_min < 0 or self.objects_max < self.objects_min:
            raise ConfigurationError(
                f"Invalid object range [{self.objects_min}, {self.objects_max}]"
            )
        if self.frame_rate <= 0 or self.delta_t <= 0 or self.min_separation <= 0:
            raise ConfigurationError("frame_rate, delta_t and min_separation must be > 0")
        if self.delta_t >= 1.0 / self.frame_rate:
            raise ConfigurationError(
                f"delta_t {self.delta_t} s must be shorter than the frame period {1.0 / self.frame_rate} s"
            )
        if not self.noise_rows:
            raise ConfigurationError("At least one noise row is required")
        unknown = [f for f in self.formats if f not in OUTPUT_FORMATS]
        if unknown:
            raise ConfigurationError(f"Unknown output formats: {unknown}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")

    def penalties_for(self, params: CsbaParams) -> FpPenalties:
        """FP penalties for a cell; the translation penalty defaults to the cell's lambda_max."""
        translation = self.fp_penalties.get("translation")
        try:
            return FpPenalties(
                translation=params.lambda_max if translation is None else float(translation),
                scale=float(self.fp_penalties.get("scale", 1.0)),
                orientation_deg=float(self.fp_penalties.get("orientation_deg", 90.0)),
            )
        except CoopFusionError as e:
            raise ConfigurationError(f"Invalid fp_penalties: {e}") from e

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with non-None overrides applied (CLI flags)."""
        values = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **values) if values else self


def _parse_row(value: Union[str, Sequence[Any]]) -> NoiseRow:
    if isinstance(value, str):
        nc = NoiseConfig.parse(value)
        return NoiseRow((nc, nc))
    if isinstance(value, Mapping):
        nc = NoiseConfig.parse(value)
        return NoiseRow((nc, nc))
    agents = tuple(NoiseConfig.parse(v) for v in value)
    if not agents:
        raise ConfigurationError("A noise row needs at least one agent")
    return NoiseRow(agents)


def _parse_sensor_positions(value: Mapping[str, Any]) -> Dict[int, Tuple[float, float, float]]:
    positions = {}
    for agent, pos in value.items():
        coords = tuple(float(v) for v in pos)
        if len(coords) == 2:
            coords = coords + (0.0,)
        if len(coords) != 3:
            raise ConfigurationError(f"Sensor position of agent {agent} must have 2 or 3 values")
        positions[int(agent)] = coords
    return positions


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """
    Build an ExperimentConfig from parsed JSON.

    Args:
        data: Mapping with the experiment keys

    Returns:
        Validated ExperimentConfig
    """
    if not isinstance(data, Mapping):
        raise ConfigurationError("Experiment config must be a JSON object")
    if "methods" not in data:
        raise ConfigurationError("Experiment config must list methods")

    from .runner import resolve_method

    methods = tuple(str(m) for m in data["methods"])
    for method in methods:
        resolve_method(method)

    kwargs: Dict[str, Any] = {"methods": methods}
    try:
        for key, cast in (
            ("name", str), ("seed", int), ("scenes", int), ("frames_per_scene", int),
            ("objects_min", int), ("objects_max", int), ("frame_rate", float),
            ("min_separation", float), ("delta_t", float), ("gt_assoc", bool),
            ("output_dir", str), ("workers", int), ("dataset_dir", str), ("fused_dir", str),
        ):
            if data.get(key) is not None:
                kwargs[key] = cast(data[key])
        if "area" in data:
            area = data["area"]
            kwargs["area"] = (float(area), float(area)) if isinstance(area, (int, float)) else tuple(
                float(a) for a in area
            )
        if "noise_rows" in data:
            kwargs["noise_rows"] = tuple(_parse_row(row) for row in data["noise_rows"])
        if "thresholds" in data:
            kwargs["thresholds"] = Thresholds(**{k: float(v) for k, v in data["thresholds"].items()})
        if "csba" in data:
            kwargs["csba"] = CsbaSettings(**{
                k: (v if v is None or k == "lambda_rule" else float(v))
                for k, v in data["csba"].items()
            })
        if "fp_penalties" in data:
            penalties = {"translation": None, "scale": 1.0, "orientation_deg": 90.0}
            penalties.update(data["fp_penalties"])
            kwargs["fp_penalties"] = penalties
        if data.get("sensor_positions") is not None:
            kwargs["sensor_positions"] = _parse_sensor_positions(data["sensor_positions"])
        if "formats" in data:
            kwargs["formats"] = tuple(str(f) for f in data["formats"])
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Invalid experiment config: {e}") from e

    return ExperimentConfig(**kwargs)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment config file.

    Args:
        path: JSON file

    Returns:
        Validated ExperimentConfig
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid JSON in {path} line {e.lineno}: {e.msg}") from e
    config = config_from_dict(data)
    logger.info(f"Loaded experiment '{config.name}' from {path}: "
                f"{len(config.noise_rows)} noise rows x {len(config.methods)} methods")
    return config
