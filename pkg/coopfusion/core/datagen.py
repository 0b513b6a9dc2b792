"""
Pseudo-Collaborative Dataset Generation

Synthesizes multi-agent detections from ground truth:

- generate_gt: constant-velocity scenes with stable object ids and a
  minimum center separation at every frame
- perturb: per-agent zero-mean Gaussian noise on position, size and yaw,
  with the generating variances attached as the detection covariance
- make_pseudo_collab: one independent noise stream per agent over the same GT
- load_annotations / save_dataset / load_dataset: JSON-lines ingestion and
  dataset directories with a manifest
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .association import DEFAULT_DELTA_T, window_group
from .model import (
    BBox3D, Category, ConfigurationError, Detection, DiagCovariance7, Frame,
    GenerationError, InvalidInputError, normalize_yaw,
)
from .serialization import read_detections, write_detections

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

MIN_SIZE = 0.1
CONFIDENCE_RANGE = (0.5, 1.0)
MAX_PLACEMENT_RETRIES = 1000

# Nominal (l, w, h) in meters and maximum speed in m/s per category
CATEGORY_PROFILES: Dict[Category, Tuple[Tuple[float, float, float], float]] = {
    Category.CAR: ((4.5, 1.9, 1.7), 10.0),
    Category.TRUCK: ((8.0, 2.5, 3.2), 8.0),
    Category.BUS: ((11.0, 2.9, 3.4), 8.0),
    Category.PEDESTRIAN: ((0.7, 0.7, 1.75), 1.5),
    Category.BICYCLE: ((1.8, 0.6, 1.3), 5.0),
    Category.MOTORCYCLE: ((2.1, 0.8, 1.5), 10.0),
}

CATEGORY_MIX: Dict[Category, float] = {
    Category.CAR: 0.6,
    Category.TRUCK: 0.08,
    Category.BUS: 0.04,
    Category.PEDESTRIAN: 0.18,
    Category.BICYCLE: 0.05,
    Category.MOTORCYCLE: 0.05,
}


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class NoiseConfig:
    """Per-agent noise standard deviations (yaw stored in radians)."""
    std_pos: float
    std_yaw: float
    std_scale: float
    label: str = "custom"

    def __post_init__(self):
        for name in ("std_pos", "std_yaw", "std_scale"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} must be finite and >= 0, got {value}")

    @classmethod
    def from_degrees(cls, std_pos: float, std_yaw_deg: float, std_scale: float,
                     label: str = "custom") -> "NoiseConfig":
        return cls(std_pos, math.radians(std_yaw_deg), std_scale, label)

    @classmethod
    def preset(cls, name: str) -> "NoiseConfig":
        """Named noise level: mild, moderate or large."""
        try:
            std_pos, std_yaw_deg, std_scale = NOISE_PRESETS[name.lower()]
        except KeyError:
            raise ConfigurationError(
                f"Unknown noise preset '{name}' (choose from {', '.join(NOISE_PRESETS)})"
            ) from None
        return cls.from_degrees(std_pos, std_yaw_deg, std_scale, label=name.lower())

    @classmethod
    def parse(cls, value: Union[str, Mapping[str, Any], "NoiseConfig"]) -> "NoiseConfig":
        """Parse a preset name or a {std_pos, std_yaw_deg, std_scale} mapping."""
        if isinstance(value, NoiseConfig):
            return value
        if isinstance(value, str):
            return cls.preset(value)
        try:
            return cls.from_degrees(
                float(value["std_pos"]), float(value["std_yaw_deg"]),
                float(value["std_scale"]), str(value.get("label", "custom")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid noise config {value!r}: {e}") from e

    @property
    def std_yaw_deg(self) -> float:
        return math.degrees(self.std_yaw)

    def covariance(self) -> DiagCovariance7:
        """Generating variances, clamped to the variance floor."""
        return DiagCovariance7.from_std(self.std_pos, self.std_scale, self.std_yaw)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "std_pos": self.std_pos,
            "std_yaw_deg": self.std_yaw_deg,
            "std_scale": self.std_scale,
        }


# (std_pos m, std_yaw deg, std_scale m)
NOISE_PRESETS: Dict[str, Tuple[float, float, float]] = {
    "mild": (0.5, 5.0, 0.1),
    "moderate": (1.5, 20.0, 0.5),
    "large": (3.0, 60.0, 1.0),
}


@dataclass(frozen=True)
class ObjectSpec:
    """Initial state and constant velocity of one ground-truth object."""
    category: Category
    x: float
    y: float
    l: float
    w: float
    h: float
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    z: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "category", Category.parse(self.category))
        if min(self.l, self.w, self.h) <= 0:
            raise InvalidInputError(f"Object sizes must be positive: {(self.l, self.w, self.h)}")

    def position(self, t: float) -> Tuple[float, float, float]:
        z = self.h / 2.0 if self.z is None else self.z
        return self.x + self.vx * t, self.y + self.vy * t, z


@dataclass(frozen=True)
class SceneSpec:
    """
    Synthetic scene description.

    Explicit objects are used as given; otherwise n_objects are sampled
    uniformly over the area with category-plausible sizes and speeds.
    """
    n_frames: int = 20
    frame_rate: float = 2.0
    objects: Tuple[ObjectSpec, ...] = ()
    n_objects: int = 0
    area: Tuple[float, float] = (160.0, 160.0)
    min_separation: float = 8.0
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "area", tuple(float(a) for a in self.area))
        if self.n_frames < 0:
            raise InvalidInputError(f"n_frames must be >= 0, got {self.n_frames}")
        if self.frame_rate <= 0:
            raise InvalidInputError(f"frame_rate must be > 0, got {self.frame_rate}")
        if self.min_separation <= 0:
            raise InvalidInputError(f"min_separation must be > 0, got {self.min_separation}")
        if self.n_objects < 0:
            raise InvalidInputError(f"n_objects must be >= 0, got {self.n_objects}")
        if len(self.area) != 2 or min(self.area) <= 0:
            raise InvalidInputError(f"area must be two positive extents, got {self.area}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) / self.frame_rate

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["objects"] = [
            {**asdict(o), "category": o.category.value} for o in self.objects
        ]
        return data


def _trajectory(obj: ObjectSpec, times: np.ndarray) -> np.ndarray:
    return np.stack([obj.x + obj.vx * times, obj.y + obj.vy * times], axis=1)


def _separated(candidate: np.ndarray, placed: Sequence[np.ndarray], min_separation: float) -> bool:
    if not placed or candidate.size == 0:
        return True
    others = np.stack(placed)
    gaps = np.linalg.norm(others - candidate[None, :, :], axis=-1)
    return bool(gaps.min() >= min_separation)


def _sample_object(rng: np.random.Generator, area: Tuple[float, float]) -> ObjectSpec:
    categories = list(CATEGORY_MIX)
    probs = np.array([CATEGORY_MIX[c] for c in categories])
    category = categories[rng.choice(len(categories), p=probs / probs.sum())]
    (l, w, h), max_speed = CATEGORY_PROFILES[category]
    scale = rng.uniform(0.9, 1.1, size=3)
    heading = normalize_yaw(rng.uniform(-math.pi, math.pi))
    speed = rng.uniform(0.0, max_speed)
    return ObjectSpec(
        category=category,
        x=rng.uniform(-area[0] / 2.0, area[0] / 2.0),
        y=rng.uniform(-area[1] / 2.0, area[1] / 2.0),
        l=l * scale[0], w=w * scale[1], h=h * scale[2],
        theta=heading,
        vx=speed * math.cos(heading),
        vy=speed * math.sin(heading),
    )


def sample_objects(spec: SceneSpec, rng: np.random.Generator) -> Tuple[ObjectSpec, ...]:
    """Rejection-sample spec.n_objects objects respecting min_separation over the whole scene."""
    times = spec.times
    placed: List[np.ndarray] = []
    objects: List[ObjectSpec] = []
    for k in range(spec.n_objects):
        for _ in range(MAX_PLACEMENT_RETRIES):
            obj = _sample_object(rng, spec.area)
            traj = _trajectory(obj, times)
            if _separated(traj, placed, spec.min_separation):
                placed.append(traj)
                objects.append(obj)
                break
        else:
            raise GenerationError(
                f"Could not place object {k + 1}/{spec.n_objects} with separation "
                f"{spec.min_separation} m after {MAX_PLACEMENT_RETRIES} attempts"
            )
    return tuple(objects)


def generate_gt(spec: SceneSpec, seed: SeedLike = None) -> List[Frame]:
    """
    Ground-truth frames of a scene.

    Args:
        spec: Scene description
        seed: Seed for sampling objects (unused with explicit objects)

    Returns:
        One Frame per time step; boxes carry gt_id "<name>/<index>"
    """
    objects = spec.objects
    times = spec.times
    if objects:
        trajectories = [_trajectory(o, times) for o in objects]
        for k, traj in enumerate(trajectories):
            if not _separated(traj, trajectories[:k], spec.min_separation):
                raise GenerationError(
                    f"Object {k} violates min_separation {spec.min_separation} m"
                )
    else:
        objects = sample_objects(spec, _rng(seed))

    gt_cov = DiagCovariance7.from_std(0.0, 0.0, 0.0)
    frames = []
    for t in times:
        detections = []
        for k, obj in enumerate(objects):
            x, y, z = obj.position(float(t))
            detections.append(Detection(
                box=BBox3D(x, y, z, obj.l, obj.w, obj.h, obj.theta),
                cov=gt_cov,
                category=obj.category,
                agent_id=0,
                timestamp=float(t),
                confidence=1.0,
                gt_id=f"{spec.name}/{k:03d}",
            ))
        frames.append(Frame(timestamp=float(t), detections=tuple(detections)))
    logger.debug(f"Generated {len(frames)} frames with {len(objects)} objects for {spec.name}")
    return frames


def perturb(
    gt_frame: Frame,
    agent_id: int,
    nc: NoiseConfig,
    seed: SeedLike = None,
    jitter: float = DEFAULT_DELTA_T,
) -> List[Detection]:
    """
    One agent's noisy view of a ground-truth frame.

    Args:
        gt_frame: Ground-truth boxes
        agent_id: Id stamped on every detection
        nc: Noise standard deviations
        seed: Seed or Generator for the noise draws
        jitter: Full width of the uniform timestamp jitter in seconds

    Returns:
        One detection per GT box, same order, gt_id and category preserved
    """
    rng = _rng(seed)
    n = len(gt_frame)
    pos_noise = rng.normal(0.0, nc.std_pos, size=(n, 3))
    size_noise = rng.normal(0.0, nc.std_scale, size=(n, 3))
    yaw_noise = rng.normal(0.0, nc.std_yaw, size=n)
    confidence = rng.uniform(*CONFIDENCE_RANGE, size=n)
    time_noise = rng.uniform(-jitter / 2.0, jitter / 2.0, size=n)

    cov = nc.covariance()
    detections = []
    for k, gt in enumerate(gt_frame.detections):
        box = gt.box
        center = box.center + pos_noise[k]
        size = np.maximum(box.size + size_noise[k], MIN_SIZE)
        detections.append(Detection(
            box=BBox3D(*center, *size, normalize_yaw(box.theta + yaw_noise[k])),
            cov=cov,
            category=gt.category,
            agent_id=agent_id,
            timestamp=max(0.0, gt.timestamp + float(time_noise[k])),
            confidence=float(confidence[k]),
            gt_id=gt.gt_id,
        ))
    return detections


def sample_sensor_positions(
    agent_ids: Sequence[int],
    rng: np.random.Generator,
    distance_range: Tuple[float, float] = (20.0, 100.0),
    sensor_height: float = 1.8,
) -> Dict[int, Tuple[float, float, float]]:
    """First agent at the origin, the others a random distance and bearing away."""
    positions: Dict[int, Tuple[float, float, float]] = {}
    for k, agent in enumerate(agent_ids):
        if k == 0:
            positions[agent] = (0.0, 0.0, sensor_height)
            continue
        distance = rng.uniform(*distance_range)
        bearing = rng.uniform(-math.pi, math.pi)
        positions[agent] = (distance * math.cos(bearing), distance * math.sin(bearing), sensor_height)
    return positions


@dataclass
class PseudoCollabDataset:
    """Ground truth plus one detection stream per agent."""
    gt: List[Frame]
    streams: Dict[int, List[Detection]]
    noise: Dict[int, NoiseConfig]
    sensor_positions: Dict[int, Tuple[float, float, float]] = field(default_factory=dict)
    spec: Optional[SceneSpec] = None
    seed: Optional[int] = None

    @property
    def agent_ids(self) -> List[int]:
        return sorted(self.streams)

    def detections(self) -> List[Detection]:
        """All agents' detections merged by timestamp (stable, agents ascending)."""
        merged = [d for agent in self.agent_ids for d in self.streams[agent]]
        return sorted(merged, key=lambda d: d.timestamp)

    def windows(self, delta_t: float = DEFAULT_DELTA_T) -> List[Frame]:
        return window_group(self.detections(), delta_t)


def make_pseudo_collab(
    spec: SceneSpec,
    nc_per_agent: Sequence[NoiseConfig],
    seed: Optional[int] = None,
    jitter: float = DEFAULT_DELTA_T,
    sensor_positions: Optional[Mapping[int, Sequence[float]]] = None,
) -> PseudoCollabDataset:
    """
    Build a pseudo-collaborative dataset.

    Agents are numbered 1..N in the order of nc_per_agent. The seed is split
    into independent sub-streams for the GT, the sensor layout and each agent.

    Args:
        spec: Scene description
        nc_per_agent: Noise config per agent (at least one)
        seed: Dataset seed
        jitter: Timestamp jitter width in seconds
        sensor_positions: Fixed sensor positions per agent (sampled when None)

    Returns:
        PseudoCollabDataset
    """
    if len(nc_per_agent) == 0:
        raise InvalidInputError("At least one agent noise config is required")
    children = np.random.SeedSequence(seed).spawn(2 + len(nc_per_agent))
    gt = generate_gt(spec, children[0])

    agent_ids = list(range(1, len(nc_per_agent) + 1))
    if sensor_positions is None:
        sensors = sample_sensor_positions(agent_ids, np.random.default_rng(children[1]))
    else:
        sensors = {int(a): tuple(float(v) for v in p) for a, p in sensor_positions.items()}

    streams: Dict[int, List[Detection]] = {}
    for agent, nc, child in zip(agent_ids, nc_per_agent, children[2:]):
        rng = np.random.default_rng(child)
        streams[agent] = [d for frame in gt for d in perturb(frame, agent, nc, rng, jitter)]

    return PseudoCollabDataset(
        gt=gt,
        streams=streams,
        noise=dict(zip(agent_ids, nc_per_agent)),
        sensor_positions=sensors,
        spec=spec,
        seed=seed,
    )


def frames_from_detections(detections: Sequence[Detection]) -> List[Frame]:
    """Group detections sharing a timestamp into frames sorted by time."""
    by_time: Dict[float, List[Detection]] = {}
    for det in detections:
        by_time.setdefault(det.timestamp, []).append(det)
    return [Frame(timestamp=t, detections=tuple(by_time[t])) for t in sorted(by_time)]


def load_annotations(path: Union[str, Path]) -> List[Frame]:
    """
    Load ground-truth annotations from JSON-lines.

    Args:
        path: File in the detection schema; every record needs gt_id

    Returns:
        Frames sorted by timestamp (empty for an empty file)
    """
    frames = frames_from_detections(read_detections(path, require_gt_id=True))
    logger.info(f"Loaded {sum(len(f) for f in frames)} annotations in {len(frames)} frames from {path}")
    return frames


MANIFEST_NAME = "manifest.json"
GT_FILE = "gt.jsonl"


def save_dataset(dataset: PseudoCollabDataset, out_dir: Union[str, Path]) -> Path:
    """Write gt.jsonl, agent_<id>.jsonl and manifest.json into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_detections(out_dir / GT_FILE, (d for frame in dataset.gt for d in frame.detections))
    files = {"gt": GT_FILE, "agents": {}}
    for agent in dataset.agent_ids:
        name = f"agent_{agent}.jsonl"
        write_detections(out_dir / name, dataset.streams[agent])
        files["agents"][str(agent)] = name

    manifest = {
        "scene_spec": dataset.spec.to_dict() if dataset.spec is not None else None,
        "seed": dataset.seed,
        "noise": {str(a): nc.to_dict() for a, nc in dataset.noise.items()},
        "sensor_positions": {str(a): list(p) for a, p in dataset.sensor_positions.items()},
        "files": files,
    }
    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Dataset written to {out_dir}")
    return manifest_path


def load_dataset(dataset_dir: Union[str, Path]) -> PseudoCollabDataset:
    """Read a dataset directory written by save_dataset."""
    dataset_dir = Path(dataset_dir)
    manifest_path = dataset_dir / MANIFEST_NAME
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read dataset manifest {manifest_path}: {e}") from e

    try:
        files = manifest["files"]
        gt = load_annotations(dataset_dir / files["gt"])
        streams = {
            int(a): read_detections(dataset_dir / name) for a, name in files["agents"].items()
        }
        noise = {
            int(a): NoiseConfig.parse(cfg) for a, cfg in manifest.get("noise", {}).items()
        }
        sensors = {
            int(a): tuple(float(v) for v in p)
            for a, p in (manifest.get("sensor_positions") or {}).items()
        }
    except (KeyError, TypeError, AttributeError) as e:
        raise ConfigurationError(f"Malformed dataset manifest {manifest_path}: {e}") from e
    return PseudoCollabDataset(
        gt=gt, streams=streams, noise=noise, sensor_positions=sensors, seed=manifest.get("seed"),
    )
