"""
Data Models for Collaborative 3D Object Fusion

Defines the immutable value types shared by every module: oriented boxes,
diagonal covariances, per-agent detections, fused objects and frames,
plus the package exception hierarchy.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np


# Smallest variance accepted by the clamping constructors (in each unit's natural scale)
VARIANCE_FLOOR = 1e-9


class CoopFusionError(Exception):
    """Base exception for the coopfusion package."""
    pass


class InvalidInputError(CoopFusionError, ValueError):
    """Raised when an operation receives input violating its preconditions."""
    pass


class AnnotationParseError(CoopFusionError):
    """Raised when a JSON-lines file cannot be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{location}{message}")


class GenerationError(CoopFusionError):
    """Raised when a synthetic scene cannot satisfy its constraints."""
    pass


class ConfigurationError(CoopFusionError):
    """Raised for invalid experiment configuration."""
    pass


class OutOfScopeError(ConfigurationError):
    """Raised when a method is known but deliberately not implemented."""
    pass


class Category(Enum):
    """Object categories; association never crosses categories."""
    CAR = "car"
    TRUCK = "truck"
    BUS = "bus"
    PEDESTRIAN = "pedestrian"
    BICYCLE = "bicycle"
    MOTORCYCLE = "motorcycle"
    OTHER = "other"

    @classmethod
    def parse(cls, value) -> "Category":
        """Parse a category from its label, mapping unknown labels to OTHER."""
        if isinstance(value, Category):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            return cls.OTHER


def normalize_yaw(theta: float) -> float:
    """
    Wrap an angle into (-pi, pi].

    Args:
        theta: Angle in radians (finite)

    Returns:
        Congruent angle in (-pi, pi]
    """
    if not math.isfinite(theta):
        raise InvalidInputError(f"Yaw must be finite, got {theta}")
    wrapped = theta - 2.0 * math.pi * math.floor((theta + math.pi) / (2.0 * math.pi))
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def yaw_difference(a: float, b: float) -> float:
    """Minimal signed difference a - b, wrapped into (-pi, pi]."""
    return normalize_yaw(a - b)


@dataclass(frozen=True)
class BBox3D:
    """7-DoF oriented box: center (x, y, z), size (l, w, h) and yaw theta."""
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        """Validate the box and normalize its yaw."""
        values = (self.x, self.y, self.z, self.l, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError(f"Box fields must be finite: {values}")
        if self.l <= 0 or self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"Box sizes must be positive: l={self.l}, w={self.w}, h={self.h}")
        object.__setattr__(self, "theta", normalize_yaw(self.theta))

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "BBox3D":
        """Create a box from a 7-element (x, y, z, l, w, h, theta) sequence."""
        v = [float(x) for x in values]
        if len(v) != 7:
            raise InvalidInputError(f"Expected 7 box values, got {len(v)}")
        return cls(*v)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.l, self.w, self.h, self.theta])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def size(self) -> np.ndarray:
        return np.array([self.l, self.w, self.h])

    @property
    def volume(self) -> float:
        return box_volume(self)

    @property
    def z_min(self) -> float:
        return self.z - self.h / 2.0

    @property
    def z_max(self) -> float:
        return self.z + self.h / 2.0


def box_volume(b: BBox3D) -> float:
    """Volume l*w*h of a box in cubic meters."""
    return b.l * b.w * b.h


COVARIANCE_FIELDS = ("var_x", "var_y", "var_z", "var_l", "var_w", "var_h", "var_theta")


@dataclass(frozen=True)
class DiagCovariance7:
    """Diagonal covariance of a BBox3D state (m^2 for position/size, rad^2 for yaw)."""
    var_x: float
    var_y: float
    var_z: float
    var_l: float
    var_w: float
    var_h: float
    var_theta: float

    def __post_init__(self):
        """Reject zero, negative and non-finite variances."""
        for name in COVARIANCE_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidInputError(f"{name} must be finite and > 0, got {value}")

    @classmethod
    def from_array(cls, values: Iterable[float], clamp: bool = False) -> "DiagCovariance7":
        """
        Create a covariance from 7 variances.

        Args:
            values: Variances in (x, y, z, l, w, h, theta) order
            clamp: Raise values below VARIANCE_FLOOR to the floor instead of rejecting them
        """
        v = [float(x) for x in values]
        if len(v) != 7:
            raise InvalidInputError(f"Expected 7 variances, got {len(v)}")
        if clamp:
            v = [max(x, VARIANCE_FLOOR) if math.isfinite(x) else x for x in v]
        return cls(*v)

    @classmethod
    def from_std(cls, std_pos: float, std_size: float, std_yaw: float) -> "DiagCovariance7":
        """Isotropic-per-group covariance from standard deviations, clamped to the floor."""
        return cls.from_array(
            [std_pos ** 2] * 3 + [std_size ** 2] * 3 + [std_yaw ** 2], clamp=True
        )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in COVARIANCE_FIELDS])

    def position_block(self) -> np.ndarray:
        """3x3 covariance of the box center."""
        return np.diag([self.var_x, self.var_y, self.var_z])

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.as_array())


@dataclass(frozen=True)
class Detection:
    """A single agent's detection of one object at one time."""
    box: BBox3D
    cov: DiagCovariance7
    category: Category = Category.CAR
    agent_id: int = 0
    timestamp: float = 0.0
    confidence: float = 1.0
    gt_id: Optional[str] = None

    def __post_init__(self):
        """Validate confidence and timestamp."""
        object.__setattr__(self, "category", Category.parse(self.category))
        if not (0.0 <= self.confidence <= 1.0):
            raise InvalidInputError(f"Confidence must be in [0, 1], got {self.confidence}")
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise InvalidInputError(f"Timestamp must be finite and non-negative, got {self.timestamp}")


@dataclass(frozen=True)
class FusedObject:
    """Fused state of one object with its covariance and provenance."""
    box: BBox3D
    cov: DiagCovariance7
    category: Category
    sources: Tuple[Tuple[int, int], ...]
    timestamp: float
    confidence: float = 1.0
    gt_ids: Tuple[Optional[str], ...] = ()

    def __post_init__(self):
        if not self.sources:
            raise InvalidInputError("FusedObject requires at least one source")
        object.__setattr__(self, "category", Category.parse(self.category))
        object.__setattr__(self, "sources", tuple(tuple(s) for s in self.sources))
        object.__setattr__(self, "gt_ids", tuple(self.gt_ids))

    @classmethod
    def from_detection(cls, det: Detection, index: int = 0) -> "FusedObject":
        """Wrap a single detection unchanged (the singleton pass-through)."""
        return cls(
            box=det.box,
            cov=det.cov,
            category=det.category,
            sources=((det.agent_id, index),),
            timestamp=det.timestamp,
            confidence=det.confidence,
            gt_ids=(det.gt_id,),
        )

    def as_detection(self, agent_id: int = -1) -> Detection:
        """View this fused object as a detection, e.g. as a chaining representative."""
        return Detection(
            box=self.box,
            cov=self.cov,
            category=self.category,
            agent_id=agent_id,
            timestamp=self.timestamp,
            confidence=self.confidence,
        )


@dataclass(frozen=True)
class Frame:
    """Detections aggregated for one fusion step."""
    timestamp: float
    detections: Tuple[Detection, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))

    @property
    def agents(self) -> List[int]:
        return sorted({d.agent_id for d in self.detections})

    def by_agent(self) -> Dict[int, List[Detection]]:
        """Detections grouped per agent, agents in ascending id order."""
        groups: Dict[int, List[Detection]] = defaultdict(list)
        for det in self.detections:
            groups[det.agent_id].append(det)
        return {agent: groups[agent] for agent in sorted(groups)}

    def __len__(self) -> int:
        return len(self.detections)
