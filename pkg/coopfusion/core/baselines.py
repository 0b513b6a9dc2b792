"""
Baseline Late-Fusion Methods

Comparison methods operating on the detections of all agents pooled in one
frame:

- nms_std_3d: greedy NMS with 3D IoU suppression
- nms_giou_3d: greedy NMS with 3D GIoU suppression
- wbf_3d: weighted box fusion with confidence-weighted means
- late_closest_to_sensor: distance association, keep the box nearer its sensor
- late_average: distance association, unweighted mean of the associated boxes

All methods are category-preserving and never emit more objects than they
receive.
"""

import logging
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .assignment import CostMatrix, solve_assignment
from .fusion import rebased_weighted_mean
from .geometry import giou_3d, iou_3d
from .model import (
    BBox3D, ConfigurationError, Detection, DiagCovariance7, FusedObject,
)

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESH = 0.5
DEFAULT_GIOU_THRESH = 0.0
DEFAULT_DIST_THRESH = 3.0

Overlap = Callable[[BBox3D, BBox3D], float]
SensorPositions = Mapping[int, Sequence[float]]


def _source_indices(dets: Sequence[Detection]) -> List[int]:
    """Index of every detection within its own agent's list."""
    counters: Dict[int, int] = {}
    indices = []
    for det in dets:
        indices.append(counters.get(det.agent_id, 0))
        counters[det.agent_id] = indices[-1] + 1
    return indices


def _may_overlap(a: BBox3D, b: BBox3D) -> bool:
    """False only when the BEV circumscribed circles or the height ranges are disjoint."""
    if a.z_max <= b.z_min or b.z_max <= a.z_min:
        return False
    reach = 0.5 * (np.hypot(a.l, a.w) + np.hypot(b.l, b.w))
    return (a.x - b.x) ** 2 + (a.y - b.y) ** 2 <= reach ** 2


def _greedy_nms(
    dets: Sequence[Detection], overlap: Overlap, thresh: float, skip_disjoint: bool
) -> List[FusedObject]:
    indices = _source_indices(dets)
    order = sorted(range(len(dets)), key=lambda k: -dets[k].confidence)
    suppressed = [False] * len(dets)
    kept: List[FusedObject] = []
    for pos, k in enumerate(order):
        if suppressed[k]:
            continue
        top = dets[k]
        kept.append(FusedObject.from_detection(top, indices[k]))
        for other in order[pos + 1:]:
            if suppressed[other] or dets[other].category != top.category:
                continue
            if skip_disjoint and not _may_overlap(top.box, dets[other].box):
                continue
            if overlap(top.box, dets[other].box) >= thresh:
                suppressed[other] = True
    return kept


def nms_std_3d(dets: Sequence[Detection], iou_thresh: float = DEFAULT_IOU_THRESH) -> List[FusedObject]:
    """
    Standard greedy NMS with 3D IoU.

    Args:
        dets: Detections of all agents in one frame
        iou_thresh: Suppress same-category boxes with IoU >= this value

    Returns:
        Kept detections as FusedObjects, highest confidence first
    """
    # Disjoint boxes have IoU 0, which only a zero threshold suppresses
    return _greedy_nms(dets, iou_3d, iou_thresh, skip_disjoint=iou_thresh > 0)


def nms_giou_3d(dets: Sequence[Detection], giou_thresh: float = DEFAULT_GIOU_THRESH) -> List[FusedObject]:
    """Greedy NMS with 3D GIoU; giou_thresh may be negative."""
    # Disjoint boxes have strictly negative GIoU
    return _greedy_nms(dets, giou_3d, giou_thresh, skip_disjoint=giou_thresh >= 0)


def wbf_3d(dets: Sequence[Detection], iou_thresh: float = DEFAULT_IOU_THRESH) -> List[FusedObject]:
    """
    Weighted box fusion.

    Boxes are visited by descending confidence and join the same-category
    cluster whose founding box overlaps them most (IoU >= iou_thresh).
    Each cluster becomes the confidence-weighted mean of its members with
    the mean member confidence.
    """
    indices = _source_indices(dets)
    order = sorted(range(len(dets)), key=lambda k: -dets[k].confidence)
    clusters: List[List[int]] = []
    for k in order:
        box = dets[k].box
        best, best_iou = None, -1.0
        for ci, members in enumerate(clusters):
            founder = dets[members[0]]
            if founder.category != dets[k].category:
                continue
            if iou_thresh > 0 and not _may_overlap(founder.box, box):
                continue
            iou = iou_3d(founder.box, box)
            if iou >= iou_thresh and iou > best_iou:
                best, best_iou = ci, iou
        if best is None:
            clusters.append([k])
        else:
            clusters[best].append(k)

    fused = []
    for members in clusters:
        group = [dets[k] for k in members]
        if len(group) == 1:
            fused.append(FusedObject.from_detection(group[0], indices[members[0]]))
            continue
        confidences = np.array([d.confidence for d in group])
        box = rebased_weighted_mean(np.array([d.box.as_array() for d in group]), confidences)
        variances = np.array([d.cov.as_array() for d in group])
        fused.append(FusedObject(
            box=BBox3D.from_array(box),
            cov=DiagCovariance7.from_array(np.average(variances, axis=0, weights=confidences)),
            category=group[0].category,
            sources=tuple((d.agent_id, indices[k]) for d, k in zip(group, members)),
            timestamp=float(np.mean([d.timestamp for d in group])),
            confidence=float(confidences.mean()),
            gt_ids=tuple(d.gt_id for d in group),
        ))
    return fused


def _distance_groups(
    dets: Sequence[Detection],
    dist_thresh: float,
    representative: Callable[[List[int]], np.ndarray],
) -> List[List[int]]:
    """
    Chain agents in ascending id order, associating each agent's detections
    to the existing groups by center distance (<= dist_thresh, same category).
    """
    per_agent: Dict[int, List[int]] = {}
    for k, det in enumerate(dets):
        per_agent.setdefault(det.agent_id, []).append(k)

    groups: List[List[int]] = []
    for agent in sorted(per_agent):
        members = per_agent[agent]
        if not groups:
            groups = [[k] for k in members]
            continue
        reps = np.array([representative(g) for g in groups])
        centers = np.array([dets[k].box.center for k in members])
        dist = np.linalg.norm(reps[:, None, :] - centers[None, :, :], axis=-1)
        same_category = np.array(
            [[dets[g[0]].category == dets[k].category for k in members] for g in groups]
        )
        forbidden = (dist > dist_thresh) | ~same_category
        result = solve_assignment(CostMatrix(np.where(forbidden, 0.0, dist), forbidden))
        for gi, mj in result.matches:
            groups[gi].append(members[mj])
        for mj in result.unmatched_cols:
            groups.append([members[mj]])
    return groups


def late_closest_to_sensor(
    dets: Sequence[Detection],
    dist_thresh: float = DEFAULT_DIST_THRESH,
    sensor_positions: Optional[SensorPositions] = None,
) -> List[FusedObject]:
    """
    Keep the associated box closest to its own agent's sensor.

    Args:
        dets: Detections of all agents in one frame
        dist_thresh: Maximum center distance for association in meters
        sensor_positions: Sensor (x, y, z) per agent id

    Returns:
        One kept detection per group
    """
    agents = sorted({d.agent_id for d in dets})
    sensors: Dict[int, np.ndarray] = {}
    if len(agents) > 1:
        missing = [a for a in agents if sensor_positions is None or a not in sensor_positions]
        if missing:
            raise ConfigurationError(f"Missing sensor position for agents {missing}")
        sensors = {a: np.asarray(sensor_positions[a], dtype=float) for a in agents}

    def range_to_sensor(k: int) -> float:
        det = dets[k]
        if not sensors:
            return 0.0
        return float(np.linalg.norm(det.box.center - sensors[det.agent_id]))

    def nearest(group: List[int]) -> int:
        return min(group, key=lambda k: (range_to_sensor(k), dets[k].agent_id))

    indices = _source_indices(dets)
    groups = _distance_groups(dets, dist_thresh, lambda g: dets[nearest(g)].box.center)
    return [FusedObject.from_detection(dets[nearest(g)], indices[nearest(g)]) for g in groups]


def late_average(dets: Sequence[Detection], dist_thresh: float = DEFAULT_DIST_THRESH) -> List[FusedObject]:
    """Unweighted mean of distance-associated boxes (yaw rebased)."""
    indices = _source_indices(dets)

    def mean_center(group: List[int]) -> np.ndarray:
        return np.mean([dets[k].box.center for k in group], axis=0)

    fused = []
    for group in _distance_groups(dets, dist_thresh, mean_center):
        members = [dets[k] for k in group]
        if len(members) == 1:
            fused.append(FusedObject.from_detection(members[0], indices[group[0]]))
            continue
        m = len(members)
        box = rebased_weighted_mean(np.array([d.box.as_array() for d in members]), np.ones(m))
        variances = np.array([d.cov.as_array() for d in members])
        fused.append(FusedObject(
            box=BBox3D.from_array(box),
            cov=DiagCovariance7.from_array(variances.sum(axis=0) / m ** 2),
            category=members[0].category,
            sources=tuple((d.agent_id, indices[k]) for d, k in zip(members, group)),
            timestamp=float(np.mean([d.timestamp for d in members])),
            confidence=float(np.mean([d.confidence for d in members])),
            gt_ids=tuple(d.gt_id for d in members),
        ))
    return fused

