"""
WLS-3D Weighted Least Squares Fusion

Merges a group of associated detections into one FusedObject. With a
diagonal covariance the inverse-covariance weighted mean separates per
component:

    z = (sum R^-1)^-1 sum R^-1 y        P = (sum R^-1)^-1

Yaw is averaged in a chart rebased on the first member's yaw so the
+-pi seam does not split nearby headings.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from .model import (
    BBox3D, Detection, DiagCovariance7, Frame, FusedObject, InvalidInputError,
    normalize_yaw,
)

logger = logging.getLogger(__name__)

YAW_INDEX = 6


def rebased_weighted_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Column-wise weighted mean of stacked 7-component box vectors.

    Every column is averaged as offsets from the first row, and the yaw
    column uses minimal signed offsets; identical rows therefore return the
    first row exactly.

    Args:
        values: (M, 7) box vectors
        weights: (M, 7) or (M,) non-negative weights

    Returns:
        (7,) fused box vector with yaw in (-pi, pi]
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.ndim == 1:
        weights = np.repeat(weights[:, None], values.shape[1], axis=1)
    reference = values[0]
    offsets = values - reference
    offsets[:, YAW_INDEX] = (offsets[:, YAW_INDEX] + np.pi) % (2.0 * np.pi) - np.pi
    fused = reference + (weights * offsets).sum(axis=0) / weights.sum(axis=0)
    fused[YAW_INDEX] = normalize_yaw(float(fused[YAW_INDEX]))
    return fused


def _check_group(group: Sequence[Detection]) -> None:
    if len(group) == 0:
        raise InvalidInputError("Cannot fuse an empty group")
    categories = {d.category for d in group}
    if len(categories) > 1:
        names = sorted(c.value for c in categories)
        raise InvalidInputError(f"Cannot fuse mixed categories: {names}")


def wls_fuse(group: Sequence[Detection], indices: Optional[Sequence[int]] = None) -> FusedObject:
    """
    Inverse-variance weighted fusion of one associated group.

    Args:
        group: Detections of a single category
        indices: Per-member detection index for provenance (default: position in group)

    Returns:
        FusedObject with fused box, fused variances and sources
    """
    _check_group(group)
    if indices is None:
        indices = range(len(group))
    indices = list(indices)
    if len(indices) != len(group):
        raise InvalidInputError("indices must have one entry per group member")

    if len(group) == 1:
        return FusedObject.from_detection(group[0], indices[0])

    values = np.array([d.box.as_array() for d in group])
    variances = np.array([d.cov.as_array() for d in group])
    weights = 1.0 / variances

    fused = rebased_weighted_mean(values, weights)
    fused_var = np.minimum(1.0 / weights.sum(axis=0), variances.min(axis=0))

    informativeness = weights.sum(axis=1)
    timestamps = np.array([d.timestamp for d in group])
    timestamp = timestamps[0] + float(
        (informativeness * (timestamps - timestamps[0])).sum() / informativeness.sum()
    )

    return FusedObject(
        box=BBox3D.from_array(fused),
        cov=DiagCovariance7.from_array(fused_var),
        category=group[0].category,
        sources=tuple((d.agent_id, i) for d, i in zip(group, indices)),
        timestamp=max(0.0, timestamp),
        confidence=max(d.confidence for d in group),
        gt_ids=tuple(d.gt_id for d in group),
    )


def fuse_frame(frame: Frame, p, stats=None) -> List[FusedObject]:
    """
    Associate a frame's detections with CSBA-3D and fuse every group.

    Args:
        frame: Detections of one time window
        p: CsbaParams
        stats: Optional RunStatistics for association counters

    Returns:
        One FusedObject per associated group; unmatched detections pass
        through as singletons
    """
    from .association import associate_multi_indexed

    per_agent = list(frame.by_agent().values())
    groups = associate_multi_indexed(per_agent, p, stats)
    fused = [
        wls_fuse([per_agent[a][i] for a, i in group], [i for _, i in group])
        for group in groups
    ]
    logger.debug(f"Frame t={frame.timestamp:.3f}: {len(frame)} detections -> {len(fused)} objects")
    return fused
