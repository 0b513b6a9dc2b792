"""
CSBA-3D Combined Score-Based Association

Pairwise association of detections from two sources using a weighted cost
built from three similarity scores:

- Dimension Score (DS): volume-ratio z-score under propagated size uncertainty
- Center Score (CS): 1 - Mahalanobis distance / lambda_max
- Orientation Score (OS): cosine similarity of uncertainty-scaled yaws

Pairs with different categories or a negative raw CS are forbidden. The cost
matrix is solved as a linear assignment; more than two agents are chained
pairwise against the running fused representative of each group.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .assignment import AssignmentResult, CostMatrix, solve_assignment
from .model import Detection, Frame, InvalidInputError

logger = logging.getLogger(__name__)

# Default sliding window width in seconds
DEFAULT_DELTA_T = 0.1


@dataclass(frozen=True)
class CsbaParams:
    """Weights and gates of the CSBA-3D cost."""
    w_ds: float = 0.2
    w_cs: float = 0.5
    w_os: float = 0.3
    lambda_max: float = 3.0
    cost_gate: Optional[float] = None

    def __post_init__(self):
        """Validate weights and thresholds."""
        weights = (self.w_ds, self.w_cs, self.w_os)
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise InvalidInputError(f"CSBA weights must be non-negative: {weights}")
        if sum(weights) <= 0:
            raise InvalidInputError("CSBA weights must not all be zero")
        if not math.isfinite(self.lambda_max) or self.lambda_max <= 0:
            raise InvalidInputError(f"lambda_max must be > 0, got {self.lambda_max}")
        if self.cost_gate is not None and not (0.0 <= self.cost_gate <= 1.0):
            raise InvalidInputError(f"cost_gate must be in [0, 1], got {self.cost_gate}")

    @classmethod
    def for_position_std(cls, std_pos: float, scale: float = 6.0, **kwargs) -> "CsbaParams":
        """Params with lambda_max = scale x position standard deviation."""
        return cls(lambda_max=scale * std_pos, **kwargs)

    @property
    def weight_sum(self) -> float:
        return self.w_ds + self.w_cs + self.w_os


def volume_std(det: Detection) -> float:
    """First-order propagated standard deviation of l*w*h."""
    box, cov = det.box, det.cov
    rel = (cov.var_l / box.l ** 2) + (cov.var_w / box.w ** 2) + (cov.var_h / box.h ** 2)
    return box.volume * math.sqrt(rel)


def dimension_score_from_volumes(v_a: float, sigma_a: float, v_b: float, sigma_b: float) -> float:
    """
    Dimension score from two volumes and their standard deviations.

    The ratio is formed larger-over-smaller so the score does not depend on
    argument order; the inverse-ratio z-score uses the same sigma_r.
    """
    if v_a <= 0 or v_b <= 0:
        raise InvalidInputError(f"Volumes must be positive, got {v_a} and {v_b}")
    if sigma_a <= 0 or sigma_b <= 0:
        raise InvalidInputError("Volume uncertainties must be positive")
    if v_a < v_b:
        v_a, sigma_a, v_b, sigma_b = v_b, sigma_b, v_a, sigma_a
    r = v_a / v_b
    sigma_r = r * math.sqrt((sigma_a / v_a) ** 2 + (sigma_b / v_b) ** 2)
    z_r = (r - 1.0) / sigma_r
    z_inv = (1.0 / r - 1.0) / sigma_r
    return math.exp(-min(z_r ** 2, z_inv ** 2) / 2.0)


def dimension_score(a: Detection, b: Detection) -> float:
    """DS in (0, 1]; 1 for equal volumes."""
    return dimension_score_from_volumes(a.box.volume, volume_std(a), b.box.volume, volume_std(b))


def mahalanobis_distance(a: Detection, b: Detection) -> float:
    """Center distance under the combined position covariance of both detections."""
    sigma = a.cov.position_block() + b.cov.position_block()
    diff = a.box.center - b.box.center
    return float(math.sqrt(max(0.0, diff @ np.linalg.solve(sigma, diff))))


def center_score(a: Detection, b: Detection, lambda_max: float) -> float:
    """CS = 1 - d_M / lambda_max; negative beyond the gate."""
    if lambda_max <= 0:
        raise InvalidInputError(f"lambda_max must be > 0, got {lambda_max}")
    return 1.0 - mahalanobis_distance(a, b) / lambda_max


def orientation_score(a: Detection, b: Detection) -> float:
    """OS = (1 + cos(theta_a/sigma_a - theta_b/sigma_b)) / 2."""
    alpha_a = a.box.theta / math.sqrt(a.cov.var_theta)
    alpha_b = b.box.theta / math.sqrt(b.cov.var_theta)
    return (1.0 + math.cos(alpha_a - alpha_b)) / 2.0


def combine_scores(ds: float, cs: float, os_: float, p: CsbaParams) -> float:
    """Weighted cost from the three scores; CS is clamped to [0, 1]."""
    cs = min(1.0, max(0.0, cs))
    return (p.w_ds * (1.0 - ds) + p.w_cs * (1.0 - cs) + p.w_os * (1.0 - os_)) / p.weight_sum


def pair_cost(a: Detection, b: Detection, p: CsbaParams) -> Optional[float]:
    """
    Association cost of two detections.

    Args:
        a: Detection from the first source
        b: Detection from the second source
        p: CSBA parameters

    Returns:
        Cost in [0, 1], or None when the pair is forbidden (category
        mismatch, distance beyond lambda_max, or cost above cost_gate)
    """
    if a.category != b.category:
        return None
    cs = center_score(a, b, p.lambda_max)
    if cs < 0:
        return None
    cost = combine_scores(dimension_score(a, b), cs, orientation_score(a, b), p)
    if p.cost_gate is not None and cost > p.cost_gate:
        return None
    return cost


def _stack(dets: Sequence[Detection]) -> Tuple[np.ndarray, np.ndarray]:
    boxes = np.array([d.box.as_array() for d in dets]).reshape(-1, 7)
    variances = np.array([d.cov.as_array() for d in dets]).reshape(-1, 7)
    return boxes, variances


def cost_matrix(set_a: Sequence[Detection], set_b: Sequence[Detection], p: CsbaParams) -> CostMatrix:
    """Vectorized pair_cost over all I x J pairs."""
    n_a, n_b = len(set_a), len(set_b)
    if n_a == 0 or n_b == 0:
        return CostMatrix(np.zeros((n_a, n_b)), np.ones((n_a, n_b), dtype=bool))
    boxes_a, var_a = _stack(set_a)
    boxes_b, var_b = _stack(set_b)

    # Dimension score
    vol_a = boxes_a[:, 3:6].prod(axis=1)
    vol_b = boxes_b[:, 3:6].prod(axis=1)
    sig_a = vol_a * np.sqrt((var_a[:, 3:6] / boxes_a[:, 3:6] ** 2).sum(axis=1))
    sig_b = vol_b * np.sqrt((var_b[:, 3:6] / boxes_b[:, 3:6] ** 2).sum(axis=1))
    a_larger = vol_a[:, None] >= vol_b[None, :]
    v_big = np.where(a_larger, vol_a[:, None], vol_b[None, :])
    v_small = np.where(a_larger, vol_b[None, :], vol_a[:, None])
    s_big = np.where(a_larger, sig_a[:, None], sig_b[None, :])
    s_small = np.where(a_larger, sig_b[None, :], sig_a[:, None])
    r = v_big / v_small
    sigma_r = r * np.sqrt((s_big / v_big) ** 2 + (s_small / v_small) ** 2)
    z_sq = np.minimum(((r - 1.0) / sigma_r) ** 2, ((1.0 / r - 1.0) / sigma_r) ** 2)
    ds = np.exp(-z_sq / 2.0)

    # Center score with the combined 3x3 position covariance
    sigma = np.zeros((n_a, n_b, 3, 3))
    idx = np.arange(3)
    sigma[:, :, idx, idx] = var_a[:, None, 0:3] + var_b[None, :, 0:3]
    diff = boxes_a[:, None, 0:3] - boxes_b[None, :, 0:3]
    solved = np.linalg.solve(sigma, diff[..., None])[..., 0]
    d_m = np.sqrt(np.maximum(0.0, (diff * solved).sum(axis=-1)))
    cs_raw = 1.0 - d_m / p.lambda_max

    # Orientation score
    alpha_a = boxes_a[:, 6] / np.sqrt(var_a[:, 6])
    alpha_b = boxes_b[:, 6] / np.sqrt(var_b[:, 6])
    os_ = (1.0 + np.cos(alpha_a[:, None] - alpha_b[None, :])) / 2.0

    cs = np.clip(cs_raw, 0.0, 1.0)
    cost = (p.w_ds * (1.0 - ds) + p.w_cs * (1.0 - cs) + p.w_os * (1.0 - os_)) / p.weight_sum

    cat_a = np.array([d.category.value for d in set_a])
    cat_b = np.array([d.category.value for d in set_b])
    forbidden = (cat_a[:, None] != cat_b[None, :]) | (cs_raw < 0)
    if p.cost_gate is not None:
        forbidden |= cost > p.cost_gate
    return CostMatrix(np.where(forbidden, 0.0, cost), forbidden)


def associate_pairwise(
    set_a: Sequence[Detection], set_b: Sequence[Detection], p: CsbaParams, stats=None
) -> AssignmentResult:
    """
    Associate two detection sets (rows: set_a, cols: set_b).

    Args:
        set_a: Detections of the first source
        set_b: Detections of the second source
        p: CSBA parameters
        stats: Optional RunStatistics receiving pair, gated and match counts

    Returns:
        Matches plus unmatched indices of both sets
    """
    c = cost_matrix(set_a, set_b, p)
    result = solve_assignment(c)
    n_gated = int(c.forbidden.sum())
    if stats is not None:
        stats.log_association(c.rows * c.cols, n_gated, len(result.matches))
    logger.debug(
        f"CSBA {len(set_a)}x{len(set_b)}: {n_gated} gated pairs, {len(result.matches)} matches"
    )
    return result


def associate_multi_indexed(
    frames_per_agent: Sequence[Sequence[Detection]], p: CsbaParams, stats=None
) -> List[List[Tuple[int, int]]]:
    """
    Sequential pairwise association across agents.

    Args:
        frames_per_agent: One detection list per agent
        p: CSBA parameters
        stats: Optional RunStatistics for association counters

    Returns:
        Groups of (agent list position, detection index) pairs
    """
    from .fusion import wls_fuse

    order = sorted(
        (pos for pos, dets in enumerate(frames_per_agent) if len(dets) > 0),
        key=lambda pos: (frames_per_agent[pos][0].agent_id, pos),
    )
    groups: List[List[Tuple[int, int]]] = []
    for pos in order:
        dets = frames_per_agent[pos]
        if not groups:
            groups = [[(pos, i)] for i in range(len(dets))]
            continue
        representatives = [
            wls_fuse([frames_per_agent[a][i] for a, i in group]).as_detection()
            for group in groups
        ]
        result = associate_pairwise(representatives, dets, p, stats)
        for gi, dj in result.matches:
            groups[gi].append((pos, dj))
        for dj in result.unmatched_cols:
            groups.append([(pos, dj)])
    return groups


def associate_multi(
    frames_per_agent: Sequence[Sequence[Detection]], p: CsbaParams
) -> List[List[Detection]]:
    """Groups of detections judged to describe the same object."""
    return [
        [frames_per_agent[a][i] for a, i in group]
        for group in associate_multi_indexed(frames_per_agent, p)
    ]


def window_group(stream: Sequence[Detection], delta_t: float = DEFAULT_DELTA_T) -> List[Frame]:
    """
    Partition a detection stream into sliding time windows.

    Each window starts at the earliest unconsumed timestamp and holds every
    detection strictly less than delta_t later.

    Args:
        stream: Detections (sorted internally when needed)
        delta_t: Window width in seconds

    Returns:
        One Frame per window, timestamped at the window start
    """
    if delta_t <= 0:
        raise InvalidInputError(f"delta_t must be > 0, got {delta_t}")
    items = list(stream)
    times = [d.timestamp for d in items]
    if any(t1 > t2 for t1, t2 in zip(times, times[1:])):
        logger.warning("Detection stream not sorted by timestamp, sorting")
        items.sort(key=lambda d: d.timestamp)

    frames: List[Frame] = []
    start = 0
    while start < len(items):
        anchor = items[start].timestamp
        end = start + 1
        while end < len(items) and items[end].timestamp - anchor < delta_t:
            end += 1
        frames.append(Frame(timestamp=anchor, detections=tuple(items[start:end])))
        start = end
    return frames
