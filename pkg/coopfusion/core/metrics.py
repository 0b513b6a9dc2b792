"""
Evaluation Metrics

Identifier-based matching of fused predictions to ground truth and
nuScenes-style error means extended with false-positive penalties:

- mATE: 3D center distance (m)
- mASE: Euclidean distance of (l, w, h) (m)
- mAOE: absolute wrapped yaw difference (deg)

Each false positive adds a fixed penalty term to every mean; means run
over TP and FP together. Precision and recall are 1 when undefined.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .model import Detection, FusedObject, InvalidInputError, yaw_difference

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FpPenalties:
    """Error charged for every false positive."""
    translation: float = 3.0
    scale: float = 1.0
    orientation_deg: float = 90.0

    def __post_init__(self):
        for name in ("translation", "scale", "orientation_deg"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidInputError(f"FP penalty {name} must be finite and >= 0, got {value}")

    def to_dict(self) -> Dict[str, float]:
        return {
            "translation": self.translation,
            "scale": self.scale,
            "orientation_deg": self.orientation_deg,
        }


@dataclass
class MatchResult:
    """TP (prediction, GT) pairs plus unmatched predictions and GT boxes."""
    tp: List[Tuple[FusedObject, Detection]] = field(default_factory=list)
    fp: List[FusedObject] = field(default_factory=list)
    fn: List[Detection] = field(default_factory=list)

    def extend(self, other: "MatchResult") -> "MatchResult":
        self.tp.extend(other.tp)
        self.fp.extend(other.fp)
        self.fn.extend(other.fn)
        return self


@dataclass
class EvalReport:
    """Error means (None when not applicable), precision, recall and counts."""
    mATE: Optional[float]
    mASE: Optional[float]
    mAOE: Optional[float]
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    penalties: FpPenalties = field(default_factory=FpPenalties)
    per_category: Dict[str, "EvalReport"] = field(default_factory=dict)

    def to_dict(self, include_categories: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "mATE": self.mATE,
            "mASE": self.mASE,
            "mAOE": self.mAOE,
            "precision": self.precision,
            "recall": self.recall,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "penalties": self.penalties.to_dict(),
        }
        if include_categories:
            data["per_category"] = {
                name: report.to_dict(include_categories=False)
                for name, report in sorted(self.per_category.items())
            }
        return data


def translation_error(pred: FusedObject, gt: Detection) -> float:
    return float(np.linalg.norm(pred.box.center - gt.box.center))


def scale_error(pred: FusedObject, gt: Detection) -> float:
    return float(np.linalg.norm(pred.box.size - gt.box.size))


def orientation_error_deg(pred: FusedObject, gt: Detection) -> float:
    """Absolute wrapped yaw difference in [0, 180] degrees."""
    return min(180.0, abs(math.degrees(yaw_difference(pred.box.theta, gt.box.theta))))


def _vote(pred: FusedObject, gt_by_id: Dict[str, Detection]) -> Optional[str]:
    """Majority gt_id of the prediction's members; ties go to the nearest GT center."""
    counts = Counter(g for g in pred.gt_ids if g is not None)
    if not counts:
        return None
    best = max(counts.values())
    tied = sorted(g for g, c in counts.items() if c == best)
    known = [g for g in tied if g in gt_by_id]
    if not known:
        return tied[0]
    return min(known, key=lambda g: (translation_error(pred, gt_by_id[g]), g))


def _prediction_key(pred: FusedObject) -> Tuple:
    return (tuple(pred.box.as_array()), pred.sources)


def match_to_gt(preds: Sequence[FusedObject], gt: Sequence[Detection]) -> MatchResult:
    """
    Match predictions to ground truth by object identifier.

    Every prediction votes for the gt_id shared by its members. Per GT box
    the prediction with the nearest center is the true positive; other
    predictions voting for it, and predictions without a known gt_id, are
    false positives. GT boxes without any vote are false negatives.

    Args:
        preds: Fused predictions carrying gt_ids provenance
        gt: Ground-truth boxes of the same frame (unique gt_id each)

    Returns:
        MatchResult
    """
    gt_by_id: Dict[str, Detection] = {}
    for box in gt:
        if box.gt_id is None:
            raise InvalidInputError("Ground-truth boxes must carry gt_id")
        gt_by_id[box.gt_id] = box

    claims: Dict[str, List[FusedObject]] = {}
    result = MatchResult()
    for pred in preds:
        gt_id = _vote(pred, gt_by_id)
        if gt_id is None or gt_id not in gt_by_id:
            result.fp.append(pred)
        else:
            claims.setdefault(gt_id, []).append(pred)

    for box in gt:
        candidates = claims.get(box.gt_id)
        if not candidates:
            result.fn.append(box)
            continue
        ranked = sorted(candidates, key=lambda p: (translation_error(p, box), _prediction_key(p)))
        result.tp.append((ranked[0], box))
        result.fp.extend(ranked[1:])
    return result


def _means(
    tp: Sequence[Tuple[FusedObject, Detection]], n_fp: int, penalties: FpPenalties
) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    n = len(tp) + n_fp
    if n == 0:
        return None, None, None
    ate = sum(translation_error(p, g) for p, g in tp) + n_fp * penalties.translation
    ase = sum(scale_error(p, g) for p, g in tp) + n_fp * penalties.scale
    aoe = sum(orientation_error_deg(p, g) for p, g in tp) + n_fp * penalties.orientation_deg
    return ate / n, ase / n, aoe / n


def _report(
    tp: Sequence[Tuple[FusedObject, Detection]],
    fp: Sequence[FusedObject],
    fn: Sequence[Detection],
    penalties: FpPenalties,
) -> EvalReport:
    n_tp, n_fp, n_fn = len(tp), len(fp), len(fn)
    mate, mase, maoe = _means(tp, n_fp, penalties)
    return EvalReport(
        mATE=mate,
        mASE=mase,
        mAOE=maoe,
        precision=n_tp / (n_tp + n_fp) if n_tp + n_fp else 1.0,
        recall=n_tp / (n_tp + n_fn) if n_tp + n_fn else 1.0,
        tp=n_tp,
        fp=n_fp,
        fn=n_fn,
        penalties=penalties,
    )


def evaluate(
    tp_pairs: Sequence[Tuple[FusedObject, Detection]],
    fp: Sequence[FusedObject],
    fn: Sequence[Detection],
    penalties: Optional[FpPenalties] = None,
) -> EvalReport:
    """
    Aggregate errors, precision and recall.

    Args:
        tp_pairs: (prediction, GT) true positives
        fp: False-positive predictions
        fn: Missed GT boxes
        penalties: FP penalty terms (defaults: 3 m, 1 m, 90 deg)

    Returns:
        EvalReport with a per-category breakdown (TP/FN by GT category, FP by predicted category)
    """
    penalties = penalties or FpPenalties()
    report = _report(tp_pairs, fp, fn, penalties)

    categories = sorted(
        {g.category.value for _, g in tp_pairs}
        | {p.category.value for p in fp}
        | {g.category.value for g in fn}
    )
    for name in categories:
        report.per_category[name] = _report(
            [(p, g) for p, g in tp_pairs if g.category.value == name],
            [p for p in fp if p.category.value == name],
            [g for g in fn if g.category.value == name],
            penalties,
        )
    return report


def evaluate_matches(matches: MatchResult, penalties: Optional[FpPenalties] = None) -> EvalReport:
    return evaluate(matches.tp, matches.fp, matches.fn, penalties)


def evaluate_frames(
    pairs: Iterable[Tuple[Sequence[FusedObject], Sequence[Detection]]],
    penalties: Optional[FpPenalties] = None,
) -> EvalReport:
    """Match every (predictions, GT) frame pair and evaluate the pooled result."""
    total = MatchResult()
    for preds, gt in pairs:
        total.extend(match_to_gt(preds, gt))
    return evaluate_matches(total, penalties)
