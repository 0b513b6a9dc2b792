"""
JSON-lines Interchange for Detections and Fused Objects

One JSON object per line with the fields
x, y, z, l, w, h, theta, var_x ... var_theta, category, agent_id, timestamp,
confidence, gt_id. Fused objects add `sources` and `gt_ids`. Angles are radians.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Tuple, Union

from .model import (
    AnnotationParseError, BBox3D, COVARIANCE_FIELDS, Category, CoopFusionError,
    Detection, DiagCovariance7, FusedObject,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

BOX_FIELDS = ("x", "y", "z", "l", "w", "h", "theta")
DETECTION_FIELDS = BOX_FIELDS + COVARIANCE_FIELDS + (
    "category", "agent_id", "timestamp", "confidence", "gt_id",
)


def _box_record(box: BBox3D, cov: DiagCovariance7) -> Dict[str, Any]:
    record: Dict[str, Any] = {name: float(getattr(box, name)) for name in BOX_FIELDS}
    record.update({name: float(getattr(cov, name)) for name in COVARIANCE_FIELDS})
    return record


def detection_to_record(det: Detection) -> Dict[str, Any]:
    """Serialize a detection to a JSON-ready dict in schema field order."""
    record = _box_record(det.box, det.cov)
    record.update({
        "category": det.category.value,
        "agent_id": int(det.agent_id),
        "timestamp": float(det.timestamp),
        "confidence": float(det.confidence),
        "gt_id": det.gt_id,
    })
    return record


def detection_from_record(record: Dict[str, Any], require_gt_id: bool = False) -> Detection:
    """
    Parse a detection record.

    Args:
        record: Dict with the schema fields
        require_gt_id: Reject records without gt_id (ground-truth role)

    Returns:
        Parsed Detection
    """
    missing = [name for name in DETECTION_FIELDS if name not in record and name != "gt_id"]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    gt_id = record.get("gt_id")
    if require_gt_id and gt_id is None:
        raise ValueError("gt_id is required for ground-truth annotations")
    return Detection(
        box=BBox3D(*(float(record[name]) for name in BOX_FIELDS)),
        cov=DiagCovariance7(*(float(record[name]) for name in COVARIANCE_FIELDS)),
        category=Category.parse(record["category"]),
        agent_id=int(record["agent_id"]),
        timestamp=float(record["timestamp"]),
        confidence=float(record["confidence"]),
        gt_id=None if gt_id is None else str(gt_id),
    )


def fused_to_record(obj: FusedObject) -> Dict[str, Any]:
    """Serialize a fused object: detection schema plus sources and gt_ids."""
    record = _box_record(obj.box, obj.cov)
    gt_ids = [g for g in obj.gt_ids if g is not None]
    record.update({
        "category": obj.category.value,
        "agent_id": min(agent for agent, _ in obj.sources),
        "timestamp": float(obj.timestamp),
        "confidence": float(obj.confidence),
        "gt_id": max(sorted(set(gt_ids)), key=gt_ids.count) if gt_ids else None,
        "sources": [[int(a), int(i)] for a, i in obj.sources],
        "gt_ids": list(obj.gt_ids),
    })
    return record


def fused_from_record(record: Dict[str, Any]) -> FusedObject:
    """Parse a fused-object record; plain detection records become singletons."""
    det = detection_from_record(record)
    sources = record.get("sources") or [[det.agent_id, 0]]
    gt_ids = record.get("gt_ids")
    if gt_ids is None:
        gt_ids = [det.gt_id]
    return FusedObject(
        box=det.box,
        cov=det.cov,
        category=det.category,
        sources=tuple((int(a), int(i)) for a, i in sources),
        timestamp=det.timestamp,
        confidence=det.confidence,
        gt_ids=tuple(None if g is None else str(g) for g in gt_ids),
    )


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> int:
    """Write records one per line; returns the number written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
            count += 1
    logger.debug(f"Wrote {count} records to {path}")
    return count


def read_jsonl(path: PathLike) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, record) pairs, skipping blank lines."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            for line_no, raw in enumerate(f, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as e:
                    raise AnnotationParseError(f"invalid UTF-8: {e.reason}", str(path), line_no) from e
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise AnnotationParseError(f"invalid JSON: {e.msg}", str(path), line_no) from e
                if not isinstance(record, dict):
                    raise AnnotationParseError("expected a JSON object", str(path), line_no)
                yield line_no, record
    except OSError as e:
        raise AnnotationParseError(f"cannot read file: {e}", str(path), 0) from e


def _parse_all(path: PathLike, parse) -> list:
    items = []
    for line_no, record in read_jsonl(path):
        try:
            items.append(parse(record))
        except (ValueError, TypeError, KeyError, CoopFusionError) as e:
            raise AnnotationParseError(str(e), str(path), line_no) from e
    return items


def read_detections(path: PathLike, require_gt_id: bool = False) -> List[Detection]:
    """Read all detections of a JSON-lines file, reporting schema errors by line."""
    return _parse_all(path, lambda r: detection_from_record(r, require_gt_id=require_gt_id))


def read_fused(path: PathLike) -> List[FusedObject]:
    """Read fused objects (or plain detections treated as singletons)."""
    return _parse_all(path, fused_from_record)


def write_detections(path: PathLike, detections: Iterable[Detection]) -> int:
    return write_jsonl(path, (detection_to_record(d) for d in detections))


def write_fused(path: PathLike, objects: Iterable[FusedObject]) -> int:
    return write_jsonl(path, (fused_to_record(o) for o in objects))
