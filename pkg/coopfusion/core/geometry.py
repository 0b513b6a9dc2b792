"""
Oriented 3D Box Overlap

IoU-3D and GIoU-3D for yaw-only boxes. Overlap decomposes exactly into a
bird's-eye-view (BEV) oriented-rectangle intersection times the overlap of
the vertical intervals. BEV intersection uses Sutherland-Hodgman clipping of
convex polygons; GIoU's enclosing volume is the BEV convex hull of both
footprints times the union of the vertical extents.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull

from .model import BBox3D, InvalidInputError

# Clipped areas below this are treated as empty
AREA_EPS = 1e-12

Point = Tuple[float, float]


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class BevPolygon:
    """Convex ground-plane polygon with counter-clockwise vertices."""
    vertices: Tuple[Point, ...]

    def __post_init__(self):
        pts = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(pts) < 3:
            raise InvalidInputError(f"Polygon needs at least 3 vertices, got {len(pts)}")
        area = _signed_area(pts)
        if abs(area) < AREA_EPS:
            raise InvalidInputError("Polygon has zero area")
        if area < 0:
            pts = pts[::-1]
        edges = np.roll(pts, -1, axis=0) - pts
        cross = edges[:, 0] * np.roll(edges[:, 1], -1) - edges[:, 1] * np.roll(edges[:, 0], -1)
        if np.any(cross < -1e-9 * max(1.0, float(np.abs(pts).max()) ** 2)):
            raise InvalidInputError("Polygon is not convex")
        object.__setattr__(self, "vertices", tuple((float(px), float(py)) for px, py in pts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        return _signed_area(self.as_array())


def bev_footprint(b: BBox3D) -> BevPolygon:
    """
    Ground-plane rectangle of a box.

    Args:
        b: Box

    Returns:
        4-vertex CCW polygon centered at (x, y), half-extents (l/2, w/2), rotated by theta
    """
    hl, hw = b.l / 2.0, b.w / 2.0
    local = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
    c, s = math.cos(b.theta), math.sin(b.theta)
    rotation = np.array([[c, -s], [s, c]])
    corners = local @ rotation.T + np.array([b.x, b.y])
    return BevPolygon(tuple(map(tuple, corners)))


def _inside(p: np.ndarray, edge_start: np.ndarray, edge_end: np.ndarray) -> bool:
    # Left of (or on) a CCW edge
    return ((edge_end[0] - edge_start[0]) * (p[1] - edge_start[1])
            - (edge_end[1] - edge_start[1]) * (p[0] - edge_start[0])) >= 0.0


def _line_intersection(s: np.ndarray, e: np.ndarray, cp1: np.ndarray, cp2: np.ndarray) -> np.ndarray:
    d1 = e - s
    d2 = cp2 - cp1
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    if denom == 0.0:
        return e
    t = ((cp1[0] - s[0]) * d2[1] - (cp1[1] - s[1]) * d2[0]) / denom
    return s + t * d1


def clip_polygon(subject: Sequence[Point], clip: Sequence[Point]) -> np.ndarray:
    """Sutherland-Hodgman clipping of a polygon by a convex CCW polygon."""
    output = [np.asarray(p, dtype=float) for p in subject]
    clip_pts = [np.asarray(p, dtype=float) for p in clip]
    cp1 = clip_pts[-1]
    for cp2 in clip_pts:
        if not output:
            break
        input_list = output
        output = []
        s = input_list[-1]
        for e in input_list:
            if _inside(e, cp1, cp2):
                if not _inside(s, cp1, cp2):
                    output.append(_line_intersection(s, e, cp1, cp2))
                output.append(e)
            elif _inside(s, cp1, cp2):
                output.append(_line_intersection(s, e, cp1, cp2))
            s = e
        cp1 = cp2
    return np.array(output).reshape(-1, 2)


def convex_intersection_area(a: BevPolygon, b: BevPolygon) -> float:
    """Area of the intersection of two convex polygons (0 when disjoint)."""
    clipped = clip_polygon(a.vertices, b.vertices)
    if len(clipped) < 3:
        return 0.0
    area = abs(_signed_area(clipped))
    return area if area >= AREA_EPS else 0.0


def _vertical_overlap(a: BBox3D, b: BBox3D) -> float:
    return max(0.0, min(a.z_max, b.z_max) - max(a.z_min, b.z_min))


def _intersection_and_union(a: BBox3D, b: BBox3D) -> Tuple[float, float]:
    dz = _vertical_overlap(a, b)
    inter = 0.0
    if dz > 0.0:
        inter = convex_intersection_area(bev_footprint(a), bev_footprint(b)) * dz
    union = a.volume + b.volume - inter
    return inter, union


def iou_3d(a: BBox3D, b: BBox3D) -> float:
    """Intersection volume over union volume, in [0, 1]."""
    inter, union = _intersection_and_union(a, b)
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def enclosing_volume(a: BBox3D, b: BBox3D) -> float:
    """BEV convex hull area of both footprints times the union of vertical extents."""
    points = np.vstack([bev_footprint(a).as_array(), bev_footprint(b).as_array()])
    hull_area = ConvexHull(points).volume
    height = max(a.z_max, b.z_max) - min(a.z_min, b.z_min)
    return hull_area * height


def giou_3d(a: BBox3D, b: BBox3D) -> float:
    """Generalized IoU in (-1, 1]."""
    inter, union = _intersection_and_union(a, b)
    iou = inter / union if union > 0.0 else 0.0
    enclosing = max(enclosing_volume(a, b), union)
    return iou - (enclosing - union) / enclosing
