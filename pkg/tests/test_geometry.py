"""
Test suite for oriented box overlap.
"""

import math

import numpy as np
import pytest

from conftest import random_box

from coopfusion.core.geometry import (
    BevPolygon, bev_footprint, convex_intersection_area, giou_3d, iou_3d,
)
from coopfusion.core.model import BBox3D, InvalidInputError


def _rigid(box: BBox3D, angle: float, tx: float, ty: float) -> BBox3D:
    c, s = math.cos(angle), math.sin(angle)
    return BBox3D(
        c * box.x - s * box.y + tx, s * box.x + c * box.y + ty, box.z,
        box.l, box.w, box.h, box.theta + angle,
    )


class TestFootprint:
    """Test BEV footprints and polygons."""

    def test_axis_aligned_unit_box(self, unit_box):
        vertices = bev_footprint(unit_box).vertices
        np.testing.assert_allclose(vertices, [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
        assert bev_footprint(unit_box).area == pytest.approx(1.0)

    def test_square_symmetry(self):
        turned = bev_footprint(BBox3D(0, 0, 0, 1, 1, 1, math.pi / 2)).as_array()
        expected = {(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)}
        assert {(round(x, 9) + 0.0, round(y, 9) + 0.0) for x, y in turned} == expected

    def test_rotated_rectangle(self):
        vertices = bev_footprint(BBox3D(0, 0, 0, 2, 1, 1, math.pi / 4)).as_array()
        assert any(np.allclose(v, (0.354, 1.061), atol=1e-3) for v in vertices)

    def test_polygon_validation(self):
        with pytest.raises(InvalidInputError):
            BevPolygon(((0, 0), (1, 0)))
        with pytest.raises(InvalidInputError):
            BevPolygon(((0, 0), (1, 0), (2, 0)))
        with pytest.raises(InvalidInputError):
            BevPolygon(((0, 0), (2, 0), (1, 0.2), (1, 2)))

    def test_clockwise_input_reordered(self):
        poly = BevPolygon(((0, 0), (0, 1), (1, 1), (1, 0)))
        assert poly.area == pytest.approx(1.0)


class TestIntersection:
    """Test convex clipping areas."""

    def _square(self, x=0.0, y=0.0):
        return bev_footprint(BBox3D(x, y, 0, 1, 1, 1))

    def test_examples(self):
        assert convex_intersection_area(self._square(), self._square()) == pytest.approx(1.0)
        assert convex_intersection_area(self._square(), self._square(0.5)) == pytest.approx(0.5)
        assert convex_intersection_area(self._square(), self._square(3.0)) == 0.0

    def test_monte_carlo_agreement(self, rng):
        for _ in range(20):
            a = bev_footprint(random_box(rng, spread=1.0))
            b = bev_footprint(random_box(rng, spread=1.0))
            pts_a = a.as_array()
            lo, hi = pts_a.min(axis=0), pts_a.max(axis=0)
            n = 20000
            samples = rng.uniform(lo, hi, size=(n, 2))

            def inside(poly, p):
                v = poly.as_array()
                e = np.roll(v, -1, axis=0) - v
                rel = p[:, None, :] - v[None, :, :]
                cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
                return np.all(cross >= 0, axis=1)

            hits = inside(a, samples) & inside(b, samples)
            box_area = float(np.prod(hi - lo))
            p = hits.mean()
            estimate = p * box_area
            sigma = box_area * math.sqrt(max(p * (1 - p), 1.0 / n) / n)
            assert convex_intersection_area(a, b) == pytest.approx(estimate, abs=4 * sigma + 1e-9)


class TestIoU:
    """Test IoU-3D and GIoU-3D."""

    def test_iou_examples(self, unit_box):
        assert iou_3d(unit_box, unit_box) == pytest.approx(1.0)
        shifted = BBox3D(0.5, 0, 0, 1, 1, 1)
        assert iou_3d(unit_box, shifted) == pytest.approx(1 / 3)
        above = BBox3D(0, 0, 1.5, 1, 1, 1)
        assert iou_3d(unit_box, above) == 0.0

    def test_giou_examples(self, unit_box):
        assert giou_3d(unit_box, unit_box) == pytest.approx(1.0)
        assert giou_3d(unit_box, BBox3D(0.5, 0, 0, 1, 1, 1)) == pytest.approx(1 / 3)
        assert giou_3d(unit_box, BBox3D(2, 0, 0, 1, 1, 1)) == pytest.approx(-1 / 3)

    def test_fuzzed_invariants(self, rng):
        for _ in range(1000):
            a, b = random_box(rng, spread=2.0), random_box(rng, spread=2.0)
            iou_ab, giou_ab = iou_3d(a, b), giou_3d(a, b)
            assert 0.0 <= iou_ab <= 1.0
            assert -1.0 < giou_ab <= 1.0
            assert iou_3d(b, a) == pytest.approx(iou_ab, abs=1e-9)
            assert giou_3d(b, a) == pytest.approx(giou_ab, abs=1e-9)
            assert giou_ab <= iou_ab + 1e-9

            angle, tx, ty = rng.uniform(-math.pi, math.pi), rng.uniform(-20, 20), rng.uniform(-20, 20)
            moved = iou_3d(_rigid(a, angle, tx, ty), _rigid(b, angle, tx, ty))
            assert moved == pytest.approx(iou_ab, abs=1e-9)
