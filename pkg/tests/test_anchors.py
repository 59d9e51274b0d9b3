import numpy as np
import pytest

from tfnet.anchors import AnchorSet, iou, kmeans_iou, shape_iou
from tfnet.boxes import Box2D

from oracles import kmeans_2_exhaustive


class TestIoU:
    def test_identical_boxes(self):
        b = Box2D(10, 20, 4, 6)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(Box2D(0, 0, 2, 2), Box2D(10, 10, 2, 2)) == 0.0

    def test_half_shifted_unit_squares(self):
        # overlap 0.5, union 1.5
        assert iou(Box2D(0, 0, 1, 1), Box2D(0.5, 0, 1, 1)) == pytest.approx(1 / 3)

    def test_symmetry_and_bounds(self, rng):
        for _ in range(50):
            a = Box2D(*rng.uniform(1, 50, size=2), *rng.uniform(1, 30, size=2))
            b = Box2D(*rng.uniform(1, 50, size=2), *rng.uniform(1, 30, size=2))
            assert iou(a, b) == pytest.approx(iou(b, a))
            assert 0.0 <= iou(a, b) <= 1.0


class TestShapeIoU:
    def test_equal_shapes(self):
        assert shape_iou((2, 4), (2, 4)) == 1.0

    def test_nested_shapes(self):
        assert shape_iou((1, 1), (2, 2)) == 0.25

    def test_crossed_shapes(self):
        assert shape_iou((3, 1), (1, 3)) == pytest.approx(1 / 5)


class TestKMeans:
    def test_two_separated_clusters(self, rng):
        a = np.array([10.0, 30.0]) + rng.normal(0, 0.3, size=(40, 2))
        b = np.array([60.0, 20.0]) + rng.normal(0, 0.3, size=(40, 2))
        shapes = np.vstack([a, b])
        anchors = kmeans_iou(shapes, k=2, seed=7)
        got = sorted(anchors, key=lambda wh: wh[0])
        assert abs(got[0][0] - 10) < 1 and abs(got[0][1] - 30) < 1
        assert abs(got[1][0] - 60) < 1 and abs(got[1][1] - 20) < 1

    def test_matches_exhaustive_two_cluster_oracle(self, rng):
        shapes = np.vstack([
            np.array([12.0, 28.0]) + rng.normal(0, 0.5, size=(5, 2)),
            np.array([55.0, 22.0]) + rng.normal(0, 0.5, size=(5, 2)),
        ])
        anchors, history = kmeans_iou(shapes, k=2, seed=3, return_history=True)
        _, best_obj = kmeans_2_exhaustive([tuple(s) for s in shapes])
        assert history[-1] == pytest.approx(best_obj, abs=1e-9)

    def test_k_equals_distinct_shapes(self):
        shapes = [(10, 20), (30, 15), (8, 8), (40, 40)]
        anchors, history = kmeans_iou(np.array(shapes, dtype=float), k=4, seed=0,
                                      return_history=True)
        assert sorted(anchors.anchors) == sorted((float(w), float(h)) for w, h in shapes)
        assert history[-1] == pytest.approx(0.0, abs=1e-12)

    def test_objective_monotone_nonincreasing(self, rng):
        for seed in range(5):
            shapes = rng.uniform(5, 80, size=(60, 2))
            _, history = kmeans_iou(shapes, k=5, seed=seed, return_history=True)
            assert all(history[i + 1] <= history[i] + 1e-12 for i in range(len(history) - 1))

    def test_scale_invariance(self, rng):
        shapes = rng.uniform(5, 80, size=(50, 2))
        a1 = kmeans_iou(shapes, k=4, seed=11).as_array()
        a2 = kmeans_iou(shapes * 3.0, k=4, seed=11).as_array()
        np.testing.assert_allclose(a2, a1 * 3.0, rtol=1e-12)

    def test_k_too_large_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            kmeans_iou(np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]), k=2)

    def test_nonpositive_shape_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            kmeans_iou(np.array([[1.0, 2.0], [0.0, 3.0]]), k=1)

    def test_centroids_always_positive(self, rng):
        for seed in range(5):
            shapes = rng.uniform(0.5, 100, size=(30, 2))
            anchors = kmeans_iou(shapes, k=6, seed=seed)
            assert (anchors.as_array() > 0).all()


class TestAnchorSet:
    def test_sorted_by_area(self):
        s = AnchorSet([(10, 10), (2, 2), (5, 4)])
        areas = [w * h for w, h in s]
        assert areas == sorted(areas)

    def test_csv_roundtrip(self):
        s = AnchorSet([(10.5, 20.25), (3, 4)])
        back = AnchorSet.from_csv(s.to_csv())
        np.testing.assert_allclose(back.as_array(), s.as_array())

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="positive"):
            AnchorSet([(1, 0)])
