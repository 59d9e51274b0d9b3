"""Anchor-box clustering and the IoU primitives shared across the repo.

Anchor shapes are found by k-means over training-set box shapes under the
distance 1 - IoU of co-centered boxes.  The centroid update is the
per-cluster median of widths and heights, which is robust under the
non-Euclidean metric; seeding is k-means++-style on the same distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import Box2D


def iou(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two boxes; symmetric, in [0, 1]."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def shape_iou(a, b) -> float:
    """IoU of two (w, h) shapes placed on a common center."""
    wa, ha = a
    wb, hb = b
    inter = min(wa, wb) * min(ha, hb)
    return inter / (wa * ha + wb * hb - inter)


def _shape_iou_matrix(shapes: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise shape IoU, shapes [N,2] x centroids [K,2] -> [N,K]."""
    inter = np.minimum(shapes[:, None, 0], centroids[None, :, 0]) \
        * np.minimum(shapes[:, None, 1], centroids[None, :, 1])
    areas_s = shapes[:, 0] * shapes[:, 1]
    areas_c = centroids[:, 0] * centroids[:, 1]
    return inter / (areas_s[:, None] + areas_c[None, :] - inter)


@dataclass
class AnchorSet:
    """K anchor shapes in pixels, kept sorted by area ascending."""

    anchors: list[tuple[float, float]]

    def __post_init__(self):
        for w, h in self.anchors:
            if w <= 0 or h <= 0:
                raise ValueError(f"anchor dimensions must be positive, got ({w}, {h})")
        self.anchors = sorted(((float(w), float(h)) for w, h in self.anchors),
                              key=lambda wh: wh[0] * wh[1])

    def __len__(self) -> int:
        return len(self.anchors)

    def __iter__(self):
        return iter(self.anchors)

    def __getitem__(self, i):
        return self.anchors[i]

    def as_array(self) -> np.ndarray:
        return np.array(self.anchors, dtype=float)

    def to_csv(self) -> str:
        lines = ["w,h"]
        lines += [f"{w:.4f},{h:.4f}" for w, h in self.anchors]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "AnchorSet":
        rows = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("w,")]
        return cls([tuple(float(v) for v in ln.split(",")) for ln in rows])


def _seed_centroids(shapes: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding under d = 1 - shape IoU."""
    centroids = np.empty((k, 2))
    centroids[0] = shapes[rng.integers(len(shapes))]
    for i in range(1, k):
        d = 1.0 - _shape_iou_matrix(shapes, centroids[:i]).max(axis=1)
        total = d.sum()
        if total <= 0:
            # All points coincide with a centroid; any remaining point works.
            centroids[i] = shapes[rng.integers(len(shapes))]
            continue
        centroids[i] = shapes[rng.choice(len(shapes), p=d / total)]
    return centroids


def kmeans_iou(shapes, k: int, seed: int = 0, max_iter: int = 100,
               return_history: bool = False):
    """Cluster (w, h) shapes into k anchors under the 1 - IoU distance.

    Iterates assignment/median-update until assignments stop changing or
    ``max_iter`` passes.  Empty clusters are re-seeded from the point
    farthest from its assigned centroid.  The median update is not
    guaranteed to lower the mean 1 - IoU objective, so an iteration that
    would raise it is treated as convergence and rolled back; the reported
    objective history is therefore non-increasing on every run.  Returns
    an AnchorSet (and the objective history when requested).
    """
    shapes = np.asarray(shapes, dtype=float)
    if shapes.ndim != 2 or shapes.shape[1] != 2:
        raise ValueError(f"shapes must be an [N,2] array of (w, h), got {shapes.shape}")
    if (shapes <= 0).any():
        raise ValueError("all shape dimensions must be strictly positive")
    distinct = np.unique(shapes, axis=0)
    if k > len(distinct):
        raise ValueError(f"k={k} exceeds the {len(distinct)} distinct shapes available")

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(distinct, k, rng)

    assignment = np.full(len(shapes), -1)
    history = []
    prev_centroids = centroids.copy()
    for _ in range(max_iter):
        dist = 1.0 - _shape_iou_matrix(shapes, centroids)
        new_assignment = dist.argmin(axis=1)
        obj = dist[np.arange(len(shapes)), new_assignment].mean()
        if history and obj > history[-1]:
            centroids = prev_centroids
            break
        history.append(obj)
        if (new_assignment == assignment).all():
            break
        assignment = new_assignment
        prev_centroids = centroids.copy()
        for ci in range(k):
            members = shapes[assignment == ci]
            if len(members) == 0:
                farthest = dist[np.arange(len(shapes)), assignment].argmax()
                centroids[ci] = shapes[farthest]
            else:
                centroids[ci] = np.median(members, axis=0)

    result = AnchorSet([tuple(c) for c in centroids])
    if return_history:
        return result, history
    return result
