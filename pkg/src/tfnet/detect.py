"""Decode raw head tensors into pixel-space detections and suppress overlaps.

The head layout per anchor is (t_x, t_y, t_w, t_h, t_conf, class logits...).
Decoding follows the usual anchor-offset transforms: sigmoid center offsets
within the cell, exponential width/height scaling of the anchor shape, and
confidence = sigmoid(t_conf) * max softmax class probability.
"""

from __future__ import annotations

import numpy as np

from .anchors import AnchorSet, iou
from .boxes import Box2D, Detection
from .tensor import Tensor, softmax


def _sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def decode(head, anchors: AnchorSet, stride_px: int, conf_threshold: float = 0.01,
           num_classes: int = 2, image_id: str = "") -> list[Detection]:
    """Decode a raw head map [N, A*(5+C)+, Hg, Wg] into detections.

    Channels beyond A*(5+C) per anchor block (e.g. a widened head) are
    ignored.  Detections are emitted in (image, cell row-major, anchor)
    order; entries below ``conf_threshold`` are dropped.
    """
    data = head.data if isinstance(head, Tensor) else np.asarray(head)
    if data.ndim != 4:
        raise ValueError(f"head must be [N, C, Hg, Wg], got rank {data.ndim}")
    n, ch, hg, wg = data.shape
    a = len(anchors)
    if ch % a != 0 or ch // a < 5 + num_classes:
        raise ValueError(f"head channel count {ch} does not hold {a} anchor blocks "
                         f"of at least {5 + num_classes} values")
    per = ch // a

    blocks = data.reshape(n, a, per, hg, wg)
    txy = _sigmoid(blocks[:, :, 0:2])
    twh = blocks[:, :, 2:4]
    conf = _sigmoid(blocks[:, :, 4])
    cls_probs = softmax(blocks[:, :, 5:5 + num_classes], axis=2)

    anchor_wh = anchors.as_array()
    gx = np.arange(wg).reshape(1, 1, 1, wg)
    gy = np.arange(hg).reshape(1, 1, hg, 1)
    cx = (txy[:, :, 0] + gx) * stride_px
    cy = (txy[:, :, 1] + gy) * stride_px
    with np.errstate(over="ignore"):
        bw = anchor_wh[:, 0].reshape(1, a, 1, 1) * np.exp(twh[:, :, 0])
        bh = anchor_wh[:, 1].reshape(1, a, 1, 1) * np.exp(twh[:, :, 1])
    best_cls = cls_probs.argmax(axis=2)
    best_prob = cls_probs.max(axis=2)
    score = conf * best_prob

    out: list[Detection] = []
    for ni in range(n):
        img = image_id if n == 1 else f"{image_id}#{ni}"
        for gyi in range(hg):
            for gxi in range(wg):
                for ai in range(a):
                    s = score[ni, ai, gyi, gxi]
                    if s < conf_threshold:
                        continue
                    out.append(Detection(
                        box=Box2D(cx[ni, ai, gyi, gxi], cy[ni, ai, gyi, gxi],
                                  bw[ni, ai, gyi, gxi], bh[ni, ai, gyi, gxi]),
                        class_id=int(best_cls[ni, ai, gyi, gxi]),
                        confidence=float(s),
                        cell=(gxi, gyi),
                        anchor_index=ai,
                        image_id=img,
                        class_probs=[float(p) for p in cls_probs[ni, ai, :, gyi, gxi]],
                    ))
    return out


def nms(dets: list[Detection], iou_threshold: float = 0.45) -> list[Detection]:
    """Greedy per-class suppression by descending confidence.

    Ties break by (confidence desc, cell row-major index asc, anchor asc),
    so output order is deterministic.  Kept boxes of one class never exceed
    the IoU threshold against each other.
    """
    def key(d: Detection):
        return (-d.confidence, d.cell[1], d.cell[0], d.anchor_index)

    kept: list[Detection] = []
    for d in sorted(dets, key=key):
        if all(k.class_id != d.class_id or iou(k.box, d.box) <= iou_threshold for k in kept):
            kept.append(d)
    return kept


def clip_box(box: Box2D, width: int, height: int) -> Box2D:
    """Clip a box to image bounds (display/export only; eval uses raw boxes)."""
    x1 = min(max(box.x1, 0.0), width - 1.0)
    y1 = min(max(box.y1, 0.0), height - 1.0)
    x2 = min(max(box.x2, 1.0), float(width))
    y2 = min(max(box.y2, 1.0), float(height))
    return Box2D.from_corners(x1, y1, max(x2, x1 + 1e-3), max(y2, y1 + 1e-3))


KITTI_CLASS_NAMES = {0: "Car", 1: "Pedestrian"}


def to_kitti_line(det: Detection, class_names=None) -> str:
    """Result line: type trunc occ alpha left top right bottom h w l x y z ry score."""
    names = class_names or KITTI_CLASS_NAMES
    name = names.get(det.class_id, f"Class{det.class_id}")
    b = det.box
    return (f"{name} -1 -1 -10 "
            f"{b.x1:.2f} {b.y1:.2f} {b.x2:.2f} {b.y2:.2f} "
            f"-1 -1 -1 -1000 -1000 -1000 -10 {det.confidence:.6f}")
