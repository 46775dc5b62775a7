"""Toy single-scale YOLO-style head: targets, loss, box decoding and toy-mAP.

Prediction grids are ``[B, 5 + num_classes, G, G]`` with channels
``tx, ty, w, h, objectness, class logits...``. ``tx, ty`` are the box centre's
offset inside its cell (in cell units); ``w, h`` are normalized to the image.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .numerics import ShapeError


@dataclass(frozen=True)
class LossWeights:
    coord: float = 5.0
    obj: float = 1.0
    noobj: float = 0.5
    cls: float = 1.0


def encode_targets(targets, grid: int, num_classes: int):
    """Scatter box rows ``[valid, x, y, w, h, class]`` onto the grid.

    Returns ``(obj_mask[B,G,G], coords[B,4,G,G], classes[B,G,G])``.
    """
    targets = np.asarray(targets, dtype=np.float64)
    bsz = len(targets)
    obj = np.zeros((bsz, grid, grid))
    coords = np.zeros((bsz, 4, grid, grid))
    classes = np.zeros((bsz, grid, grid), dtype=np.int64)
    for b in range(bsz):
        for valid, x, y, w, h, c in targets[b]:
            if valid <= 0:
                continue
            if min(x, y, w, h) < -1e-6 or x + w > 1 + 1e-6 or y + h > 1 + 1e-6:
                raise ValueError(f"box {(x, y, w, h)} lies outside the unit square")
            if not 0 <= c < num_classes:
                raise ValueError(f"class {c} outside [0, {num_classes})")
            cx, cy = (x + w / 2) * grid, (y + h / 2) * grid
            j, i = min(int(cx), grid - 1), min(int(cy), grid - 1)
            obj[b, i, j] = 1.0
            coords[b, :, i, j] = [cx - j, cy - i, w, h]
            classes[b, i, j] = int(c)
    return obj, coords, classes


def _log_softmax(logits, axis):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def toy_detection_loss(pred, targets, num_classes: int, weights: LossWeights = LossWeights()):
    """Composite loss averaged over the batch; returns ``(loss, d loss / d pred)``."""
    pred = np.asarray(pred, dtype=np.float64)
    bsz, ch, grid, g2 = pred.shape
    if ch != 5 + num_classes or grid != g2:
        raise ShapeError(f"prediction grid {pred.shape} does not match {num_classes} classes")
    obj, coords, classes = encode_targets(targets, grid, num_classes)
    noobj = 1.0 - obj
    grad = np.zeros_like(pred)

    dc = pred[:, :4] - coords
    coord_loss = weights.coord * np.sum(obj[:, None] * dc * dc)
    grad[:, :4] = 2 * weights.coord * obj[:, None] * dc

    po = pred[:, 4]
    obj_loss = weights.obj * np.sum(obj * (po - 1.0) ** 2)
    noobj_loss = weights.noobj * np.sum(noobj * po * po)
    grad[:, 4] = 2 * weights.obj * obj * (po - 1.0) + 2 * weights.noobj * noobj * po

    logits = pred[:, 5:]
    logp = _log_softmax(logits, axis=1)
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, classes[:, None], 1.0, axis=1)
    cls_loss = -weights.cls * np.sum(obj[:, None] * onehot * logp)
    grad[:, 5:] = weights.cls * obj[:, None] * (np.exp(logp) - onehot)

    loss = (coord_loss + obj_loss + noobj_loss + cls_loss) / bsz
    return float(loss), grad / bsz


def detection_loss(pred, targets, num_classes: int, weights: LossWeights = LossWeights()):
    """:func:`toy_detection_loss` as a tape op."""

    def fn(p):
        loss, grad = toy_detection_loss(p, targets, num_classes, weights)
        return np.asarray(loss), lambda g: g * grad

    return ad.custom(pred, fn)


def decode_predictions(pred):
    """One detection per cell: ``[B, G*G, 6]`` rows ``[x, y, w, h, score, class]``."""
    pred = np.asarray(pred, dtype=np.float64)
    bsz, _, grid, _ = pred.shape
    jj, ii = np.meshgrid(np.arange(grid), np.arange(grid))
    cx = (jj + pred[:, 0]) / grid
    cy = (ii + pred[:, 1]) / grid
    w, h = np.abs(pred[:, 2]), np.abs(pred[:, 3])
    probs = np.exp(_log_softmax(pred[:, 5:], axis=1))
    cls = probs.argmax(axis=1)
    score = np.clip(pred[:, 4], 0.0, None) * probs.max(axis=1)
    out = np.stack([cx - w / 2, cy - h / 2, w, h, score, cls.astype(np.float64)], axis=-1)
    return out.reshape(bsz, grid * grid, 6)


def iou(a, b) -> float:
    """IoU of two ``(x, y, w, h)`` boxes."""
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def average_precision_11(tp, n_gt: int) -> float:
    """11-point interpolated AP for detections already sorted by score."""
    tp = np.asarray(tp, dtype=np.float64)
    if n_gt == 0:
        return float("nan")
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        hit = precision[recall >= r - 1e-12]
        ap += hit.max() if hit.size else 0.0
    return ap / 11.0


def toy_map(pred, targets, num_classes: int, iou_threshold: float = 0.5) -> float:
    """Mean over classes (with ground truth) of 11-point AP at the IoU threshold."""
    dets = decode_predictions(pred)
    targets = np.asarray(targets, dtype=np.float64)
    if len(targets) == 0:
        raise ValueError("toy_map: empty dataset")
    aps = []
    for c in range(num_classes):
        gts = {}
        for b in range(len(targets)):
            rows = [r[1:5] for r in targets[b] if r[0] > 0 and int(r[5]) == c]
            if rows:
                gts[b] = (rows, [False] * len(rows))
        n_gt = sum(len(v[0]) for v in gts.values())
        if n_gt == 0:
            continue
        cand = [(d[4], b, d[:4]) for b in range(len(dets)) for d in dets[b] if int(d[5]) == c]
        cand.sort(key=lambda t: -t[0])
        tp = []
        for _, b, box in cand:
            best, best_k = 0.0, -1
            if b in gts:
                rows, used = gts[b]
                for k, g in enumerate(rows):
                    if not used[k]:
                        o = iou(box, g)
                        if o > best:
                            best, best_k = o, k
            if best >= iou_threshold:
                gts[b][1][best_k] = True
                tp.append(1.0)
            else:
                tp.append(0.0)
        aps.append(average_precision_11(tp, n_gt))
    return float(np.mean(aps)) if aps else 0.0
