"""Synthetic shape datasets and their binary file format.

File layout (all little-endian)::

    magic    6 bytes  b"SNNDS1"
    kind     int32    0 = regression, 1 = detection
    n        int32    number of samples
    C, H, W  int32    image shape
    k        int32    regression: target width; detection: max objects per image
    images   float32  n*C*H*W
    targets  float32  regression: n*k; detection: n*k*6 rows [valid, x, y, w, h, class]
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"SNNDS1"
_HEADER = struct.Struct("<6s6i")
KINDS = ("regression", "detection")


@dataclass
class Dataset:
    kind: str
    images: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.images)

    def channel_stats(self):
        mean = self.images.mean(axis=(0, 2, 3))
        std = self.images.std(axis=(0, 2, 3))
        return mean, np.where(std > 0, std, 1.0)


def _f32(a):
    # values stay exactly representable in the float32 file format
    return a.astype(np.float32).astype(np.float64)


def _background(rng, n, channels, size, noise):
    return rng.uniform(0.0, noise, size=(n, channels, size, size))


def _rect_mask(size, x0, y0, w, h):
    mask = np.zeros((size, size), dtype=bool)
    mask[y0:y0 + h, x0:x0 + w] = True
    return mask


def _disc_mask(size, x0, y0, w, h):
    yy, xx = np.mgrid[0:size, 0:size]
    cx, cy = x0 + (w - 1) / 2.0, y0 + (h - 1) / 2.0
    rx, ry = w / 2.0, h / 2.0
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def mask_box(mask):
    """Pixel bounding box ``(x0, y0, w, h)`` of a boolean mask."""
    ys, xs = np.nonzero(mask)
    return xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1


def shape_mask(size, kind, x0, y0, w, h):
    return (_rect_mask if kind == 0 else _disc_mask)(size, x0, y0, w, h)


def generate_synthetic_regression(rng, n, size=12, min_size=3, max_size=8, noise=0.2):
    """One bright rectangle per image; target ``[cx, cy, w, h]`` (normalized)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    images = _background(rng, n, 1, size, noise)
    targets = np.empty((n, 4))
    for k in range(n):
        w, h = rng.integers(min_size, max_size + 1, size=2)
        x0 = rng.integers(0, size - w + 1)
        y0 = rng.integers(0, size - h + 1)
        images[k, 0, y0:y0 + h, x0:x0 + w] = rng.uniform(0.7, 1.0)
        targets[k] = [(x0 + w / 2) / size, (y0 + h / 2) / size, w / size, h / size]
    return Dataset("regression", _f32(images), _f32(targets))


def _class_style(cls):
    """(shape kind, dominant colour channel) for a class index."""
    return cls % 2, (cls // 2) % 3


def _place(rng, size, grid, cell, min_size, max_size, taken):
    cs = size / grid
    w, h = (int(v) for v in rng.integers(min_size, max_size + 1, size=2))
    i, j = divmod(cell, grid)
    xs = [x for x in range(0, size - w + 1) if int((x + w / 2) // cs) == j]
    ys = [y for y in range(0, size - h + 1) if int((y + h / 2) // cs) == i]
    if not xs or not ys:
        return None
    x0, y0 = int(rng.choice(xs)), int(rng.choice(ys))
    for bx, by, bw, bh in taken:
        if x0 <= bx + bw and bx <= x0 + w and y0 <= by + bh and by <= y0 + h:
            return None
    return x0, y0, w, h


def render_objects(size, channels, objects, background, colours):
    """Paint ``objects`` [(cls, x0, y0, w, h)] over ``background``; returns image and pixel boxes."""
    image = background.copy()
    boxes = []
    for (cls, x0, y0, w, h), colour in zip(objects, colours):
        kind, _ = _class_style(cls)
        mask = shape_mask(size, kind, x0, y0, w, h)
        image[:, mask] = colour[:, None]
        boxes.append(mask_box(mask))
    return image, boxes


def generate_synthetic_detection(
    rng, n, grid=3, num_classes=2, size=24, channels=3, max_objects=3,
    min_size=6, max_size=12, noise=0.2,
):
    """1..max_objects rectangles/discs on a noise background, at most one per grid cell."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_objects > grid * grid:
        raise ValueError("max_objects cannot exceed the number of grid cells")
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    images = _background(rng, n, channels, size, noise)
    targets = np.zeros((n, max_objects, 6))
    for k in range(n):
        count = int(rng.integers(1, max_objects + 1))
        cells = rng.permutation(grid * grid)
        objects, taken = [], []
        for cell in cells:
            if len(objects) == count:
                break
            for _ in range(20):
                placed = _place(rng, size, grid, int(cell), min_size, max_size, taken)
                if placed is not None:
                    break
            if placed is None:
                continue
            cls = int(rng.integers(0, num_classes))
            taken.append(placed)
            objects.append((cls,) + placed)
        colours = []
        for cls, *_ in objects:
            _, channel = _class_style(cls)
            colour = rng.uniform(0.3, 0.5, size=channels)
            colour[channel % channels] = rng.uniform(0.8, 1.0)
            colours.append(colour)
        images[k], boxes = render_objects(size, channels, objects, images[k], colours)
        for m, ((cls, *_), (x0, y0, w, h)) in enumerate(zip(objects, boxes)):
            targets[k, m] = [1.0, x0 / size, y0 / size, w / size, h / size, cls]
    return Dataset("detection", _f32(images), _f32(targets))


def save_dataset(path, ds: Dataset):
    n, c, h, w = ds.images.shape
    k = ds.targets.shape[1]
    header = _HEADER.pack(MAGIC, KINDS.index(ds.kind), n, c, h, w, k)
    with open(path, "wb") as f:
        f.write(header)
        f.write(ds.images.astype("<f4").tobytes())
        f.write(ds.targets.astype("<f4").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated dataset header")
    magic, kind, n, c, h, w, k = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if kind not in (0, 1):
        raise ValueError(f"{path}: unknown dataset kind {kind}")
    t_shape = (n, k) if kind == 0 else (n, k, 6)
    n_img = n * c * h * w
    n_tgt = int(np.prod(t_shape))
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size != n_img + n_tgt:
        raise ValueError(f"{path}: expected {n_img + n_tgt} floats, found {body.size}")
    images = body[:n_img].astype(np.float64).reshape(n, c, h, w)
    targets = body[n_img:].astype(np.float64).reshape(t_shape)
    return Dataset(KINDS[kind], images, targets)
