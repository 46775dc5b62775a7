"""Optimizer, learning-rate schedule, losses and augmentation."""

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import ShapeError, as_tensor


@dataclass
class OptimizerState:
    """SGD with momentum and L2 weight decay on a chosen subset of parameters."""

    momentum: float = 0.9
    base_lr: float = 0.1
    weight_decay: float = 5e-3
    velocity: dict = field(default_factory=dict)
    decay_params: frozenset = None  # None: decay every parameter

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


def sgd_step(params, grads, state: OptimizerState, lr: float):
    """One momentum step: ``v <- m*v + g + wd*p``; ``p <- p - lr*v``.

    Returns new parameter and velocity dicts; ``state.velocity`` is replaced.
    """
    new_params = {}
    new_velocity = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"sgd_step: grad for {name} has shape {g.shape}, param {p.shape}")
        v = state.velocity.get(name)
        if v is not None and v.shape != p.shape:
            raise ShapeError(f"sgd_step: velocity for {name} has shape {v.shape}")
        d = g
        if state.weight_decay and (state.decay_params is None or name in state.decay_params):
            d = d + state.weight_decay * p
        v = d if v is None else state.momentum * v + d
        new_velocity[name] = v
        new_params[name] = p - lr * v
    state.velocity = new_velocity
    return new_params, state


@dataclass
class ScheduleState:
    epoch: int = 0
    total_epochs: int = 100
    base_lr: float = 0.1
    min_lr: float = 0.0


def cosine_lr(state: ScheduleState) -> float:
    if state.total_epochs < 1:
        raise ValueError("total_epochs must be >= 1")
    if not 0 <= state.epoch <= state.total_epochs:
        raise ValueError(f"epoch {state.epoch} outside [0, {state.total_epochs}]")
    frac = state.epoch / state.total_epochs
    return state.min_lr + 0.5 * (state.base_lr - state.min_lr) * (1.0 + math.cos(math.pi * frac))


def mse_loss(pred, target) -> float:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


@dataclass
class SyntheticSample:
    """``image`` is C x H x W; exactly one of ``target`` / ``boxes`` is set.

    ``boxes`` rows are ``[x, y, w, h, class]`` in normalized image coordinates
    with ``(x, y)`` the top-left corner. Regression targets are
    ``[cx, cy, w, h]`` of a single object.
    """

    image: np.ndarray
    target: np.ndarray = None
    boxes: np.ndarray = None


def hflip_boxes(boxes):
    boxes = np.array(boxes, dtype=np.float64)
    if len(boxes):
        boxes[:, 0] = 1.0 - boxes[:, 0] - boxes[:, 2]
    return boxes


def hflip_sample(sample: SyntheticSample) -> SyntheticSample:
    """Mirror across the vertical axis with matching label remap."""
    image = sample.image[..., ::-1].copy()
    target = None
    if sample.target is not None:
        target = np.array(sample.target, dtype=np.float64)
        target[0] = 1.0 - target[0]
    boxes = hflip_boxes(sample.boxes) if sample.boxes is not None else None
    return SyntheticSample(image, target, boxes)


def normalize(image, mean, std):
    """Per-channel ``(x - mean) / std`` on ``[..., C, H, W]``."""
    mean = np.asarray(mean, dtype=np.float64)[:, None, None]
    std = np.asarray(std, dtype=np.float64)[:, None, None]
    return (np.asarray(image, dtype=np.float64) - mean) / std


def augment(sample: SyntheticSample, rng, mean, std, flip_prob: float = 0.5) -> SyntheticSample:
    """Random horizontal flip, then channel normalization."""
    if rng.random() < flip_prob:
        sample = hflip_sample(sample)
    return SyntheticSample(normalize(sample.image, mean, std), sample.target, sample.boxes)


def augment_batch(images, targets, kind: str, rng, mean, std, flip_prob: float = 0.5):
    """Vectorised :func:`augment` over a batch (one coin flip per sample).

    ``targets`` is ``[B, 4]`` for regression or ``[B, M, 6]`` detection rows
    ``[valid, x, y, w, h, class]``.
    """
    flip = rng.random(len(images)) < flip_prob
    images = np.array(images, dtype=np.float64)
    targets = np.array(targets, dtype=np.float64)
    images[flip] = images[flip][..., ::-1]
    if kind == "regression":
        targets[flip, 0] = 1.0 - targets[flip, 0]
    else:
        t = targets[flip]
        t[..., 1] = np.where(t[..., 0] > 0, 1.0 - t[..., 1] - t[..., 3], t[..., 1])
        targets[flip] = t
    return normalize(images, mean, std), targets
