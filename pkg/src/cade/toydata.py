"""Procedural shape/texture images standing in for small natural-image datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Class bank. Source and target datasets draw disjoint subsets of these.
SHAPES = (
    "square",
    "frame",
    "disk",
    "ring",
    "plus",
    "cross",
    "hstripes",
    "vstripes",
    "triangle",
    "checker",
)


@dataclass(frozen=True)
class ToyConfig:
    classes: tuple = (0, 2, 4, 6, 8)  # indices into SHAPES
    image_size: int = 12
    channels: int = 1
    noise: float = 0.15
    jitter: int = 3

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        if len(self.classes) < 2:
            raise ConfigError("need at least two classes", "classes")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError("class indices must be distinct", "classes")
        if any(c < 0 or c >= len(SHAPES) for c in self.classes):
            raise ConfigError(f"class indices must lie in [0, {len(SHAPES)})", "classes")
        if self.image_size < 8:
            raise ConfigError("image_size must be >= 8", "image_size")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1", "channels")

    @property
    def num_classes(self):
        return len(self.classes)


def _mask(shape, size, cy, cx, r, phase):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    if shape == "square":
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if shape == "frame":
        m = np.maximum(np.abs(dy), np.abs(dx))
        return (m <= r) & (m > r - 1.5)
    if shape == "disk":
        return dy**2 + dx**2 <= r**2
    if shape == "ring":
        d = np.sqrt(dy**2 + dx**2)
        return (d <= r) & (d > r - 1.6)
    if shape == "plus":
        return ((np.abs(dy) <= 0.9) & (np.abs(dx) <= r)) | ((np.abs(dx) <= 0.9) & (np.abs(dy) <= r))
    if shape == "cross":
        box = (np.abs(dy) <= r) & (np.abs(dx) <= r)
        return box & ((np.abs(dy - dx) <= 1.0) | (np.abs(dy + dx) <= 1.0))
    if shape == "hstripes":
        return ((np.floor(yy + phase) % 4) < 2) & (np.abs(dy) <= r + 1) & (np.abs(dx) <= r + 1)
    if shape == "vstripes":
        return ((np.floor(xx + phase) % 4) < 2) & (np.abs(dy) <= r + 1) & (np.abs(dx) <= r + 1)
    if shape == "triangle":
        return (dy <= r) & (dy >= -r) & (np.abs(dx) <= (dy + r) / 2)
    if shape == "checker":
        box = (np.abs(dy) <= r + 1) & (np.abs(dx) <= r + 1)
        return box & (((np.floor((yy + phase) / 2) + np.floor((xx + phase) / 2)) % 2) == 0)
    raise ConfigError(f"unknown shape {shape!r}", "classes")


def render(config: ToyConfig, labels, rng: np.random.Generator) -> np.ndarray:
    """Render one image per label; returns float32 ``(N, C, H, W)`` in [0, 1]."""
    size = config.image_size
    n = len(labels)
    out = np.empty((n, config.channels, size, size), dtype=np.float32)
    centre = (size - 1) / 2
    for i, label in enumerate(labels):
        shape = SHAPES[config.classes[label]]
        cy = centre + rng.integers(-config.jitter, config.jitter + 1)
        cx = centre + rng.integers(-config.jitter, config.jitter + 1)
        r = rng.uniform(0.22, 0.34) * size
        phase = rng.integers(0, 4)
        mask = _mask(shape, size, cy, cx, r, phase).astype(np.float64)
        fg = rng.uniform(0.55, 1.0)
        bg = rng.uniform(0.0, 0.25)
        img = bg + (fg - bg) * mask
        tint = rng.uniform(0.7, 1.0, size=config.channels)
        img = tint[:, None, None] * img[None]
        img = img + rng.normal(0.0, config.noise, size=img.shape)
        out[i] = np.clip(img, 0.0, 1.0)
    return out


def generate(config: ToyConfig, n: int, rng: np.random.Generator):
    """Balanced labels (round-robin, then shuffled) and their rendered images."""
    if n < 1:
        raise ConfigError("sample count must be positive", "n")
    labels = rng.permutation(np.arange(n) % config.num_classes).astype(np.int64)
    return render(config, labels, rng), labels
