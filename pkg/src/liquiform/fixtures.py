"""Deterministic synthetic images for tests, calibration and the toy dataset.

The bullseye is the concentric-ring target used to verify warp geometry:
its rings sit at known radii, so scaling factors can be read back off the
distorted image.  Toy portraits are smooth face-like compositions that
give the restoration networks learnable structure at desk scale.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np


def bullseye(size: int = 224, period: float = 24.0, channels: int = 3) -> np.ndarray:
    """Cosine rings about the image center, intensities in [0,1], float32."""
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    r = np.hypot(xx - c, yy - c)
    v = 0.5 + 0.5 * np.cos(2.0 * np.pi * r / period)
    img = np.repeat(v[:, :, None], channels, axis=2)
    return img.astype(np.float32)


def bullseye_file() -> Path:
    """Path of the committed 8-bit bullseye image (224x224, period 24)."""
    return Path(__file__).parent / "data" / "bullseye.png"


def disk_mask(size: int, radius: float,
              center: Optional[tuple[float, float]] = None) -> np.ndarray:
    """Boolean (H, W) mask of pixels within radius of the center."""
    cx, cy = center if center is not None else ((size - 1) / 2.0, (size - 1) / 2.0)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def toy_portrait(index: int, size: int = 64, seed: int = 0) -> np.ndarray:
    """One smooth synthetic portrait, float32 (size, size, 3) in [0,1].

    Composition: gradient-plus-stripes background, an elliptical head with
    a hair cap, two eyes and a mouth, all with soft edges and per-index
    randomized geometry and palette.  Fully determined by (index, seed).
    """
    rng = np.random.default_rng([seed, index])
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u = xx / (size - 1)
    v = yy / (size - 1)

    # background: tilted gradient with a low-amplitude stripe field
    ang = rng.uniform(0, 2 * np.pi)
    base = 0.35 + 0.4 * rng.random(3)
    tilt = (u - 0.5) * np.cos(ang) + (v - 0.5) * np.sin(ang)
    stripes = 0.06 * np.sin(2 * np.pi * rng.uniform(1.5, 4.0) * tilt
                            + rng.uniform(0, 2 * np.pi))
    img = np.empty((size, size, 3))
    for ch in range(3):
        img[:, :, ch] = base[ch] + 0.25 * tilt + stripes

    edge = 1.5 / size

    def ellipse_mask(cx, cy, ax, ay):
        d = np.hypot((u - cx) / ax, (v - cy) / ay)
        return _smoothstep((1.0 - d) / edge * ax)

    # head
    hx = 0.5 + rng.uniform(-0.04, 0.04)
    hy = 0.52 + rng.uniform(-0.04, 0.04)
    hax = rng.uniform(0.24, 0.32)
    hay = rng.uniform(0.32, 0.40)
    skin = np.array([0.78, 0.62, 0.50]) + rng.uniform(-0.08, 0.08, 3)
    head = ellipse_mask(hx, hy, hax, hay)
    img = img * (1 - head[:, :, None]) + head[:, :, None] * skin

    # hair cap: upper part of a slightly larger ellipse
    hair_color = rng.uniform(0.05, 0.35, 3) * np.array([1.0, 0.8, 0.6])
    cap = ellipse_mask(hx, hy - 0.02, hax * 1.08, hay * 1.05)
    cap = cap * _smoothstep(((hy - 0.12) - v) / 0.04 + 0.5)
    img = img * (1 - cap[:, :, None]) + cap[:, :, None] * hair_color

    # eyes: dark blobs mirrored about the face axis
    eye_dx = rng.uniform(0.10, 0.14)
    eye_y = hy - rng.uniform(0.04, 0.08)
    eye_s = rng.uniform(0.018, 0.028)
    for sx in (-1, 1):
        ex = hx + sx * eye_dx
        blob = np.exp(-(((u - ex) ** 2 + (v - eye_y) ** 2) / (2 * eye_s ** 2)))
        img *= (1 - 0.85 * blob[:, :, None])

    # mouth: soft dark bar below the eyes
    mx, my = hx, hy + rng.uniform(0.14, 0.20)
    mw, mh = rng.uniform(0.07, 0.11), rng.uniform(0.015, 0.03)
    bar = np.exp(-(((u - mx) / mw) ** 2 + ((v - my) / mh) ** 2))
    mouth_color = np.array([0.55, 0.15, 0.18])
    img = img * (1 - 0.8 * bar[:, :, None]) + 0.8 * bar[:, :, None] * mouth_color

    return np.clip(img, 0.0, 1.0).astype(np.float32)
