"""Synthetic near-infrared sublingual images.

Stand-in for the clinical images: a dark background, a bright elliptical
tongue, and two darker curved veins in the tongue's lower half.  The
background is kept close to vein intensity so that a vein cannot be found by
brightness alone; the model has to know where the tongue is.
"""
import numpy as np

from ..errors import ConfigError
from .sample import ImageSample

NOISE_SIGMA = 5.0


def _quadratic_curve(p0, p1, p2, n=200):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2


def _distance_to_polyline(yy, xx, pts):
    d2 = np.full(yy.shape, np.inf)
    for (y0, x0), (y1, x1) in zip(pts[:-1], pts[1:]):
        vy, vx = y1 - y0, x1 - x0
        seg = vy * vy + vx * vx
        t = np.clip(((yy - y0) * vy + (xx - x0) * vx) / max(seg, 1e-12), 0.0, 1.0)
        dy, dx = yy - (y0 + t * vy), xx - (x0 + t * vx)
        d2 = np.minimum(d2, dy * dy + dx * dx)
    return np.sqrt(d2)


def synth_sample(height: int, width: int, rng: np.random.Generator, sample_id: str = "") -> ImageSample:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    scale = min(height, width)

    cy = height * (0.5 + rng.uniform(-0.06, 0.06))
    cx = width * (0.5 + rng.uniform(-0.06, 0.06))
    ay = height * rng.uniform(0.28, 0.36)
    ax = width * rng.uniform(0.30, 0.40)
    theta = np.deg2rad(rng.uniform(-15, 15))
    cos, sin = np.cos(theta), np.sin(theta)
    # tongue-local coordinates: u across, v down
    u = (xx - cx) * cos + (yy - cy) * sin
    v = -(xx - cx) * sin + (yy - cy) * cos
    tongue = (u / ax) ** 2 + (v / ay) ** 2 <= 1.0

    radius = max(1.2, rng.uniform(0.028, 0.04) * scale)
    vein_dist = np.full(yy.shape, np.inf)
    for side in (-1.0, 1.0):
        start = np.array([ay * rng.uniform(0.02, 0.12), side * ax * rng.uniform(0.12, 0.22)])
        end = np.array([ay * rng.uniform(0.70, 0.85), side * ax * rng.uniform(0.22, 0.42)])
        bend = (start + end) / 2 + np.array([0.0, side * ax * rng.uniform(-0.12, 0.12)])
        pts = _quadratic_curve(start, bend, end, n=24)
        vein_dist = np.minimum(vein_dist, _distance_to_polyline(v, u, pts))
    veins = (vein_dist <= radius) & tongue & (v >= 0)

    tongue_level = rng.uniform(165, 195)
    vein_drop = rng.uniform(65, 90)
    background = rng.uniform(85, 110)
    img = np.full(yy.shape, background)
    img += rng.uniform(-10, 10) * (xx / width - 0.5) + rng.uniform(-10, 10) * (yy / height - 0.5)
    shade = 1.0 - 0.08 * ((u / ax) ** 2 + (v / ay) ** 2)
    img = np.where(tongue, tongue_level * shade, img)
    img = np.where(veins, tongue_level * shade - vein_drop, img)
    r2 = ((yy - height / 2) / (height / 2)) ** 2 + ((xx - width / 2) / (width / 2)) ** 2
    img *= 1.0 - 0.12 * r2
    img += rng.normal(0.0, NOISE_SIGMA, img.shape)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return ImageSample(img, tongue.astype(np.uint8), veins.astype(np.uint8), sample_id)


def synth_generate(count: int, height: int, width: int, seed: int = 0) -> list:
    """``count`` samples; sample i is drawn from its own generator seeded ``seed + i``."""
    if height % 16 or width % 16 or height <= 0 or width <= 0:
        raise ConfigError(f"synthetic size {height}x{width} must be a positive multiple of 16")
    if count < 1:
        raise ConfigError("count must be >= 1")
    return [synth_sample(height, width, np.random.default_rng(seed + i), f"s{i:03d}") for i in range(count)]
