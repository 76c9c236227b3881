"""Geometric augmentation, Backward Residual Augmentation and random RoI crop."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from ..errors import ConfigError, ShapeError
from .sample import ImageSample

ROTATION_ANGLES = (10, 20, 30)
VARIANT_NAMES = ("orig", "rot10", "rot20", "rot30", "hflip")


def _rotate_raster(arr: np.ndarray, degrees: float, order: int) -> np.ndarray:
    out = ndimage.rotate(arr, degrees, reshape=False, order=order, mode="constant", cval=0.0, prefilter=False)
    return out.astype(arr.dtype, copy=False)


def rotate(sample: ImageSample, degrees: float) -> ImageSample:
    """Rotate about the image center: bilinear image, nearest-neighbour labels, zero fill."""
    if degrees == 0:
        return ImageSample(sample.image.copy(), sample.tongue_label.copy(), sample.vein_label.copy(), sample.id)
    image = sample.image
    if not np.issubdtype(image.dtype, np.floating):
        image = image.astype(np.float32)
    return ImageSample(
        _rotate_raster(image, degrees, order=1),
        _rotate_raster(sample.tongue_label, degrees, order=0),
        _rotate_raster(sample.vein_label, degrees, order=0),
        f"{sample.id}@rot{degrees:g}",
    )


def hflip(sample: ImageSample) -> ImageSample:
    suffix = "@hflip"
    new_id = sample.id[: -len(suffix)] if sample.id.endswith(suffix) else sample.id + suffix
    return ImageSample(
        sample.image[:, ::-1].copy(),
        sample.tongue_label[:, ::-1].copy(),
        sample.vein_label[:, ::-1].copy(),
        new_id,
    )


def augment_variants(sample: ImageSample) -> list:
    """The original followed by its four deterministic augmentations."""
    return [sample] + [rotate(sample, a) for a in ROTATION_ANGLES] + [hflip(sample)]


def expand_epoch(samples: Sequence[ImageSample], rng: np.random.Generator, mode: str = "expand",
                 variant_fn: Callable[[ImageSample], list] = augment_variants) -> list:
    """Shuffle the dataset, then emit augmented samples in that order.

    ``mode="expand"`` emits all five variants of every image (5x the input
    length); ``mode="cycle"`` emits one variant per image, cycling through the
    five by shuffled position; ``mode="plain"`` emits the originals only.
    """
    if len(samples) == 0:
        raise ConfigError("cannot build an epoch from an empty dataset")
    if mode not in ("expand", "cycle", "plain"):
        raise ConfigError(f"unknown epoch mode {mode!r}")
    order = rng.permutation(len(samples))
    stream = []
    for pos, idx in enumerate(order):
        if mode == "plain":
            stream.append(samples[idx])
            continue
        variants = variant_fn(samples[idx])
        if mode == "expand":
            stream.extend(variants)
        else:
            stream.append(variants[pos % len(variants)])
    return stream


# ----------------------------------------------------------------------
# Backward Residual Augmentation


@dataclass(frozen=True)
class BraSwitch:
    """Remainder of a random integer mod 3: 0 adds the mask, 1 subtracts it, 2 keeps the raw image."""

    value: int

    ADD = 0
    SUBTRACT = 1
    KEEP = 2

    def __post_init__(self):
        if self.value not in (0, 1, 2):
            raise ConfigError(f"BRA switch must be 0, 1 or 2, got {self.value}")

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "BraSwitch":
        return cls(int(rng.integers(0, 2 ** 31)) % 3)


def bra_combine(image, prediction, switch) -> np.ndarray:
    """Mask the image with the tongue prediction and add, subtract or skip it."""
    image = np.asarray(image)
    prediction = np.asarray(prediction)
    if image.shape != prediction.shape:
        raise ShapeError(f"BRA image {image.shape} and prediction {prediction.shape} differ")
    value = switch.value if isinstance(switch, BraSwitch) else BraSwitch(int(switch)).value
    dtype = image.dtype if np.issubdtype(image.dtype, np.floating) else np.float32
    image = image.astype(dtype, copy=False)
    mask = image * prediction.astype(dtype, copy=False)
    if value == BraSwitch.ADD:
        return image + mask
    if value == BraSwitch.SUBTRACT:
        return image - mask
    return image.copy()


# ----------------------------------------------------------------------
# random RoI crop


def label_bbox(label) -> tuple:
    """Tight (rmin, cmin, rmax_exclusive, cmax_exclusive) of the positive pixels."""
    label = np.asarray(label)
    rows = np.flatnonzero(label.any(axis=1))
    cols = np.flatnonzero(label.any(axis=0))
    if rows.size == 0:
        raise ConfigError("random RoI crop needs a label with at least one positive pixel")
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def roi_crop_box(label, rng) -> tuple:
    """Draw a crop box that always contains the label's tight bounding box.

    In normalized coordinates the tight box is [ymin, xmin, ymax, xmax]; the
    top-left corner is drawn uniformly from [0, ymin] x [0, xmin] and the
    bottom-right from [ymax, 1] x [xmax, 1].  Each draw is the fraction of the
    margin taken, so all-zero draws give the tight box.  Returned as pixel
    bounds (r0, c0, r1, c1) with r1/c1 exclusive.
    """
    h, w = np.shape(label)
    rmin, cmin, rmax, cmax = label_bbox(label)
    ymin, xmin, ymax, xmax = rmin / h, cmin / w, rmax / h, cmax / w
    u = rng.random(4)
    y0 = (1.0 - u[0]) * ymin
    x0 = (1.0 - u[1]) * xmin
    y1 = ymax + u[2] * (1.0 - ymax)
    x1 = xmax + u[3] * (1.0 - xmax)
    r0 = min(int(np.floor(y0 * h)), rmin)
    c0 = min(int(np.floor(x0 * w)), cmin)
    r1 = max(min(int(np.ceil(y1 * h)), h), rmax)
    c1 = max(min(int(np.ceil(x1 * w)), w), cmax)
    return r0, c0, r1, c1


def resize(arr, shape, order: int) -> np.ndarray:
    """Resample to ``shape`` with pixel-center alignment (order 1 bilinear, 0 nearest)."""
    arr = np.asarray(arr)
    h, w = arr.shape
    oh, ow = shape
    if (h, w) == (oh, ow):
        return arr.copy()
    ry = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    rx = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    if order == 0:
        iy = np.clip(np.floor(ry + 0.5).astype(int), 0, h - 1)
        ix = np.clip(np.floor(rx + 0.5).astype(int), 0, w - 1)
        return arr[np.ix_(iy, ix)].copy()
    yy, xx = np.meshgrid(ry, rx, indexing="ij")
    src = arr.astype(np.float32) if not np.issubdtype(arr.dtype, np.floating) else arr
    return ndimage.map_coordinates(src, [yy, xx], order=1, mode="nearest", prefilter=False).astype(src.dtype)


def random_roi_crop(image, label, rng, out_shape=None):
    """Crop image and label to a random box around the label, then resize back.

    ``out_shape`` defaults to the input shape.  The label is resized by nearest
    neighbour and re-binarized at 0.5.
    """
    image = np.asarray(image)
    label = np.asarray(label)
    if image.shape != label.shape:
        raise ShapeError(f"crop image {image.shape} and label {label.shape} differ")
    r0, c0, r1, c1 = roi_crop_box(label, rng)
    out_shape = tuple(out_shape) if out_shape is not None else image.shape
    img = resize(image[r0:r1, c0:c1], out_shape, order=1)
    lab = (resize(label[r0:r1, c0:c1].astype(np.float32), out_shape, order=0) >= 0.5).astype(label.dtype)
    return img, lab
