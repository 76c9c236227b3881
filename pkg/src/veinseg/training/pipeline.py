"""Turns ImageSamples into network batches.

Training batches may get Backward Residual Augmentation and a random RoI
crop; evaluation batches never do.  Both per-sample augmentations go through
:meth:`SamplePipeline.apply_bra` / :meth:`SamplePipeline.apply_crop`, which
see the sample (and hence its id).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..data.augment import BraSwitch, bra_combine, random_roi_crop, resize
from ..data.preprocess import gcn_normalize
from ..data.sample import ImageSample
from ..errors import ConfigError
from ..nn.tensor import Tensor, no_grad

TRAIN, EVAL = "train", "eval"


def normalize_sample(sample: ImageSample) -> ImageSample:
    return ImageSample(gcn_normalize(sample.image), sample.tongue_label, sample.vein_label, sample.id)


def predict_probabilities(model, images, batch_size: int = 2) -> list:
    """Inference-mode probability maps for a list of normalized (H, W) images."""
    out = []
    with no_grad():
        for i in range(0, len(images), batch_size):
            chunk = np.stack([np.asarray(im, dtype=np.float32) for im in images[i:i + batch_size]])[:, None]
            probs = model.forward(Tensor(chunk), training=False).data
            out.extend(p[0].copy() for p in probs)
    return out


class SamplePipeline:
    def __init__(self, target: str, bra_model=None, roi_crop: bool = False, resolution=None,
                 bra_rng: Optional[np.random.Generator] = None, crop_rng: Optional[np.random.Generator] = None):
        if target not in ("tongue", "vein"):
            raise ConfigError(f"unknown target {target!r}")
        self.target = target
        self.bra_model = bra_model
        self.roi_crop = roi_crop
        self.resolution = tuple(resolution) if resolution is not None else None
        self.bra_rng = bra_rng
        self.crop_rng = crop_rng
        self.switch_counts = [0, 0, 0]
        self.skipped_crops = 0

    def _fit(self, image, label):
        if self.resolution is None or image.shape == self.resolution:
            return image, label
        return resize(image, self.resolution, order=1), resize(label, self.resolution, order=0)

    def apply_bra(self, sample: ImageSample, image: np.ndarray, prediction: np.ndarray) -> np.ndarray:
        switch = BraSwitch.draw(self.bra_rng)
        self.switch_counts[switch.value] += 1
        return bra_combine(image, prediction, switch)

    def apply_crop(self, sample: ImageSample, image: np.ndarray, label: np.ndarray):
        if not label.any():
            # rotation can in principle push every positive out of frame
            self.skipped_crops += 1
            return image, label
        return random_roi_crop(image, label, self.crop_rng, out_shape=self.resolution or image.shape)

    def batch(self, samples, mode: str):
        """Stack samples into (N, 1, H, W) image and label arrays."""
        if mode not in (TRAIN, EVAL):
            raise ConfigError(f"unknown pipeline mode {mode!r}")
        images = [np.asarray(s.image, dtype=np.float32) for s in samples]
        labels = [np.asarray(s.label(self.target), dtype=np.float32) for s in samples]
        if mode == TRAIN and self.bra_model is not None:
            preds = predict_probabilities(self.bra_model, images, batch_size=len(images))
            images = [self.apply_bra(s, im, p) for s, im, p in zip(samples, images, preds)]
        if mode == TRAIN and self.roi_crop:
            pairs = [self.apply_crop(s, im, lab) for s, im, lab in zip(samples, images, labels)]
            images, labels = [p[0] for p in pairs], [p[1] for p in pairs]
        pairs = [self._fit(im, lab) for im, lab in zip(images, labels)]
        x = np.stack([p[0] for p in pairs]).astype(np.float32)[:, None]
        y = np.stack([p[1] for p in pairs]).astype(np.float32)[:, None]
        return x, y
