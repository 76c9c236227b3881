from dataclasses import dataclass, replace

import numpy as np

from ..errors import ShapeError


@dataclass
class ImageSample:
    """A grayscale image with its tongue and vein masks (values in {0, 1})."""

    image: np.ndarray
    tongue_label: np.ndarray
    vein_label: np.ndarray
    id: str = ""

    def __post_init__(self):
        shapes = {self.image.shape, self.tongue_label.shape, self.vein_label.shape}
        if len(shapes) != 1 or self.image.ndim != 2:
            raise ShapeError(
                f"sample {self.id!r}: image/tongue/vein shapes differ "
                f"{self.image.shape} {self.tongue_label.shape} {self.vein_label.shape}"
            )

    @property
    def shape(self):
        return self.image.shape

    def label(self, target: str) -> np.ndarray:
        if target == "tongue":
            return self.tongue_label
        if target == "vein":
            return self.vein_label
        raise KeyError(target)

    def with_image(self, image) -> "ImageSample":
        return replace(self, image=image)
