"""On-disk dataset layout: images/, tongue/, veins/ PGMs plus folds.json."""
import os

import numpy as np

from ..errors import FormatError
from .folds import folds_from_json, folds_to_json
from .pgm import load_pgm, save_pgm
from .sample import ImageSample

SUBDIRS = ("images", "tongue", "veins")


def save_dataset(root, samples, splits=None):
    for sub in SUBDIRS:
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    for s in samples:
        save_pgm(os.path.join(root, "images", f"{s.id}.pgm"), s.image)
        save_pgm(os.path.join(root, "tongue", f"{s.id}.pgm"), (s.tongue_label > 0).astype(np.uint8) * 255)
        save_pgm(os.path.join(root, "veins", f"{s.id}.pgm"), (s.vein_label > 0).astype(np.uint8) * 255)
    if splits is not None:
        with open(os.path.join(root, "folds.json"), "w") as fh:
            fh.write(folds_to_json(splits))


def load_dataset(root) -> dict:
    """Return {id: ImageSample} with labels mapped to {0, 1}."""
    img_dir = os.path.join(root, "images")
    if not os.path.isdir(img_dir):
        raise FileNotFoundError(f"no images/ directory under {root}")
    samples = {}
    for fname in sorted(os.listdir(img_dir)):
        if not fname.endswith(".pgm"):
            continue
        sid = fname[:-4]
        image = load_pgm(os.path.join(img_dir, fname))
        tongue = load_pgm(os.path.join(root, "tongue", fname))
        veins = load_pgm(os.path.join(root, "veins", fname))
        for name, lab in (("tongue", tongue), ("veins", veins)):
            if not np.isin(lab, (0, 255)).all():
                raise FormatError(f"{name}/{fname} is not a 0/255 mask")
        samples[sid] = ImageSample(image, (tongue > 0).astype(np.uint8), (veins > 0).astype(np.uint8), sid)
    return samples


def load_folds(root) -> list:
    with open(os.path.join(root, "folds.json")) as fh:
        return folds_from_json(fh.read())
