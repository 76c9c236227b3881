from .augment import (
    BraSwitch,
    augment_variants,
    bra_combine,
    expand_epoch,
    hflip,
    random_roi_crop,
    roi_crop_box,
    rotate,
)
from .folds import FoldSplit, kfold_split
from .io import load_dataset, load_folds, save_dataset
from .pgm import read_pgm, write_pgm
from .preprocess import gcn_normalize
from .sample import ImageSample
from .synth import synth_generate

__all__ = [
    "BraSwitch", "FoldSplit", "ImageSample", "augment_variants", "bra_combine", "expand_epoch",
    "gcn_normalize", "hflip", "kfold_split", "load_dataset", "load_folds", "random_roi_crop", "read_pgm",
    "roi_crop_box", "rotate", "save_dataset", "synth_generate", "write_pgm",
]
