import json
from dataclasses import asdict, dataclass
from typing import List

import numpy as np

from ..errors import ConfigError

N_FOLDS = 5
N_TEST = 6
N_TOTAL = 26


@dataclass
class FoldSplit:
    fold_index: int
    train_ids: List[str]
    val_ids: List[str]
    test_ids: List[str]

    def to_json(self) -> dict:
        return {"fold": self.fold_index, "train": list(self.train_ids), "val": list(self.val_ids),
                "test": list(self.test_ids)}

    @classmethod
    def from_json(cls, d: dict) -> "FoldSplit":
        return cls(int(d["fold"]), list(d["train"]), list(d["val"]), list(d["test"]))


def kfold_split(ids, rng: np.random.Generator, n_folds: int = N_FOLDS, n_test: int = N_TEST,
                expected_total=N_TOTAL) -> list:
    """Hold out a fixed test set, then rotate the validation block over the rest.

    With the defaults, 26 ids become 6 test ids shared by every fold and 20
    train/val ids cut into 5 blocks of 4; fold k validates on block k and
    trains on the other 16.
    """
    ids = list(ids)
    if expected_total is not None and len(ids) != expected_total:
        raise ConfigError(f"expected exactly {expected_total} ids, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ConfigError("ids must be unique")
    pool = len(ids) - n_test
    if pool < n_folds or pool % n_folds:
        raise ConfigError(f"{pool} train/val ids cannot be split into {n_folds} equal folds")
    order = [ids[i] for i in rng.permutation(len(ids))]
    trainval, test = order[:pool], sorted(order[pool:])
    block = pool // n_folds
    splits = []
    for k in range(n_folds):
        val = trainval[k * block:(k + 1) * block]
        train = trainval[:k * block] + trainval[(k + 1) * block:]
        splits.append(FoldSplit(k, train, val, list(test)))
    return splits


def folds_to_json(splits) -> str:
    return json.dumps([s.to_json() for s in splits], indent=2)


def folds_from_json(text: str) -> list:
    return [FoldSplit.from_json(d) for d in json.loads(text)]
