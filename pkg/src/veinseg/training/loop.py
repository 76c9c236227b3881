"""One training round (tongue or vein) with validation-driven early stopping."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import rng as rngmod
from ..data.augment import augment_variants, expand_epoch
from ..errors import ConfigError, NumericError
from ..evaluation import threshold_sweep
from ..nn.tensor import Tensor
from ..unet import UNet, build, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .losses import total_loss
from .optim import make_optimizer
from .pipeline import EVAL, TRAIN, SamplePipeline, normalize_sample, predict_probabilities

log = logging.getLogger(__name__)


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = -1.0
    init_digest: str = ""
    tongue_digest: str = ""
    bra_model_digests: tuple = ()
    stopped_early: bool = False
    seconds: float = 0.0

    def jsonl_lines(self):
        for rec in self.steps:
            yield json.dumps(rec)
        for rec in self.epochs:
            yield json.dumps(rec)

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for line in self.jsonl_lines():
                fh.write(line + "\n")

    def losses(self, key: str = "total") -> np.ndarray:
        return np.array([r[key] for r in self.steps])


def prepare_model(config: TrainConfig, tongue_ckpt: Optional[bytes] = None) -> UNet:
    """Fresh weights from the seed's init stream, or the tongue checkpoint for a retrain."""
    if config.strategy == "retrain_vein" and tongue_ckpt is None:
        raise ConfigError("retrain_vein needs the round-1 tongue checkpoint")
    model = build(config.unet_config(), rngmod.stream(config.seed, "init"))
    if config.strategy == "retrain_vein":
        load_checkpoint(model, tongue_ckpt)
    return model


def evaluate_model(model, samples, target: str, pooled: bool = False):
    """Threshold sweep over already-normalized samples, no augmentation."""
    images = [s.image for s in samples]
    probs = predict_probabilities(model, images)
    return threshold_sweep(probs, [s.label(target) for s in samples], pooled=pooled)


def train_round(dataset: dict, fold, config: TrainConfig, tongue_ckpt: Optional[bytes] = None,
                model: Optional[UNet] = None, on_step: Optional[Callable] = None,
                pipeline_cls=SamplePipeline):
    """Train one round and return (best checkpoint bytes, TrainLog).

    ``dataset`` maps ids to raw ImageSamples; ``fold`` is a FoldSplit.  Each
    epoch shuffles and augments the training ids, optionally applies BRA
    (using a frozen copy of the tongue model) and random RoI crop per sample,
    steps the optimizer on batches of ``config.batch_size``, then scores Max IoU
    on the validation ids.  The checkpoint with the best validation score is
    kept; training stops after ``early_stop_patience`` epochs without
    improvement.
    """
    started = time.time()
    if config.needs_tongue_checkpoint and tongue_ckpt is None:
        raise ConfigError(f"strategy {config.strategy} with bra={config.bra} needs a tongue checkpoint")
    if not fold.train_ids:
        raise ConfigError("fold has no training ids")
    missing = [i for i in list(fold.train_ids) + list(fold.val_ids) if i not in dataset]
    if missing:
        raise ConfigError(f"fold references unknown sample ids, e.g. {missing[0]!r}")

    train = [normalize_sample(dataset[i]) for i in fold.train_ids]
    val = [normalize_sample(dataset[i]) for i in fold.val_ids]
    cache = {s.id: augment_variants(s) for s in train}

    if model is None:
        model = prepare_model(config, tongue_ckpt)
    tlog = TrainLog(init_digest=digest(save_checkpoint(model)))
    if tongue_ckpt is not None:
        tlog.tongue_digest = digest(tongue_ckpt)

    streams = rngmod.streams(config.seed)
    bra_model = None
    if config.bra:
        bra_model = build(config.unet_config(), rngmod.stream(config.seed, "init"))
        load_checkpoint(bra_model, tongue_ckpt).freeze()
        bra_start = digest(save_checkpoint(bra_model))
    pipe = pipeline_cls(config.target, bra_model=bra_model, roi_crop=config.roi_crop,
                        resolution=config.train_resolution, bra_rng=streams["bra"], crop_rng=streams["crop"])
    opt = make_optimizer(config.optimizer, model.parameters(), config.learning_rate)

    best_ckpt = None
    since_best = 0
    step = 0
    bs = config.batch_size
    done = False
    for epoch in range(config.epochs):
        stream = expand_epoch(train, streams["data"], mode=config.epoch_mode, variant_fn=lambda s: cache[s.id])
        for start in range(0, len(stream) - bs + 1, bs):
            x, y = pipe.batch(stream[start:start + bs], TRAIN)
            pred = model.forward(Tensor(x), training=True, rng=streams["dropout"])
            total, ce, l2 = total_loss(model, pred, y)
            if not np.isfinite(total.data):
                raise NumericError(f"loss diverged at step {step}")
            opt.zero_grad()
            total.backward()
            opt.step()
            rec = {"step": step, "total": float(total.data), "ce": float(ce.data), "l2": float(l2.data)}
            tlog.steps.append(rec)
            if on_step is not None:
                on_step(rec)
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break

        report = evaluate_model(model, val, config.target, pooled=config.eval_pooled) if val else None
        metric = report.max_iou if report is not None else -float(np.mean([r["total"] for r in tlog.steps[-10:]]))
        improved = metric > tlog.best_metric or best_ckpt is None
        if improved:
            tlog.best_metric = metric
            tlog.best_epoch = epoch
            best_ckpt = save_checkpoint(model)
            since_best = 0
        else:
            since_best += 1
        tlog.epochs.append({"epoch": epoch, "val_max_iou": metric, "best": tlog.best_metric, "steps": step})
        log.info("epoch %d  loss %.4f  val max IoU %.4f  best %.4f", epoch, tlog.steps[-1]["total"], metric,
                 tlog.best_metric)
        if done:
            break
        if since_best >= config.early_stop_patience:
            tlog.stopped_early = True
            break

    if bra_model is not None:
        tlog.bra_model_digests = (bra_start, digest(save_checkpoint(bra_model)))
    tlog.seconds = time.time() - started
    return best_ckpt, tlog
