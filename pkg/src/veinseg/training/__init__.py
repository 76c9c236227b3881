from .config import STRATEGIES, STRATEGY_ROWS, TrainConfig
from .loop import TrainLog, evaluate_model, prepare_model, train_round
from .losses import cross_entropy_loss, l2_penalty, total_loss
from .matrix import MatrixResult, run_strategy_matrix
from .optim import SGD, Adam, make_optimizer
from .pipeline import SamplePipeline, normalize_sample, predict_probabilities

__all__ = [
    "Adam", "MatrixResult", "SGD", "STRATEGIES", "SamplePipeline", "STRATEGY_ROWS", "TrainConfig", "TrainLog",
    "cross_entropy_loss", "evaluate_model", "l2_penalty", "make_optimizer", "normalize_sample",
    "predict_probabilities", "prepare_model", "run_strategy_matrix", "total_loss", "train_round",
]
