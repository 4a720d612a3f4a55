from .batch import TrainingBatch, build_training_batch
from .inference import PreviousFrame, postprocess, predict_iterative
from .losses import classification_loss, gradient_check, loss_and_gradients, regression_loss, total_loss
from .model import HeadParams, Prediction, forward, forward_batch
from .optim import adam_step, backward_and_step
from .temporal import FUSION_STRATEGIES, fuse_temporal

__all__ = [
    "FUSION_STRATEGIES",
    "HeadParams",
    "Prediction",
    "PreviousFrame",
    "TrainingBatch",
    "adam_step",
    "backward_and_step",
    "build_training_batch",
    "classification_loss",
    "forward",
    "forward_batch",
    "fuse_temporal",
    "gradient_check",
    "loss_and_gradients",
    "postprocess",
    "predict_iterative",
    "regression_loss",
    "total_loss",
]
