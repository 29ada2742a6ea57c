from .model import BeamFusionNet, ModelConfig, forward, init_params
from .optim import AdamW
from .train import TrainConfig, TrainResult, accuracy, gradient_check, stratified_split, train

__all__ = [
    "AdamW",
    "BeamFusionNet",
    "ModelConfig",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "forward",
    "gradient_check",
    "init_params",
    "stratified_split",
    "train",
]
