"""Loss stack, toy model and trainer for assistant and student distillation."""
from .gradcheck import grad_check
from .losses import (
    LogitTensor,
    LossWeights,
    TokenizedExample,
    kl_divergence,
    masked_token_nll,
    multitask_loss,
    objective,
    soft_losses,
    temp_softmax,
    total_student_loss,
)
from .model import ToyModel
from .train import ASSISTANT, DESK_CONFIG, STUDENT, PlateauHalving, TrainConfig, TrainingDivergedError, accuracy, train

__all__ = [
    "ASSISTANT", "DESK_CONFIG", "STUDENT", "LogitTensor", "LossWeights", "PlateauHalving", "TokenizedExample", "ToyModel",
    "TrainConfig", "TrainingDivergedError", "accuracy", "grad_check", "kl_divergence", "masked_token_nll",
    "multitask_loss", "objective", "soft_losses", "temp_softmax", "total_student_loss", "train",
]
