from .gradcheck import GradCheckReport, grad_check
from .layers import (Conv1D, Dense, Dropout, EncoderBlock, GlobalAveragePool1D, Layer, LayerNorm,
                     MaxPool1D, MultiHeadSelfAttention, ReLU, Sequential, Sigmoid, TimeDistributed,
                     sigmoid, softmax)
from .losses import bce_loss
from .optim import AdamState, adam_step
from .training import TrainConfig, TrainedModel, fit, predict_proba

__all__ = [
    "Conv1D", "Dense", "Dropout", "EncoderBlock", "GlobalAveragePool1D", "Layer", "LayerNorm",
    "MaxPool1D", "MultiHeadSelfAttention", "ReLU", "Sequential", "Sigmoid", "TimeDistributed",
    "sigmoid", "softmax", "bce_loss", "AdamState", "adam_step", "TrainConfig", "TrainedModel",
    "fit", "predict_proba", "GradCheckReport", "grad_check",
]
