from .tensor import Tensor, DEFAULT_DTYPE, CHECK_DTYPE
from .layers import (
    BatchNorm,
    Concat,
    Conv2d,
    Conv3d,
    Dense,
    Dropout,
    Flatten,
    GlobalAveragePool,
    Layer,
    LSTM,
    MaxPool2d,
    MaxPool3d,
    ReLU,
    Sigmoid,
)
from .gradcheck import gradient_check, model_gradient_check, numeric_gradient, relative_error
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "DEFAULT_DTYPE", "CHECK_DTYPE",
    "Layer", "Conv2d", "Conv3d", "BatchNorm", "ReLU", "Sigmoid",
    "MaxPool2d", "MaxPool3d", "Dense", "LSTM", "GlobalAveragePool",
    "Dropout", "Flatten", "Concat",
    "gradient_check", "model_gradient_check", "numeric_gradient", "relative_error",
    "load_checkpoint", "save_checkpoint",
]
