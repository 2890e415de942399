from .checkpoint import load_network, save_network
from .layers import (BatchNorm, Conv2D, Dense, Dropout, Flatten, GlobalAvgPool, LayerSpec, Network,
                     ReLU, ShapeError, Softmax)
from .losses import cross_entropy_grad, cross_entropy_loss, mae_grad, mae_loss
from .optim import Adadelta, AdadeltaState, adadelta_step
from .training import OFFLINE, ONLINE, History, SupervisedObjective, TrainConfig, train

__all__ = [
    "Adadelta", "AdadeltaState", "BatchNorm", "Conv2D", "Dense", "Dropout", "Flatten", "GlobalAvgPool",
    "History", "LayerSpec", "Network", "OFFLINE", "ONLINE", "ReLU", "ShapeError", "Softmax",
    "SupervisedObjective", "TrainConfig", "adadelta_step", "cross_entropy_grad", "cross_entropy_loss",
    "load_network", "mae_grad", "mae_loss", "save_network", "train",
]
