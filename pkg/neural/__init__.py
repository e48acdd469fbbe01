from .autodiff import Tape, Var
from .layers import GaussianParams, GruCell, Linear, MlpHead, Parameter, TapeContext

from .checkpoint import load_checkpoint, save_checkpoint
from .optim import Adam

from .neural_garch import FilterState, GammaState, ModelConfig, NeuralGarch, RollingPrediction
from .trainer import EpochRecord, Trainer, TrainResult

__all__ = [
    "Adam",
    "EpochRecord",
    "FilterState",
    "GammaState",
    "GaussianParams",
    "GruCell",
    "Linear",
    "MlpHead",
    "ModelConfig",
    "NeuralGarch",
    "Parameter",
    "RollingPrediction",
    "Tape",
    "TapeContext",
    "Trainer",
    "TrainResult",
    "Var",
    "load_checkpoint",
    "save_checkpoint",
]
