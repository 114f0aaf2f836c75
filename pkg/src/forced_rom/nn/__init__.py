from .autodiff import Tensor, backward, concat, grad, mse, no_grad, relu
from .layers import AffineLayer, Mlp, mlp_forward
from .optim import Adam, EarlyStopping, PlateauScheduler, early_stop_step, scheduler_step

__all__ = [
    "Tensor", "backward", "concat", "grad", "mse", "no_grad", "relu",
    "AffineLayer", "Mlp", "mlp_forward",
    "Adam", "EarlyStopping", "PlateauScheduler", "early_stop_step", "scheduler_step",
]
