from .losses import (LossConfig, UnrollConfig, eig_penalty, eig_penalty_gradient, eig_penalty_t,
                     loss_kae_onestep, loss_latent_onestep, loss_unrolled, make_unroll_batches, window_starts)
from .train import FAMILIES, POD_FAMILIES, StackSpec, TrainConfig, config_hash, log_digest, train

__all__ = [
    "LossConfig", "UnrollConfig", "eig_penalty", "eig_penalty_gradient", "eig_penalty_t",
    "loss_kae_onestep", "loss_latent_onestep", "loss_unrolled", "make_unroll_batches", "window_starts",
    "FAMILIES", "POD_FAMILIES", "StackSpec", "TrainConfig", "config_hash", "log_digest", "train",
]
