from .model import (FallNetConfig, LatentStats, LossReport, decode, encode,
                    forward_vae, init_params, kl_divergence, loss,
                    loss_and_grads, reconstruction_error, reparameterize)
from .train import AdamState, TrainingAborted, stack_batch, train_epochs, train_step

__all__ = [
    "FallNetConfig", "LatentStats", "LossReport", "decode", "encode",
    "forward_vae", "init_params", "kl_divergence", "loss", "loss_and_grads",
    "reconstruction_error", "reparameterize", "AdamState", "TrainingAborted",
    "stack_batch", "train_epochs", "train_step",
]
