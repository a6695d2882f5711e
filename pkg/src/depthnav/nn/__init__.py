"""Minimal neural-network substrate: layers with hand-derived gradients,
Adam, finite-difference gradient checking, and a binary checkpoint format."""

from .adam import AdamState, adam_step
from .checkpoint import Entry, load_checkpoint, save_checkpoint
from .gradcheck import max_param_error, numeric_gradient, relative_errors
from .layers import (
    Activation,
    Conv2d,
    Deconv2d,
    Dense,
    Flatten,
    GRUCell,
    Layer,
    LayerSpec,
    Reshape,
    Sequential,
    backward,
    conv_out_hw,
    forward,
    leaky_relu,
    lrelu_fingerprint,
    sample_latent,
    sample_latent_backward,
    sigmoid,
)

__all__ = [
    "Activation", "AdamState", "Conv2d", "Deconv2d", "Dense", "Entry", "Flatten",
    "GRUCell", "Layer", "LayerSpec", "Reshape", "Sequential", "adam_step", "backward",
    "conv_out_hw", "forward", "leaky_relu", "load_checkpoint", "lrelu_fingerprint", "max_param_error",
    "numeric_gradient", "relative_errors", "sample_latent", "sample_latent_backward",
    "save_checkpoint", "sigmoid",
]
