"""Sparse Attention Regression Network: factorized sparse convolution, masked
attention gating, a tanh/softmax output head trained with a symmetric KL loss,
and a standalone softmax-regression head with weight decay."""

from .conv import (
    ConvSpec,
    FactorizedKernel,
    direct_conv,
    factorize_kernel,
    sparse_forward,
    transform_input,
    transform_kernel,
    truncated_svd,
)
from .network import (
    SarnModel,
    TrainConfig,
    TrainHistory,
    dkl,
    gradients,
    init_model,
    kl,
    load_model,
    loss,
    model_from_dict,
    model_to_dict,
    output_head,
    predict,
    save_model,
    smooth_labels,
    softmax_reg_cost,
    softmax_reg_forward,
    sparse_attention,
    train,
)

__all__ = [
    "ConvSpec",
    "FactorizedKernel",
    "SarnModel",
    "TrainConfig",
    "TrainHistory",
    "direct_conv",
    "dkl",
    "factorize_kernel",
    "gradients",
    "init_model",
    "kl",
    "load_model",
    "loss",
    "model_from_dict",
    "model_to_dict",
    "output_head",
    "predict",
    "save_model",
    "smooth_labels",
    "softmax_reg_cost",
    "softmax_reg_forward",
    "sparse_attention",
    "sparse_forward",
    "train",
    "transform_input",
    "transform_kernel",
    "truncated_svd",
]
