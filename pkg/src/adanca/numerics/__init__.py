"""Reverse-mode autodiff engine and the tensor primitives the model needs."""

from . import functional
from .fft import irfft2, radial_frequency, rfft2
from .functional import conv2d, depthwise_conv2d
from .gradcheck import finite_difference_check
from .kernels import BACKEND
from .module import BatchNorm, Conv2d, LayerNorm, Linear, Module, ModuleDict, ModuleList
from .rng import Rng
from .tensor import Parameter, Tensor, backward, no_grad

__all__ = [
    "BACKEND", "BatchNorm", "Conv2d", "LayerNorm", "Linear", "Module", "ModuleDict",
    "ModuleList", "Parameter", "Rng", "Tensor", "backward", "conv2d", "depthwise_conv2d",
    "finite_difference_check", "functional", "irfft2", "no_grad", "radial_frequency", "rfft2",
]
