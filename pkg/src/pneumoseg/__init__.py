"""Pneumothorax segmentation pipeline: U-Net training, RLE masks, serving."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, no_grad
from .model import ModelConfig, UNet, build, count_params
from .rle import decode as rle_decode
from .rle import encode as rle_encode

__all__ = [
    "Tensor", "backward", "no_grad",
    "ModelConfig", "UNet", "build", "count_params",
    "rle_decode", "rle_encode",
    "__version__",
]
