"""Self-supervised image denoising via blur-guided online noise extraction."""

from .filters import FilterSpec
from .image import Image, PatchSampler, clamp_01, image_to_tensor, load_image, \
    save_image, tensor_to_image
from .metrics import psnr, ssim
from .networks import DnNet, NENet, build_dnnet, build_nenet
from .noise import DegradedSample, NoiseSpec, transplant
from .tensor import Adam, Tensor
from .training import StepRecord, TrainConfig, TrainResult, denoise, train

__all__ = [
    "Adam", "DegradedSample", "DnNet", "FilterSpec", "Image", "NENet",
    "NoiseSpec", "PatchSampler", "StepRecord", "Tensor", "TrainConfig",
    "TrainResult", "build_dnnet", "build_nenet", "clamp_01", "denoise",
    "image_to_tensor", "load_image", "psnr", "save_image", "ssim",
    "tensor_to_image", "train", "transplant",
]
