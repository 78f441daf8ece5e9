"""Link-level MIMO image transmission laboratory.

A transformer-based joint source-channel codec for M x M MIMO channels, the
classical precoding/equalization front-end it rides on, and the
separation-based capacity-bound baseline it is measured against.
"""

from .channel import ChannelRealization, sample_channel, snr_to_noise_variance, transmit, verify_power
from .frontend import CsiMode, build_heatmap, capacity_closed_loop, capacity_open_loop, water_filling
from .linalg import RngStream, SvdFactors, complex_svd
from .metrics import psnr
from .model import ModelConfig, init_params, pack_symbols, patchify, unpack_symbols, unpatchify
from .optim import AdamState, ParameterStore, adam_step, load_checkpoint, save_checkpoint
from .pipeline import TrainSettings, evaluate_model, train, train_step, transmission

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "sample_channel",
    "snr_to_noise_variance",
    "transmit",
    "verify_power",
    "CsiMode",
    "build_heatmap",
    "capacity_closed_loop",
    "capacity_open_loop",
    "water_filling",
    "RngStream",
    "SvdFactors",
    "complex_svd",
    "psnr",
    "ModelConfig",
    "init_params",
    "pack_symbols",
    "patchify",
    "unpack_symbols",
    "unpatchify",
    "AdamState",
    "ParameterStore",
    "adam_step",
    "load_checkpoint",
    "save_checkpoint",
    "TrainSettings",
    "evaluate_model",
    "train",
    "train_step",
    "transmission",
    "__version__",
]
