"""Metadata-conditioned diffusion generation of long time series with
parallel, stitched sliding-window sampling."""

__version__ = "0.1.0"

from .schedule import NoiseSchedule, linear_schedule, forward_noise_step, forward_noise_to
from .encoding import MetadataCodec, SignalScaler, cyclic_encode, encode_metadata, fit_scaler
from .dataset import (SeriesDataset, WindowSet, condition_to_mask, load_csv, make_windows,
                      merge_windows, parse_condition, random_mask, split_by_root, window_count)
from .denoiser import Checkpoint, Denoiser, DenoiserConfig, load_checkpoint, save_checkpoint, train
from .sampler import GenerationResult, SamplerConfig, generate
from .metrics import MetricConfig, acd, evaluate, masked_mse, xcorr_diff

__all__ = [
    "NoiseSchedule", "linear_schedule", "forward_noise_step", "forward_noise_to",
    "MetadataCodec", "SignalScaler", "cyclic_encode", "encode_metadata", "fit_scaler",
    "SeriesDataset", "WindowSet", "condition_to_mask", "load_csv", "make_windows",
    "merge_windows", "parse_condition", "random_mask", "split_by_root", "window_count",
    "Checkpoint", "Denoiser", "DenoiserConfig", "load_checkpoint", "save_checkpoint", "train",
    "GenerationResult", "SamplerConfig", "generate",
    "MetricConfig", "acd", "evaluate", "masked_mse", "xcorr_diff",
]
