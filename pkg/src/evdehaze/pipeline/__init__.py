from .ablation import COLUMNS, SAMPLERS, TOY_CONFIG, AblationRow, AblationTable, ablate, ablated_factor, events_grid
from .codec import LatentCodec
from .data import DataConfig, ToyPair, build_toy_dataset, load_dataset, save_dataset
from .metrics import psnr, ssim, total_loss
from .model import ModelConfig, ToyDenoiser
from .train import TrainConfig, TrainingError, dehaze, evaluate, load_model, split_dataset, train_toy
from .viz import colormap, visualize_feature

__all__ = [
    "COLUMNS", "SAMPLERS", "TOY_CONFIG", "AblationRow", "AblationTable", "ablate", "ablated_factor", "events_grid",
    "DataConfig", "LatentCodec", "ModelConfig", "ToyDenoiser", "ToyPair", "TrainConfig",
    "TrainingError", "build_toy_dataset", "colormap", "dehaze", "evaluate", "load_dataset",
    "load_model", "psnr", "save_dataset", "split_dataset", "ssim", "total_loss", "train_toy",
    "visualize_feature",
]
