from .adam import Adam, AdamState, ParamGroup, adam_step
from .losses import loss_perceptual, loss_rgb, loss_scaling, pyramid_extractor, total_loss
from .metrics import psnr, silhouette_iou, ssim
from .training import OptimConfig, fit_appearance, fit_shape, init_gaussians, write_stats

__all__ = [
    "OptimConfig",
    "fit_appearance",
    "fit_shape",
    "init_gaussians",
    "write_stats",
    "Adam",
    "AdamState",
    "ParamGroup",
    "adam_step",
    "loss_perceptual",
    "loss_rgb",
    "loss_scaling",
    "pyramid_extractor",
    "total_loss",
    "psnr",
    "silhouette_iou",
    "ssim",
]
