"""Photometric training losses.

The feature loss takes any extractor mapping an image to a list of feature
maps; the shipped default is a 4-level average-pool pyramid where each level
contributes the low-passed image plus its forward-difference gradient maps.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import torch
import torch.nn.functional as F

logger = logging.getLogger(__name__)

LAMBDA_PERCEPTUAL = 0.1
LAMBDA_SCALING = 0.1

Extractor = Callable[[torch.Tensor], Sequence[torch.Tensor]]


def loss_rgb(rendered: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over pixels and channels."""
    return (rendered - target).abs().mean()


def pyramid_extractor(image: torch.Tensor, levels: int = 4) -> list[torch.Tensor]:
    """Default feature maps for an (H, W, C) image.

    Per level: the pooled image, then x and y forward differences. Constant
    shifts show up only in the image maps, structure only in the gradients.
    """
    cur = image.permute(2, 0, 1).unsqueeze(0)
    maps = []
    for level in range(levels):
        maps.append(cur)
        maps.append(cur[..., :, 1:] - cur[..., :, :-1])
        maps.append(cur[..., 1:, :] - cur[..., :-1, :])
        if level + 1 < levels:
            if cur.shape[-1] < 2 or cur.shape[-2] < 2:
                break
            cur = F.avg_pool2d(cur, 2)
    return maps


def loss_perceptual(
    rendered: torch.Tensor, target: torch.Tensor, extractor: Extractor = pyramid_extractor
) -> torch.Tensor:
    """Sum over feature maps of mean absolute difference."""
    fa = extractor(rendered)
    fb = extractor(target)
    total = rendered.new_zeros(())
    for a, b in zip(fa, fb):
        total = total + (a - b).abs().mean()
    return total


def loss_scaling(log_scale: torch.Tensor) -> torch.Tensor:
    """Mean Euclidean norm of exp(log_scale), (N, 3) -> scalar.

    Penalizes splat growth; an empty set contributes nothing.
    """
    if log_scale.shape[0] == 0:
        logger.warning("scaling loss over zero primitives, returning 0")
        return log_scale.new_zeros(())
    return torch.exp(log_scale).norm(dim=-1).mean()


def total_loss(
    rgb: torch.Tensor,
    perceptual: torch.Tensor | None = None,
    scaling: torch.Tensor | None = None,
    lambda_perceptual: float = LAMBDA_PERCEPTUAL,
    lambda_scaling: float = LAMBDA_SCALING,
) -> torch.Tensor:
    total = rgb
    if perceptual is not None:
        total = total + lambda_perceptual * perceptual
    if scaling is not None:
        total = total + lambda_scaling * scaling
    return total
