"""Image quality metrics: PSNR, SSIM, silhouette IoU."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from ..errors import DataError

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K = (0.01, 0.03)


def psnr(a: torch.Tensor, b: torch.Tensor, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for identical inputs."""
    if a.shape != b.shape:
        raise DataError(f"psnr shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    mse = float(((a.double() - b.double()) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(data_range**2 / mse))


def _gaussian_window(size: int, sigma: float, dtype, device) -> torch.Tensor:
    half = (size - 1) // 2
    x = torch.arange(-half, half + 1, dtype=dtype, device=device)
    w = torch.exp(-0.5 * (x / sigma) ** 2)
    w = w / w.sum()
    return torch.outer(w, w)


def ssim(
    a: torch.Tensor,
    b: torch.Tensor,
    data_range: float = 1.0,
    window_size: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
    k: tuple[float, float] = SSIM_K,
    return_map: bool = False,
):
    """Structural similarity over the window-valid interior.

    Inputs (H, W) or (H, W, C); the scalar is the per-channel map mean. With
    return_map=True also returns the (H-w+1, W-w+1, C) similarity map.
    """
    if a.shape != b.shape:
        raise DataError(f"ssim shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    squeeze = a.dim() == 2
    if squeeze:
        a = a.unsqueeze(-1)
        b = b.unsqueeze(-1)
    h, w, c = a.shape
    if h < window_size or w < window_size:
        raise DataError(f"ssim needs images of at least {window_size}px, got {h}x{w}")
    x = a.double().permute(2, 0, 1).unsqueeze(0)
    y = b.double().permute(2, 0, 1).unsqueeze(0)
    win = _gaussian_window(window_size, sigma, x.dtype, x.device)
    weight = win.expand(c, 1, window_size, window_size).contiguous()

    def blur(t):
        return F.conv2d(t, weight, groups=c)

    mu_x = blur(x)
    mu_y = blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    c1 = (k[0] * data_range) ** 2
    c2 = (k[1] * data_range) ** 2
    smap = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    value = float(smap.mean())
    if not return_map:
        return value
    out = smap[0].permute(1, 2, 0)
    if squeeze:
        out = out[..., 0]
    return value, out


def silhouette_iou(a: torch.Tensor, b: torch.Tensor) -> float:
    """Intersection over union of boolean masks; two empty masks count as 1."""
    if a.shape != b.shape:
        raise DataError(f"iou shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    a = a.bool()
    b = b.bool()
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union
