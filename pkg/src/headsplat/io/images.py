"""PNG boundary: 8-bit sRGB on disk, linear float tensors in memory."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import DataError

SRGB_LINEAR_KNEE = 0.0031308
SRGB_ENCODED_KNEE = 0.04045


def linear_to_srgb(x: torch.Tensor) -> torch.Tensor:
    x = x.clamp(0.0, 1.0)
    low = 12.92 * x
    high = 1.055 * x.clamp_min(SRGB_LINEAR_KNEE) ** (1.0 / 2.4) - 0.055
    return torch.where(x <= SRGB_LINEAR_KNEE, low, high)


def srgb_to_linear(x: torch.Tensor) -> torch.Tensor:
    x = x.clamp(0.0, 1.0)
    low = x / 12.92
    high = ((x + 0.055) / 1.055) ** 2.4
    return torch.where(x <= SRGB_ENCODED_KNEE, low, high)


def png_bytes(linear: torch.Tensor) -> bytes:
    """Encode an (H, W, 3) linear image in [0, 1] as an 8-bit sRGB PNG."""
    if linear.dim() != 3 or linear.shape[-1] != 3:
        raise DataError(f"expected (H, W, 3) image, got {tuple(linear.shape)}")
    encoded = linear_to_srgb(linear.detach().to(torch.float64))
    u8 = (encoded * 255.0).round().clamp(0, 255).to(torch.uint8).numpy()
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_image(path: str | Path, linear: torch.Tensor) -> None:
    """Write an (H, W, 3) linear image in [0, 1] as 8-bit sRGB PNG."""
    Path(path).write_bytes(png_bytes(linear))


def read_image(path: str | Path) -> torch.Tensor:
    """Read a PNG into an (H, W, 3) linear float64 tensor in [0, 1]."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"image not found: {p}")
    arr = np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(torch.from_numpy(arr))


def write_mask(path: str | Path, mask: torch.Tensor) -> None:
    u8 = (mask.detach().bool().numpy().astype(np.uint8)) * 255
    Image.fromarray(u8, mode="L").save(str(path))


def read_mask(path: str | Path) -> torch.Tensor:
    p = Path(path)
    if not p.exists():
        raise DataError(f"mask not found: {p}")
    arr = np.asarray(Image.open(p).convert("L"))
    return torch.from_numpy(arr >= 128)
