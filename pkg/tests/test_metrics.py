import math

import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

from headsplat.errors import DataError
from headsplat.optim.metrics import psnr, silhouette_iou, ssim

F64 = torch.float64


def test_psnr_identical_hits_cap():
    a = torch.rand(16, 16, 3, dtype=F64, generator=torch.Generator().manual_seed(0))
    assert psnr(a, a) == 100.0


def test_psnr_known_mse():
    a = torch.zeros(10, 10, dtype=F64)
    b = torch.full((10, 10), 0.1, dtype=F64)
    assert abs(psnr(a, b) - 20.0) < 1e-12


def test_psnr_matches_formula():
    g = torch.Generator().manual_seed(1)
    a = torch.rand(8, 8, 3, dtype=F64, generator=g)
    b = torch.rand(8, 8, 3, dtype=F64, generator=g)
    mse = float(((a - b) ** 2).mean())
    assert abs(psnr(a, b) - (-10.0 * math.log10(mse))) < 1e-12


def test_psnr_shape_mismatch():
    with pytest.raises(DataError):
        psnr(torch.zeros(2, 2), torch.zeros(3, 3))


def test_ssim_identical_is_one():
    g = torch.Generator().manual_seed(2)
    a = torch.rand(20, 20, 3, dtype=F64, generator=g)
    assert abs(ssim(a, a) - 1.0) < 1e-12


@pytest.mark.parametrize("channels", [None, 3])
def test_ssim_matches_skimage(channels):
    rng = np.random.default_rng(3)
    shape = (24, 31) if channels is None else (24, 31, channels)
    a = rng.random(shape)
    b = np.clip(a + rng.normal(0, 0.1, shape), 0.0, 1.0)
    expected = structural_similarity(
        a,
        b,
        win_size=11,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
        data_range=1.0,
        channel_axis=None if channels is None else -1,
    )
    got = ssim(torch.from_numpy(a), torch.from_numpy(b))
    assert abs(got - expected) < 1e-7


def test_ssim_anticorrelated_binary_map_nonpositive():
    rng = np.random.default_rng(4)
    a = torch.from_numpy((rng.random((32, 32)) > 0.5).astype(np.float64))
    _, smap = ssim(a, 1.0 - a, return_map=True)
    assert float(smap.max()) <= 0.0


def test_ssim_rejects_tiny_images():
    with pytest.raises(DataError):
        ssim(torch.zeros(8, 8), torch.zeros(8, 8))


def test_iou_cases():
    a = torch.zeros(4, 4, dtype=torch.bool)
    a[:2] = True
    b = torch.zeros(4, 4, dtype=torch.bool)
    b[1:3] = True
    assert silhouette_iou(a, a) == 1.0
    assert silhouette_iou(a, ~a) == 0.0
    assert abs(silhouette_iou(a, b) - 4.0 / 12.0) < 1e-12
    empty = torch.zeros(4, 4, dtype=torch.bool)
    assert silhouette_iou(empty, empty) == 1.0
