import math

import torch

from headsplat.optim.losses import (
    LAMBDA_PERCEPTUAL,
    LAMBDA_SCALING,
    loss_perceptual,
    loss_rgb,
    loss_scaling,
    pyramid_extractor,
    total_loss,
)

F64 = torch.float64


def test_rgb_loss_trivial_pairs():
    a = torch.zeros(8, 8, 3, dtype=F64)
    assert float(loss_rgb(a, a)) == 0.0
    assert float(loss_rgb(a, torch.ones_like(a))) == 1.0


def test_rgb_loss_matches_elementwise_oracle():
    g = torch.Generator().manual_seed(0)
    a = torch.rand(13, 7, 3, dtype=F64, generator=g)
    b = torch.rand(13, 7, 3, dtype=F64, generator=g)
    expected = sum(abs(float(x) - float(y)) for x, y in zip(a.flatten(), b.flatten())) / a.numel()
    assert abs(float(loss_rgb(a, b)) - expected) < 1e-7


def test_perceptual_zero_on_identical_for_any_extractor():
    g = torch.Generator().manual_seed(1)
    img = torch.rand(32, 32, 3, dtype=F64, generator=g)
    assert float(loss_perceptual(img, img)) == 0.0
    assert float(loss_perceptual(img, img, extractor=lambda t: [t, t * 2.0])) == 0.0


def test_perceptual_constant_shift_hits_only_image_maps():
    g = torch.Generator().manual_seed(2)
    img = torch.rand(32, 32, 3, dtype=F64, generator=g)
    shifted = img + 0.2
    fa = pyramid_extractor(img)
    fb = pyramid_extractor(shifted)
    # maps come in (image, dx, dy) triples per level
    assert len(fa) == 12
    for level in range(4):
        image_diff = float((fa[3 * level] - fb[3 * level]).abs().mean())
        dx_diff = float((fa[3 * level + 1] - fb[3 * level + 1]).abs().mean())
        dy_diff = float((fa[3 * level + 2] - fb[3 * level + 2]).abs().mean())
        assert abs(image_diff - 0.2) < 1e-12
        assert dx_diff < 1e-12 and dy_diff < 1e-12
    assert abs(float(loss_perceptual(img, shifted)) - 0.8) < 1e-12


def test_perceptual_pluggable_extractor():
    g = torch.Generator().manual_seed(3)
    img = torch.rand(16, 16, 3, dtype=F64, generator=g)
    val = loss_perceptual(img, img + 0.1, extractor=lambda t: [t])
    assert abs(float(val) - 0.1) < 1e-12


def test_pyramid_halves_resolution():
    img = torch.zeros(32, 32, 3, dtype=F64)
    maps = pyramid_extractor(img)
    sizes = [tuple(m.shape[-2:]) for m in maps[::3]]
    assert sizes == [(32, 32), (16, 16), (8, 8), (4, 4)]


def test_scaling_loss_is_mean_norm():
    log_scale = torch.log(torch.tensor([[3.0, 4.0, 1e-300]], dtype=F64))
    assert abs(float(loss_scaling(log_scale)) - 5.0) < 1e-12
    common = torch.log(torch.full((7, 3), 2.0, dtype=F64))
    assert abs(float(loss_scaling(common)) - 2.0 * math.sqrt(3.0)) < 1e-12


def test_scaling_loss_empty_warns_and_returns_zero(caplog):
    with caplog.at_level("WARNING"):
        val = loss_scaling(torch.zeros(0, 3, dtype=F64))
    assert float(val) == 0.0
    assert any("zero primitives" in r.message for r in caplog.records)


def test_total_loss_combination():
    rgb = torch.tensor(1.0, dtype=F64)
    perc = torch.tensor(0.5, dtype=F64)
    scal = torch.tensor(0.2, dtype=F64)
    assert abs(float(total_loss(rgb, perc, scal)) - 1.07) < 1e-12
    assert float(total_loss(rgb)) == 1.0
    assert float(total_loss(rgb, perc, scal, lambda_perceptual=0.0, lambda_scaling=0.0)) == 1.0
    assert LAMBDA_PERCEPTUAL == 0.1 and LAMBDA_SCALING == 0.1


def test_total_loss_gradient_is_weighted_sum():
    g = torch.Generator().manual_seed(4)
    x = torch.rand(6, 6, 3, dtype=F64, generator=g).requires_grad_(True)
    target = torch.rand(6, 6, 3, dtype=F64, generator=g)
    log_scale = torch.randn(5, 3, dtype=F64, generator=g).requires_grad_(True)

    def parts(px, ps):
        return loss_rgb(px, target), loss_perceptual(px, target, extractor=lambda t: [t]), loss_scaling(ps)

    r, p, s = parts(x, log_scale)
    total_loss(r, p, s).backward()
    gx, gs = x.grad.clone(), log_scale.grad.clone()

    x.grad = None
    log_scale.grad = None
    r, p, s = parts(x, log_scale)
    (r + 0.1 * p).backward()
    (0.1 * parts(x, log_scale)[2]).backward()
    assert torch.allclose(gx, x.grad, atol=1e-14)
    assert torch.allclose(gs, log_scale.grad, atol=1e-14)
