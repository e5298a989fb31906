import math

import torch

from headsplat.rotations import axis_angle_to_matrix
from headsplat.splat.sh import (
    band_rotation,
    eval_sh,
    num_coeffs,
    rotate_sh,
    sh_basis,
    sh_to_color,
)

F64 = torch.float64


def rand_dirs(n, seed=0):
    g = torch.Generator().manual_seed(seed)
    d = torch.randn(n, 3, generator=g, dtype=F64)
    return d / d.norm(dim=1, keepdim=True)


def rand_rots(n, seed=0):
    g = torch.Generator().manual_seed(seed)
    aa = torch.randn(n, 3, generator=g, dtype=F64)
    return axis_angle_to_matrix(aa)


def test_constant_band_value():
    dirs = rand_dirs(10)
    basis = sh_basis(dirs, 0)
    assert torch.allclose(basis, torch.full((10, 1), 1.0 / (2.0 * math.sqrt(math.pi)), dtype=F64))


def test_dc_coefficient_sets_flat_color():
    # c0 = (color - 0.5) / Y00 makes the radiance constant at `color`
    y00 = 1.0 / (2.0 * math.sqrt(math.pi))
    coeffs = torch.zeros(1, 3, 16, dtype=F64)
    coeffs[0, :, 0] = (torch.tensor([0.7, 0.2, 0.5], dtype=F64) - 0.5) / y00
    for seed in range(3):
        color = sh_to_color(coeffs, rand_dirs(1, seed=seed), 3)
        assert torch.allclose(color[0], torch.tensor([0.7, 0.2, 0.5], dtype=F64), atol=1e-12)


def test_color_clamped_to_unit_range():
    coeffs = torch.zeros(1, 3, 1, dtype=F64)
    coeffs[0, 0, 0] = 100.0
    coeffs[0, 1, 0] = -100.0
    color = sh_to_color(coeffs, rand_dirs(1), 0)
    assert float(color[0, 0]) == 1.0 and float(color[0, 1]) == 0.0


def test_band_orthonormality_under_integration():
    # Monte Carlo over the sphere: <Y_i, Y_j> = delta_ij / (4 pi) * 4 pi
    g = torch.Generator().manual_seed(99)
    d = torch.randn(400_000, 3, generator=g, dtype=F64)
    d = d / d.norm(dim=1, keepdim=True)
    basis = sh_basis(d, 3)  # (M, 16)
    gram = 4.0 * math.pi * basis.T @ basis / d.shape[0]
    assert (gram - torch.eye(16, dtype=F64)).abs().max() < 0.05


def test_band_rotation_matrices_are_orthogonal():
    rots = rand_rots(20, seed=5)
    for band in (1, 2, 3):
        block = band_rotation(rots, band)
        eye = torch.eye(2 * band + 1, dtype=F64)
        assert (block @ block.transpose(1, 2) - eye).abs().max() < 1e-10


def test_identity_rotation_is_identity_transform():
    coeffs = torch.randn(5, 3, 16, dtype=F64, generator=torch.Generator().manual_seed(1))
    out = rotate_sh(coeffs, torch.eye(3, dtype=F64), 3)
    assert (out - coeffs).abs().max() < 1e-12


def test_rotation_composes():
    g = torch.Generator().manual_seed(2)
    coeffs = torch.randn(4, 3, 16, dtype=F64, generator=g)
    ra, rb = rand_rots(4, seed=3), rand_rots(4, seed=4)
    once = rotate_sh(rotate_sh(coeffs, ra, 3), rb, 3)
    both = rotate_sh(coeffs, rb @ ra, 3)
    assert (once - both).abs().max() < 1e-10


def test_rotate_then_eval_matches_eval_at_inverse_direction():
    # 100 trials across degrees 0..3: eval(rotate(c, R), R d) == eval(c, d)
    g = torch.Generator().manual_seed(42)
    for trial in range(100):
        degree = trial % 4
        m = num_coeffs(degree)
        coeffs = torch.randn(8, 3, m, dtype=F64, generator=g)
        rot = rand_rots(8, seed=1000 + trial)
        dirs = rand_dirs(8, seed=2000 + trial)
        rotated_dirs = torch.einsum("nab,nb->na", rot, dirs)
        lhs = eval_sh(rotate_sh(coeffs, rot, degree), rotated_dirs, degree)
        rhs = eval_sh(coeffs, dirs, degree)
        assert (lhs - rhs).abs().max() < 1e-6


def test_rotation_gradients_flow_to_rotation():
    coeffs = torch.randn(2, 3, 16, dtype=F64, generator=torch.Generator().manual_seed(8))
    aa = torch.tensor([0.2, -0.4, 0.1], dtype=F64, requires_grad=True)

    def fn(a):
        return rotate_sh(coeffs, axis_angle_to_matrix(a), 3).sum()

    assert torch.autograd.gradcheck(fn, (aa,), eps=1e-6, atol=1e-8)
