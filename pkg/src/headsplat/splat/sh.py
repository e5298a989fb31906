"""Real spherical harmonics up to degree 3: evaluation and rotation.

View-dependent color is stored as per-channel SH coefficients; the rendered
color is clamp(sum_i c_i Y_i(dir) + 0.5, 0, 1). Rotating a primitive rotates
its radiance field, which maps to an orthogonal block-diagonal transform of
the coefficients. Band blocks are built from function values at fixed sample
directions, so rotation and evaluation can never drift apart.
"""

from __future__ import annotations

import torch

MAX_DEGREE = 3

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

# per-band unit sample directions with well-conditioned basis matrices
# (condition numbers 1.50, 1.80, 3.08)
_BAND_POINTS = {
    1: [
        [0.8110073993, 0.2358029385, 0.5354100975],
        [-0.2431573012, -0.5092613859, 0.8255467084],
        [0.1424683857, -0.8368970125, -0.5284942286],
    ],
    2: [
        [0.8361029403, 0.0460000674, 0.5466405281],
        [0.8369076829, 0.173212495, -0.5192137921],
        [-0.0829194111, -0.4094880876, -0.9085394198],
        [0.6115872503, 0.7778893, 0.1443927708],
        [-0.0164905668, -0.3517659839, 0.9359427086],
    ],
    3: [
        [-0.6988445238, -0.219481693, -0.6807673009],
        [0.8436106087, 0.492438851, 0.2140680237],
        [0.7299573626, -0.3146020445, -0.6067848073],
        [-0.1121082975, 0.1738896679, 0.9783629761],
        [0.9646439924, -0.2245116248, 0.1380452763],
        [-0.3293953095, -0.6276970157, -0.7053333868],
        [0.6080926111, 0.2226434718, -0.7620060766],
    ],
}


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def band_values(dirs: torch.Tensor, band: int) -> torch.Tensor:
    """Basis functions of one band at unit directions (..., 3) -> (..., 2*band+1)."""
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    if band == 0:
        return torch.full_like(x, C0).unsqueeze(-1)
    if band == 1:
        return torch.stack([-C1 * y, C1 * z, -C1 * x], dim=-1)
    if band == 2:
        xx, yy, zz = x * x, y * y, z * z
        return torch.stack(
            [
                C2[0] * x * y,
                C2[1] * y * z,
                C2[2] * (2 * zz - xx - yy),
                C2[3] * x * z,
                C2[4] * (xx - yy),
            ],
            dim=-1,
        )
    if band == 3:
        xx, yy, zz = x * x, y * y, z * z
        return torch.stack(
            [
                C3[0] * y * (3 * xx - yy),
                C3[1] * x * y * z,
                C3[2] * y * (4 * zz - xx - yy),
                C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
                C3[4] * x * (4 * zz - xx - yy),
                C3[5] * z * (xx - yy),
                C3[6] * x * (xx - 3 * yy),
            ],
            dim=-1,
        )
    raise ValueError(f"unsupported band {band}")


def sh_basis(dirs: torch.Tensor, degree: int) -> torch.Tensor:
    """All basis values through `degree`: (..., 3) -> (..., (degree+1)^2)."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {MAX_DEGREE}], got {degree}")
    return torch.cat([band_values(dirs, b) for b in range(degree + 1)], dim=-1)


def eval_sh(coeffs: torch.Tensor, dirs: torch.Tensor, degree: int) -> torch.Tensor:
    """Radiance toward `dirs`: coeffs (N, 3, M), dirs (N, 3) -> raw RGB (N, 3).

    Raw values are centered at zero; add 0.5 and clamp for display color.
    """
    basis = sh_basis(dirs, degree)  # (N, M)
    return torch.einsum("ncm,nm->nc", coeffs[:, :, : num_coeffs(degree)], basis)


def sh_to_color(coeffs: torch.Tensor, dirs: torch.Tensor, degree: int) -> torch.Tensor:
    return (eval_sh(coeffs, dirs, degree) + 0.5).clamp(0.0, 1.0)


def _band_inverses(dtype=torch.float64) -> dict[int, torch.Tensor]:
    inv = {}
    for band, pts in _BAND_POINTS.items():
        p = torch.tensor(pts, dtype=dtype)
        inv[band] = torch.linalg.inv(band_values(p, band))
    return inv


_BAND_INV = _band_inverses()


def band_rotation(rot: torch.Tensor, band: int) -> torch.Tensor:
    """Orthogonal matrix A with Y_band(R d) = A @ Y_band(d), rot (..., 3, 3)."""
    if band == 0:
        return torch.ones(*rot.shape[:-2], 1, 1, dtype=rot.dtype, device=rot.device)
    pts = torch.tensor(_BAND_POINTS[band], dtype=rot.dtype, device=rot.device)
    rotated = torch.einsum("...ab,kb->...ka", rot, pts)  # (..., 2b+1, 3)
    y_rot = band_values(rotated, band)  # rows: Y(R p_k)
    inv = _BAND_INV[band].to(dtype=rot.dtype, device=rot.device)
    # rows satisfy Y(R p_k) = A Y(p_k); solve for A from the fixed samples
    return y_rot.transpose(-1, -2) @ inv.transpose(-1, -2)


def rotate_sh(coeffs: torch.Tensor, rot: torch.Tensor, degree: int) -> torch.Tensor:
    """Rotate the radiance field: eval(rotate_sh(c, R), R d) == eval(c, d).

    coeffs (N, 3, M), rot (N, 3, 3) or (3, 3).
    """
    if rot.dim() == 2:
        rot = rot.expand(coeffs.shape[0], 3, 3)
    out = coeffs.clone()
    for band in range(1, degree + 1):
        lo, hi = band * band, (band + 1) * (band + 1)
        block = band_rotation(rot, band)  # (N, 2b+1, 2b+1)
        out[:, :, lo:hi] = torch.einsum("nab,ncb->nca", block, coeffs[:, :, lo:hi])
    return out
